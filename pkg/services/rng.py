"""
Counter-based random numbers: every draw is addressed by (seed, stream, step, index)
"""
import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / float(1 << 53)

# stream ids used across the services
STREAM_SAMPLE = 0
STREAM_PARTICLE = 1
STREAM_BISMUT = 2
STREAM_FLOOR = 3


def _bit_generator(seed: int, stream: int, step: int) -> np.random.Philox:
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    counter = np.array([0, int(step) & _MASK64, 0, 0], dtype=np.uint64)
    return np.random.Philox(counter=counter, key=key)


def uniforms(seed: int, stream: int, step: int, n: int) -> np.ndarray:
    """n uniforms in the open interval (0, 1)"""
    raw = _bit_generator(seed, stream, step).random_raw(int(n))
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def normals(seed: int, stream: int, step: int, shape) -> np.ndarray:
    """Standard normals by inverse CDF of counter-based uniforms"""
    size = int(np.prod(shape))
    return ndtri(uniforms(seed, stream, step, size)).reshape(shape)
