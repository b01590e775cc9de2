from dotenv import load_dotenv
import os

load_dotenv()


MVLAB_THREADS = int(os.getenv("MVLAB_THREADS", "0"))
MVLAB_OUT_DIR = os.getenv("MVLAB_OUT_DIR", "out")
MVLAB_LOG_LEVEL = os.getenv("MVLAB_LOG_LEVEL", "INFO")
MVLAB_CONFIG = os.getenv("MVLAB_CONFIG", "")

# Quadrature / discretization defaults
DEFAULT_PANELS = int(os.getenv("MVLAB_PANELS", "64"))
DEFAULT_BASIS_SIZE = int(os.getenv("MVLAB_BASIS_SIZE", "40"))
NODES_PER_PANEL = 16
MAX_TRUNCATION_DOUBLINGS = 4

# Particle defaults
DEFAULT_PARTICLES = int(os.getenv("MVLAB_PARTICLES", "20000"))
DEFAULT_DT = float(os.getenv("MVLAB_DT", "0.005"))
DEFAULT_HORIZON = float(os.getenv("MVLAB_HORIZON", "10.0"))
DEFAULT_SEED = int(os.getenv("MVLAB_SEED", "20240601"))
BLOWUP_THRESHOLD = 1e6
