"""
Output storage utilities - plain CSV/JSON files only
"""
from .output_dir import open_output_dir, get_output_dir
from .file_utils import write_csv, write_json, read_json, content_hash, file_hash, atomic_write

__all__ = [
    "open_output_dir",
    "get_output_dir",
    "write_csv",
    "write_json",
    "read_json",
    "content_hash",
    "file_hash",
    "atomic_write",
]
