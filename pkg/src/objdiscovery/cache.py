"""On-disk descriptor cache.

One ``.npz`` record per (image content, descriptor parameters, proposal
boxes). Every record stores its own key and format version; anything that
fails to load or verify is treated as a miss and recomputed.
"""
from __future__ import annotations

import hashlib
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .descriptors import (CELL_EPS, DESCRIPTOR_DIM, DESCRIPTOR_VERSION, GRID, NORM_FLOOR,
                          ORIENTATIONS)

logger = logging.getLogger(__name__)

CACHE_ENV = "OBJDISCO_CACHE_DIR"
FORMAT_VERSION = 1
SUFFIX = ".npz"


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "objdiscovery"


def _digest(*parts: bytes) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(len(part).to_bytes(8, "little"))
        h.update(part)
    return h.hexdigest()


def image_hash(image: np.ndarray) -> str:
    image = np.ascontiguousarray(image)
    return _digest(str(image.dtype).encode(), repr(image.shape).encode(), image.tobytes())


def params_hash(patch_size: int) -> str:
    params = (FORMAT_VERSION, DESCRIPTOR_VERSION, patch_size, GRID, ORIENTATIONS,
              DESCRIPTOR_DIM, CELL_EPS, NORM_FLOOR)
    return _digest(repr(params).encode())


def boxes_hash(boxes: np.ndarray) -> str:
    boxes = np.ascontiguousarray(boxes, dtype="<f8")
    return _digest(repr(boxes.shape).encode(), boxes.tobytes())


@dataclass(frozen=True)
class CacheInfo:
    directory: Path
    entries: int
    bytes: int


class DescriptorCache:
    """Descriptor store keyed by image, descriptor parameters and boxes."""

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else default_cache_dir()

    def key(self, image: np.ndarray, boxes: np.ndarray, patch_size: int) -> str:
        return _digest(image_hash(image).encode(), params_hash(patch_size).encode(),
                       boxes_hash(boxes).encode())

    def path(self, key: str) -> Path:
        return self.directory / f"{key}{SUFFIX}"

    def get(self, image, boxes, patch_size: int) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        key = self.key(image, boxes, patch_size)
        path = self.path(key)
        if not path.exists():
            return None
        try:
            with np.load(path, allow_pickle=False) as data:
                if int(data["version"]) != FORMAT_VERSION or str(data["key"]) != key:
                    raise ValueError("key or version mismatch")
                desc = np.array(data["descriptors"], dtype=np.float64)
                glob = np.array(data["global"], dtype=np.float64)
            if desc.shape != (len(boxes), DESCRIPTOR_DIM) or glob.shape != (DESCRIPTOR_DIM,):
                raise ValueError("unexpected array shapes")
        except Exception as exc:  # any unreadable record is a miss
            logger.warning("discarding cache entry %s: %s", path.name, exc)
            path.unlink(missing_ok=True)
            return None
        return desc, glob

    def put(self, image, boxes, patch_size: int, descriptors: np.ndarray,
            global_descriptor: np.ndarray) -> Path:
        key = self.key(image, boxes, patch_size)
        self.directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                np.savez(fh, version=np.int64(FORMAT_VERSION), key=np.str_(key),
                         descriptors=np.asarray(descriptors, dtype=np.float64),
                         **{"global": np.asarray(global_descriptor, dtype=np.float64)})
            os.replace(tmp, self.path(key))
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        return self.path(key)

    def entries(self):
        if not self.directory.is_dir():
            return []
        return sorted(self.directory.glob(f"*{SUFFIX}"))

    def info(self) -> CacheInfo:
        files = self.entries()
        return CacheInfo(self.directory, len(files), sum(f.stat().st_size for f in files))

    def clear(self) -> int:
        files = self.entries()
        for f in files:
            f.unlink(missing_ok=True)
        return len(files)
