"""Bounding-box arithmetic.

Scalar helpers operate on :class:`BoundingBox` values; the ``*_matrix`` and
``pairwise_*`` helpers operate on ``[N, 4]`` arrays laid out as
``(x_min, y_min, x_max, y_max)`` and are what the pipeline uses internally.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

CONTAINMENT_AREA_RATIO = 0.5
CONTAINMENT_OVERLAP = 0.8


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates: {coords}")
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"negative box coordinates: {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box: {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def location(self) -> "Location":
        return Location(
            cx=0.5 * (self.x_min + self.x_max),
            cy=0.5 * (self.y_min + self.y_max),
            scale=math.sqrt(self.area),
        )

    def within(self, width: float, height: float) -> bool:
        return self.x_max <= width and self.y_max <= height

    @classmethod
    def from_array(cls, arr) -> "BoundingBox":
        x0, y0, x1, y1 = (float(v) for v in arr)
        return cls(x0, y0, x1, y1)


@dataclass(frozen=True)
class Location:
    """Box center and scale (square root of area), in pixels."""

    cx: float
    cy: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


@dataclass(frozen=True)
class Offset:
    """Pose displacement: normalized translation and log2 scale ratio."""

    dx: float
    dy: float
    dscale: float

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.dx, self.dy, self.dscale)


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0 or h <= 0:
        return 0.0
    return w * h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    if a == b:
        return 1.0
    return inter / (a.area + b.area - inter)


def contained_in(r: BoundingBox, r_b: BoundingBox,
                 area_ratio: float = CONTAINMENT_AREA_RATIO,
                 overlap: float = CONTAINMENT_OVERLAP) -> bool:
    """Return True if ``r`` counts as a proper sub-region of ``r_b``.

    Both conditions must hold: ``r`` is smaller than ``area_ratio`` of
    ``r_b``, and at least ``overlap`` of the area of ``r`` lies inside
    ``r_b``.
    """
    if not r.area < area_ratio * r_b.area:
        return False
    return intersection_area(r, r_b) >= overlap * r.area


def offset_of(l: Location, l_prime: Location, target_dims: Tuple[float, float]) -> Offset:
    """Displacement from ``l`` to ``l_prime``.

    Translation is normalized by the geometric mean side ``sqrt(W * H)`` of
    the target image; scale change is ``log2(scale' / scale)``.
    """
    width, height = target_dims
    norm = math.sqrt(width * height)
    return Offset(
        dx=(l_prime.cx - l.cx) / norm,
        dy=(l_prime.cy - l.cy) / norm,
        dscale=math.log2(l_prime.scale / l.scale),
    )


# -- array versions ---------------------------------------------------------

def areas(boxes: np.ndarray) -> np.ndarray:
    return (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])


def locations(boxes: np.ndarray) -> np.ndarray:
    """``[N, 3]`` array of ``(cx, cy, scale)`` for ``[N, 4]`` boxes."""
    boxes = np.asarray(boxes, dtype=np.float64)
    out = np.empty((boxes.shape[0], 3))
    out[:, 0] = 0.5 * (boxes[:, 0] + boxes[:, 2])
    out[:, 1] = 0.5 * (boxes[:, 1] + boxes[:, 3])
    out[:, 2] = np.sqrt(areas(boxes))
    return out


def intersection_matrix(boxes1: np.ndarray, boxes2: np.ndarray) -> np.ndarray:
    """Pairwise intersection areas, shape ``[N, M]``."""
    w = (np.minimum(boxes1[:, None, 2], boxes2[None, :, 2])
         - np.maximum(boxes1[:, None, 0], boxes2[None, :, 0]))
    h = (np.minimum(boxes1[:, None, 3], boxes2[None, :, 3])
         - np.maximum(boxes1[:, None, 1], boxes2[None, :, 1]))
    return np.clip(w, 0, None) * np.clip(h, 0, None)


def pairwise_iou(boxes1: np.ndarray, boxes2: np.ndarray) -> np.ndarray:
    inter = intersection_matrix(boxes1, boxes2)
    union = areas(boxes1)[:, None] + areas(boxes2)[None, :] - inter
    return inter / union


def containment_matrix(boxes: np.ndarray,
                       area_ratio: float = CONTAINMENT_AREA_RATIO,
                       overlap: float = CONTAINMENT_OVERLAP,
                       chunk: int = 1024) -> np.ndarray:
    """Boolean ``[N, N]`` matrix whose entry ``(r, b)`` is ``contained_in(r, b)``."""
    boxes = np.asarray(boxes, dtype=np.float64)
    n = boxes.shape[0]
    a = areas(boxes)
    out = np.zeros((n, n), dtype=bool)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        inter = intersection_matrix(boxes[start:stop], boxes)
        ar = a[start:stop, None]
        out[start:stop] = (ar < area_ratio * a[None, :]) & (inter >= overlap * ar)
    return out


def covered_mask(boxes: np.ndarray, containers: np.ndarray,
                 overlap: float = CONTAINMENT_OVERLAP) -> np.ndarray:
    """Mask of boxes with at least ``overlap`` of their area inside some container."""
    boxes = np.asarray(boxes, dtype=np.float64)
    containers = np.asarray(containers, dtype=np.float64).reshape(-1, 4)
    if containers.shape[0] == 0 or boxes.shape[0] == 0:
        return np.zeros(boxes.shape[0], dtype=bool)
    inter = intersection_matrix(boxes, containers)
    return (inter >= overlap * areas(boxes)[:, None]).any(axis=1)


def inside_mask(boxes: np.ndarray, container) -> np.ndarray:
    """Mask of boxes lying geometrically inside ``container``."""
    x0, y0, x1, y1 = container
    return ((boxes[:, 0] >= x0) & (boxes[:, 1] >= y0)
            & (boxes[:, 2] <= x1) & (boxes[:, 3] <= y1))
