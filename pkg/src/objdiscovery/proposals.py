"""Candidate regions per image: CSV ingestion and a built-in grid generator."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import BoundingBox, Location, locations

logger = logging.getLogger(__name__)

MAX_PROPOSALS = 4000


class ProposalParseError(ValueError):
    """A proposal file could not be parsed."""


@dataclass(frozen=True)
class Region:
    id: int
    box: BoundingBox
    location: Location
    descriptor: Optional[np.ndarray] = None


@dataclass(eq=False)
class RegionSet:
    """Ordered proposals of one image; region ids are row indices."""

    image_id: object
    boxes: np.ndarray
    image_dims: Tuple[int, int]
    descriptors: Optional[np.ndarray] = None
    dropped: int = 0
    _locations: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        if self.boxes.shape[0] == 0:
            raise ValueError(f"image {self.image_id!r} has no proposals")
        self.image_dims = (int(self.image_dims[0]), int(self.image_dims[1]))
        if self.descriptors is not None and self.descriptors.shape[0] != self.boxes.shape[0]:
            raise ValueError("descriptor count does not match box count")

    def __len__(self):
        return self.boxes.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RegionSet):
            return NotImplemented
        same_desc = (self.descriptors is None and other.descriptors is None) or (
            self.descriptors is not None and other.descriptors is not None
            and np.array_equal(self.descriptors, other.descriptors))
        return (self.image_id == other.image_id and self.image_dims == other.image_dims
                and np.array_equal(self.boxes, other.boxes) and same_desc)

    @property
    def locations(self) -> np.ndarray:
        if self._locations is None:
            self._locations = locations(self.boxes)
        return self._locations

    @property
    def regions(self) -> List[Region]:
        out = []
        for i, row in enumerate(self.boxes):
            box = BoundingBox.from_array(row)
            desc = None if self.descriptors is None else self.descriptors[i]
            out.append(Region(i, box, box.location(), desc))
        return out

    def subset(self, ids) -> "RegionSet":
        ids = np.asarray(ids, dtype=np.intp)
        desc = None if self.descriptors is None else self.descriptors[ids]
        return RegionSet(self.image_id, self.boxes[ids], self.image_dims, desc)

    def with_descriptors(self, descriptors: np.ndarray) -> "RegionSet":
        return RegionSet(self.image_id, self.boxes, self.image_dims,
                         np.asarray(descriptors, dtype=np.float64), self.dropped)


def _clamp_and_filter(boxes: np.ndarray, width: float, height: float):
    boxes = boxes.copy()
    boxes[:, [0, 2]] = np.clip(boxes[:, [0, 2]], 0.0, width)
    boxes[:, [1, 3]] = np.clip(boxes[:, [1, 3]], 0.0, height)
    good = (boxes[:, 0] < boxes[:, 2]) & (boxes[:, 1] < boxes[:, 3])
    return boxes[good], int((~good).sum())


def load_proposals(path, image_dims, image_id=None,
                   max_proposals: int = MAX_PROPOSALS) -> RegionSet:
    """Read ``x_min,y_min,x_max,y_max`` lines from a CSV proposal file.

    Boxes are clamped to the image; boxes that become degenerate are dropped
    and counted in ``RegionSet.dropped``. Files with more than
    ``max_proposals`` boxes are truncated in reading order.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"proposal file not found: {path}")
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split(",")
            if len(parts) != 4:
                raise ProposalParseError(
                    f"{path}:{lineno}: expected 4 comma-separated values, got {len(parts)}")
            try:
                values = [float(p) for p in parts]
            except ValueError:
                raise ProposalParseError(f"{path}:{lineno}: non-numeric value in {text!r}") from None
            if not all(math.isfinite(v) for v in values):
                raise ProposalParseError(f"{path}:{lineno}: non-finite value in {text!r}")
            rows.append(values)
    if not rows:
        raise ProposalParseError(f"{path}: no proposals")
    width, height = image_dims
    boxes, dropped = _clamp_and_filter(np.array(rows), width, height)
    if dropped:
        logger.warning("%s: dropped %d degenerate proposals", path, dropped)
    if boxes.shape[0] > max_proposals:
        logger.warning("%s: truncating %d proposals to %d", path, boxes.shape[0], max_proposals)
        boxes = boxes[:max_proposals]
    if boxes.shape[0] == 0:
        raise ProposalParseError(f"{path}: every proposal is degenerate after clamping")
    return RegionSet(image_id if image_id is not None else path.stem, boxes,
                     (width, height), dropped=dropped)


def save_proposals(region_set: RegionSet, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("# x_min,y_min,x_max,y_max\n")
        for row in region_set.boxes:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


@dataclass(frozen=True)
class GeneratorConfig:
    """Multi-scale sliding-grid generator settings.

    Box sides run from ``max_scale`` down to ``min_scale`` of ``min(W, H)``
    in steps of ``scale_step``; sides below ``min_box_side`` pixels are
    skipped because an 8x8-cell descriptor of them is mostly interpolation.
    """

    min_scale: float = 0.1
    max_scale: float = 1.0
    scale_step: float = math.sqrt(2.0)
    aspect_ratios: Tuple[float, ...] = (0.5, 1.0, 2.0)
    stride: float = 0.5
    min_box_side: float = 16.0
    max_proposals: int = MAX_PROPOSALS
    include_full_frame: bool = True


def _positions(extent: float, side: float, stride: float) -> np.ndarray:
    last = max(extent - side, 0.0)
    pos = np.arange(0.0, last + 1e-9, stride)
    if pos.size == 0 or last - pos[-1] > 1e-9:
        pos = np.append(pos, last)
    return pos


def generate_proposals(image_or_dims, config: GeneratorConfig = GeneratorConfig(),
                       image_id=None) -> RegionSet:
    """Deterministic multi-scale, multi-aspect grid of boxes.

    ``image_or_dims`` is an image array or a ``(width, height)`` pair.
    """
    if isinstance(image_or_dims, tuple) and len(image_or_dims) == 2:
        width, height = image_or_dims
    else:
        arr = np.asarray(image_or_dims)
        if arr.ndim < 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError("empty image")
        height, width = arr.shape[:2]
    width, height = float(width), float(height)
    short = min(width, height)

    sides = []
    s = config.max_scale * short
    while s >= config.min_scale * short - 1e-9:
        if s >= config.min_box_side:
            sides.append(s)
        s /= config.scale_step

    chunks = []
    if config.include_full_frame:
        chunks.append(np.array([[0.0, 0.0, width, height]]))
    for side in sides:
        for aspect in config.aspect_ratios:
            w = min(side * math.sqrt(aspect), width)
            h = min(side / math.sqrt(aspect), height)
            xs = _positions(width, w, config.stride * w)
            ys = _positions(height, h, config.stride * h)
            gy, gx = np.meshgrid(ys, xs, indexing="ij")
            gx, gy = gx.ravel(), gy.ravel()
            chunks.append(np.stack([gx, gy, gx + w, gy + h], axis=1))
    boxes = np.round(np.concatenate(chunks), 3)
    boxes[:, [0, 2]] = np.clip(boxes[:, [0, 2]], 0.0, width)
    boxes[:, [1, 3]] = np.clip(boxes[:, [1, 3]], 0.0, height)
    _, first = np.unique(boxes, axis=0, return_index=True)
    boxes = boxes[np.sort(first)]
    boxes = boxes[(boxes[:, 0] < boxes[:, 2]) & (boxes[:, 1] < boxes[:, 3])]
    if boxes.shape[0] > config.max_proposals:
        logger.warning("generator produced %d boxes; truncating to %d",
                       boxes.shape[0], config.max_proposals)
        boxes = boxes[:config.max_proposals]
    logger.debug("generated %d proposals for %gx%g image", boxes.shape[0], width, height)
    return RegionSet(image_id, boxes, (int(round(width)), int(round(height))))


def ensure_full_frame(region_set: RegionSet) -> RegionSet:
    """Append the whole-image box when it is not already a proposal."""
    width, height = region_set.image_dims
    full = np.array([0.0, 0.0, float(width), float(height)])
    if np.any(np.all(region_set.boxes == full, axis=1)):
        return region_set
    boxes = np.vstack([region_set.boxes, full])
    desc = region_set.descriptors
    if desc is not None:
        raise ValueError("add the full-frame box before computing descriptors")
    return RegionSet(region_set.image_id, boxes, region_set.image_dims, dropped=region_set.dropped)


def full_frame_index(region_set: RegionSet) -> int:
    width, height = region_set.image_dims
    full = np.array([0.0, 0.0, float(width), float(height)])
    hits = np.flatnonzero(np.all(region_set.boxes == full, axis=1))
    if hits.size == 0:
        raise ValueError(f"image {region_set.image_id!r} has no full-frame region")
    return int(hits[0])
