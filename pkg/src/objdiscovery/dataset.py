"""Dataset manifests: one JSON array describing images, proposals and ground truth.

Each record looks like::

    {"image_id": "img0001", "image_path": "images/img0001.png",
     "proposal_path": "proposals/img0001.csv",          # optional
     "class_labels": ["class0"],                        # optional, evaluation only
     "ground_truth_boxes": [{"label": "class0", "box": [x0, y0, x1, y1]}]}

Relative paths resolve against the manifest's directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image

from .evaluation import ImageAnnotation, annotation
from .geometry import BoundingBox

_KNOWN_KEYS = {"image_id", "image_path", "proposal_path", "class_labels", "ground_truth_boxes"}


class ManifestError(ValueError):
    """Malformed manifest file or record."""


@dataclass
class ManifestEntry:
    image_id: str
    image_path: Path
    proposal_path: Optional[Path] = None
    class_labels: List[str] = field(default_factory=list)
    ground_truth_boxes: List[Tuple[str, BoundingBox]] = field(default_factory=list)

    @property
    def annotation(self) -> ImageAnnotation:
        return annotation(self.class_labels, self.ground_truth_boxes)


def _resolve(base: Path, value, where: str) -> Path:
    if not isinstance(value, str) or not value:
        raise ManifestError(f"{where}: path must be a non-empty string")
    path = Path(value)
    return path if path.is_absolute() else base / path


def _parse_record(rec, index: int, base: Path, source: str) -> ManifestEntry:
    where = f"{source}: record {index}"
    if not isinstance(rec, dict):
        raise ManifestError(f"{where}: expected an object")
    unknown = set(rec) - _KNOWN_KEYS
    if unknown:
        raise ManifestError(f"{where}: unknown keys {sorted(unknown)}")
    for key in ("image_id", "image_path"):
        if key not in rec:
            raise ManifestError(f"{where}: missing {key!r}")
    image_id = rec["image_id"]
    if isinstance(image_id, bool) or not isinstance(image_id, (str, int)):
        raise ManifestError(f"{where}: image_id must be a string or integer")
    image_id = str(image_id)
    where = f"{source}: record {index} ({image_id})"
    image_path = _resolve(base, rec["image_path"], where)
    proposal_path = None
    if rec.get("proposal_path") is not None:
        proposal_path = _resolve(base, rec["proposal_path"], where)
    labels = rec.get("class_labels") or []
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise ManifestError(f"{where}: class_labels must be a list of strings")
    boxes = []
    for item in rec.get("ground_truth_boxes") or []:
        if not isinstance(item, dict) or "label" not in item or "box" not in item:
            raise ManifestError(f"{where}: ground_truth_boxes entries need 'label' and 'box'")
        if item["label"] not in labels:
            raise ManifestError(f"{where}: box label {item['label']!r} not in class_labels")
        try:
            boxes.append((item["label"], BoundingBox.from_array(item["box"])))
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"{where}: bad box {item['box']!r}: {exc}") from None
    return ManifestEntry(image_id, image_path, proposal_path, list(labels), boxes)


def load_manifest(path) -> List[ManifestEntry]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestError(f"{path}: manifest not found") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, list):
        raise ManifestError(f"{path}: expected a JSON array of records")
    entries = [_parse_record(rec, i, path.parent, str(path)) for i, rec in enumerate(data)]
    seen = set()
    for e in entries:
        if e.image_id in seen:
            raise ManifestError(f"{path}: duplicate image_id {e.image_id!r}")
        seen.add(e.image_id)
    return entries


def ground_truth(entries: List[ManifestEntry]) -> Dict[str, ImageAnnotation]:
    return {e.image_id: e.annotation for e in entries}


def read_image(path) -> np.ndarray:
    """Decode an image to ``uint8``: 2-D for grayscale, ``[H, W, 3]`` otherwise."""
    with Image.open(path) as img:
        img.load()
        if img.mode not in ("L", "RGB"):
            img = img.convert("L" if img.mode in ("1", "I", "I;16", "F") else "RGB")
        return np.asarray(img, dtype=np.uint8).copy()
