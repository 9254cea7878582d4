"""Localization and retrieval metrics: CorLoc, CorRet and the retrieval confusion matrix."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .geometry import BoundingBox, iou

IOU_THRESHOLD = 0.5


class EmptyEvaluationError(ValueError):
    """No image qualifies for the requested evaluation."""


@dataclass(frozen=True)
class ImageAnnotation:
    labels: frozenset
    boxes: Tuple[Tuple[str, BoundingBox], ...] = ()

    def __post_init__(self):
        for label, _ in self.boxes:
            if label not in self.labels:
                raise ValueError(f"box label {label!r} missing from image labels {set(self.labels)}")


GroundTruth = Mapping[object, ImageAnnotation]


def annotation(labels: Sequence[str], boxes: Sequence = ()) -> ImageAnnotation:
    """Build an :class:`ImageAnnotation` from labels and ``(label, box)`` pairs."""
    out = []
    for label, box in boxes:
        if not isinstance(box, BoundingBox):
            box = BoundingBox.from_array(box)
        out.append((label, box))
    return ImageAnnotation(frozenset(labels), tuple(out))


def classes_of(gt: GroundTruth) -> List[str]:
    return sorted({label for ann in gt.values() for label in ann.labels})


def _as_box(box) -> BoundingBox:
    return box if isinstance(box, BoundingBox) else BoundingBox.from_array(box)


def localized(pred, ann: ImageAnnotation, label: Optional[str] = None,
              threshold: float = IOU_THRESHOLD) -> bool:
    """True when ``pred`` overlaps some ground-truth box (of ``label``) with IoU > threshold."""
    pred = _as_box(pred)
    return any(iou(pred, box) > threshold for lbl, box in ann.boxes
               if label is None or lbl == label)


def corloc(predictions: Mapping, gt: GroundTruth, class_filter: Optional[str] = None) -> float:
    """Percentage of evaluated images whose predicted box is correct.

    Without a filter every image with a ground-truth box is evaluated and
    any box counts; with ``class_filter`` every image labeled with that class
    is evaluated against that class's boxes.
    """
    evaluated = correct = 0
    for image_id, ann in gt.items():
        if class_filter is None:
            if not ann.boxes:
                continue
        else:
            if class_filter not in ann.labels:
                continue
            if not any(lbl == class_filter for lbl, _ in ann.boxes):
                raise ValueError(f"image {image_id!r} is labeled {class_filter!r} "
                                 "but has no box of that class")
        if image_id not in predictions:
            raise KeyError(f"no prediction for image {image_id!r}")
        evaluated += 1
        correct += localized(predictions[image_id], ann, class_filter)
    if evaluated == 0:
        raise EmptyEvaluationError(f"no images to evaluate for class filter {class_filter!r}")
    return 100.0 * correct / evaluated


def corloc_any(predictions: Mapping, gt: GroundTruth) -> float:
    """CorLoc where a match with a box of any class counts."""
    return corloc(predictions, gt, None)


def _labels(gt: GroundTruth, image_id) -> frozenset:
    ann = gt.get(image_id)
    return ann.labels if ann is not None else frozenset()


def corret(neighbors: Mapping, gt: GroundTruth, class_filter: Optional[str] = None) -> float:
    """Mean percentage of retrieved neighbors sharing a class label with the image.

    Images without labels (outliers) are not evaluated; as neighbors they
    never count as correct.
    """
    fractions = []
    for image_id, ann in gt.items():
        if not ann.labels or (class_filter is not None and class_filter not in ann.labels):
            continue
        if image_id not in neighbors:
            raise KeyError(f"no neighbors for image {image_id!r}")
        nbrs = list(neighbors[image_id])
        if not nbrs:
            raise ValueError(f"image {image_id!r} has an empty neighbor list")
        hits = sum(bool(_labels(gt, j) & ann.labels) for j in nbrs)
        fractions.append(hits / len(nbrs))
    if not fractions:
        raise EmptyEvaluationError(f"no images to evaluate for class filter {class_filter!r}")
    return 100.0 * float(np.mean(fractions))


def confusion_matrix(neighbors: Mapping, gt: GroundTruth,
                     classes: Optional[Sequence[str]] = None) -> Tuple[List[str], np.ndarray]:
    """Row ``a``, column ``b``: mean percentage of neighbors of class-``a`` images labeled ``b``.

    A neighbor with several labels splits its weight evenly between them,
    and unlabeled neighbors add nothing, so rows sum to at most 100.
    """
    classes = list(classes) if classes is not None else classes_of(gt)
    col = {c: i for i, c in enumerate(classes)}
    sums = np.zeros((len(classes), len(classes)))
    counts = np.zeros(len(classes))
    for image_id, ann in gt.items():
        if not ann.labels:
            continue
        nbrs = list(neighbors.get(image_id, ()))
        if not nbrs:
            continue
        row = np.zeros(len(classes))
        for j in nbrs:
            labels = [c for c in _labels(gt, j) if c in col]
            for c in labels:
                row[col[c]] += 1.0 / len(labels)
        row *= 100.0 / len(nbrs)
        for label in ann.labels:
            if label in col:
                sums[col[label]] += row
                counts[col[label]] += 1
    with np.errstate(invalid="ignore"):
        matrix = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], 0.0)
    return classes, matrix


@dataclass
class EvalReport:
    mode: str
    classes: List[str]
    corloc: Dict[str, float]
    corloc_average: float
    corret: Dict[str, float] = field(default_factory=dict)
    corret_average: Optional[float] = None
    corloc_any: Optional[float] = None
    corret_any: Optional[float] = None
    confusion: Optional[List[List[float]]] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        headers = ["Metric"] + self.classes + ["Average"]
        with_any = self.corloc_any is not None
        if with_any:
            headers.append("any")

        def fmt(v):
            return "-" if v is None else f"{v:.2f}"

        rows = [["CorLoc"] + [fmt(self.corloc.get(c)) for c in self.classes]
                + [fmt(self.corloc_average)] + ([fmt(self.corloc_any)] if with_any else [])]
        if self.corret:
            rows.append(["CorRet"] + [fmt(self.corret.get(c)) for c in self.classes]
                        + [fmt(self.corret_average)]
                        + ([fmt(self.corret_any)] if with_any else []))
        widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
        lines = ["  ".join(cell.rjust(w) if i else cell.ljust(w)
                           for i, (cell, w) in enumerate(zip(r, widths)))
                 for r in [headers] + rows]
        return "\n".join(lines) + "\n"

    def confusion_csv(self) -> str:
        if self.confusion is None:
            return ""
        lines = ["class," + ",".join(self.classes)]
        for c, row in zip(self.classes, self.confusion):
            lines.append(c + "," + ",".join(f"{v:.4f}" for v in row))
        return "\n".join(lines) + "\n"


def evaluate(predictions: Mapping, gt: GroundTruth, neighbors: Optional[Mapping] = None,
             mode: str = "mixed") -> EvalReport:
    """Per-class and averaged metrics.

    ``separate`` mode scores each class on the images labeled with it;
    ``mixed`` mode additionally reports the any-class variants and the
    retrieval confusion matrix.
    """
    if mode not in ("separate", "mixed"):
        raise ValueError(f"mode must be 'separate' or 'mixed', got {mode!r}")
    classes = classes_of(gt)
    if not classes:
        raise EmptyEvaluationError("ground truth has no class labels")
    loc = {c: corloc(predictions, gt, c) for c in classes}
    report = EvalReport(mode, classes, loc, float(np.mean(list(loc.values()))))
    if neighbors is not None:
        ret = {c: corret(neighbors, gt, c) for c in classes}
        report.corret = ret
        report.corret_average = float(np.mean(list(ret.values())))
    if mode == "mixed":
        report.corloc_any = corloc_any(predictions, gt)
        if neighbors is not None:
            report.corret_any = corret(neighbors, gt)
            _, matrix = confusion_matrix(neighbors, gt, classes)
            report.confusion = matrix.tolist()
    return report
