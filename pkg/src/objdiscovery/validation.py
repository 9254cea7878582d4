"""Input validation helpers shared by the estimators and the pipeline."""
from __future__ import annotations

import numpy as np


def check_image(image) -> np.ndarray:
    """Return ``image`` as a 2-D or 3-D array, rejecting empty rasters."""
    image = np.asarray(image)
    if image.ndim not in (2, 3):
        raise ValueError(f"expected a 2-D or 3-D image array, got shape {image.shape}")
    if image.shape[0] == 0 or image.shape[1] == 0:
        raise ValueError("empty image")
    if image.ndim == 3 and image.shape[2] == 0:
        raise ValueError("image has no channels")
    if image.dtype != np.uint8 and not np.issubdtype(image.dtype, np.floating):
        image = image.astype(np.float64)
    return image


def image_dims(image) -> tuple:
    """``(width, height)`` of an image array."""
    image = np.asarray(image)
    return int(image.shape[1]), int(image.shape[0])


def check_boxes(boxes, width=None, height=None) -> np.ndarray:
    """Validate an ``[N, 4]`` array of ``(x_min, y_min, x_max, y_max)`` boxes.

    Raises ``ValueError`` for degenerate boxes, negative coordinates or, when
    image dimensions are given, boxes that leave the image.
    """
    boxes = np.asarray(boxes, dtype=np.float64)
    if boxes.ndim == 1 and boxes.shape[0] == 4:
        boxes = boxes[None, :]
    if boxes.ndim != 2 or boxes.shape[1] != 4:
        raise ValueError(f"boxes must have shape [N, 4], got {boxes.shape}")
    if not np.all(np.isfinite(boxes)):
        raise ValueError("boxes contain non-finite coordinates")
    if np.any(boxes[:, 0] >= boxes[:, 2]) or np.any(boxes[:, 1] >= boxes[:, 3]):
        raise ValueError("boxes must satisfy x_min < x_max and y_min < y_max")
    if np.any(boxes[:, :2] < 0):
        raise ValueError("boxes have negative coordinates")
    if width is not None and np.any(boxes[:, 2] > width + 1e-9):
        raise ValueError(f"boxes extend beyond image width {width}")
    if height is not None and np.any(boxes[:, 3] > height + 1e-9):
        raise ValueError(f"boxes extend beyond image height {height}")
    return boxes


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)
