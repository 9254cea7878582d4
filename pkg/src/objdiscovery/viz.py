"""Rendering: discovery overlays, confidence heat maps and match pictures."""
from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

FINAL_COLOR = (255, 0, 0)
PART_COLORS = [(255, 220, 0), (0, 200, 255), (0, 255, 120), (255, 120, 220), (255, 150, 0)]


def to_rgb(image: np.ndarray) -> Image.Image:
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr * 255.0 if arr.max() <= 1.0 else arr), 0, 255).astype(np.uint8)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    return Image.fromarray(arr[..., :3])


def _line_width(img: Image.Image) -> int:
    return max(1, round(min(img.size) / 160))


def _rect(draw: ImageDraw.ImageDraw, box, color, width: int) -> None:
    x0, y0, x1, y1 = (float(v) for v in box)
    draw.rectangle([x0, y0, max(x0, x1 - 1), max(y0, y1 - 1)], outline=color, width=width)


def draw_overlay(image: np.ndarray, box, part_boxes: Sequence = ()) -> Image.Image:
    """Final box in red over its part boxes in other colors."""
    img = to_rgb(image)
    draw = ImageDraw.Draw(img)
    width = _line_width(img)
    for i, part in enumerate(part_boxes):
        _rect(draw, part, PART_COLORS[i % len(PART_COLORS)], max(1, width - 1))
    _rect(draw, box, FINAL_COLOR, width + 1)
    return img


def heat_map(boxes: np.ndarray, confidence: np.ndarray, image_dims: Tuple[int, int]) -> np.ndarray:
    """Per-pixel max confidence over the regions covering the pixel, as ``uint8``.

    A pixel is covered when its center lies in the box. Values are scaled so
    the largest becomes 255; an all-zero map stays zero.
    """
    width, height = image_dims
    out = np.zeros((height, width))
    boxes = np.asarray(boxes, dtype=np.float64)
    confidence = np.asarray(confidence, dtype=np.float64)
    # ceil(v - 0.5) is the first pixel whose center is >= v
    cols0 = np.clip(np.ceil(boxes[:, 0] - 0.5), 0, width).astype(int)
    rows0 = np.clip(np.ceil(boxes[:, 1] - 0.5), 0, height).astype(int)
    cols1 = np.clip(np.floor(boxes[:, 2] - 0.5) + 1, 0, width).astype(int)
    rows1 = np.clip(np.floor(boxes[:, 3] - 0.5) + 1, 0, height).astype(int)
    for i in np.argsort(confidence, kind="stable"):
        if confidence[i] <= 0:
            continue
        view = out[rows0[i]:rows1[i], cols0[i]:cols1[i]]
        np.maximum(view, confidence[i], out=view)
    top = out.max()
    if top > 0:
        out *= 255.0 / top
    return np.round(out).astype(np.uint8)


def confidence_color(t: float) -> Tuple[int, int, int]:
    """Blue for weak through green to red for strong, ``t`` in [0, 1]."""
    t = float(np.clip(t, 0.0, 1.0))
    if t < 0.5:
        u = t / 0.5
        return (0, int(round(255 * u)), int(round(255 * (1 - u))))
    u = (t - 0.5) / 0.5
    return (int(round(255 * u)), int(round(255 * (1 - u))), 0)


def draw_matches(image_a: np.ndarray, image_b: np.ndarray, boxes_a: np.ndarray,
                 boxes_b: np.ndarray, matches: Sequence[Tuple[int, int, float]]) -> Image.Image:
    """Side-by-side picture of matched region pairs colored by confidence.

    The strongest match is red; the rest fade toward blue in proportion to
    their confidence.
    """
    a, b = to_rgb(image_a), to_rgb(image_b)
    height = max(a.height, b.height)
    canvas = Image.new("RGB", (a.width + b.width, height), (0, 0, 0))
    canvas.paste(a, (0, 0))
    canvas.paste(b, (a.width, 0))
    draw = ImageDraw.Draw(canvas)
    width = _line_width(canvas)
    top = max((c for _, _, c in matches), default=0.0)
    # weakest first so the strongest end up on top
    for r, q, c in sorted(matches, key=lambda m: (m[2], -m[0], -m[1])):
        color = confidence_color(c / top if top > 0 else 0.0)
        ba = boxes_a[r]
        bb = np.asarray(boxes_b[q], dtype=np.float64) + [a.width, 0, a.width, 0]
        _rect(draw, ba, color, width)
        _rect(draw, bb, color, width)
        ca = ((ba[0] + ba[2]) / 2, (ba[1] + ba[3]) / 2)
        cb = ((bb[0] + bb[2]) / 2, (bb[1] + bb[3]) / 2)
        draw.line([ca, cb], fill=color, width=1)
    return canvas


def save_png(img, path) -> None:
    if isinstance(img, np.ndarray):
        img = Image.fromarray(img)
    img.save(path, format="PNG", optimize=False)
