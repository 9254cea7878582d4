"""Planted-object image collections with exact ground truth.

Each class owns one template: stripes curling around the template center
with a class-specific twist. Every class image pastes that
template, resized to a random fraction of the image side, at a random
position on a fresh noise background. Outlier images are background only.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np
from PIL import Image
from scipy import ndimage

TEMPLATE_SIZE = 64


@dataclass
class SyntheticImage:
    image_id: str
    pixels: np.ndarray
    class_labels: List[str] = field(default_factory=list)
    boxes: List[List[float]] = field(default_factory=list)


def make_template(rng: np.random.Generator, twist: float, size: int = TEMPLATE_SIZE) -> np.ndarray:
    """Dark-framed square of square-wave stripes curling around its center.

    Stripes cross every ray from the center at ``90 - twist`` degrees:
    ``twist=0`` gives concentric rings, ``twist=90`` straight spokes and
    anything between a spiral. The orientation at each pixel depends on
    where it sits relative to the center, so sub-windows only resemble the
    matching sub-window of another copy, and only a box framing the whole
    pattern looks like the whole pattern.
    """
    arms = 8
    half = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    rad = np.hypot(xx - half, yy - half)
    ang = np.arctan2(yy - half, xx - half)
    period = rng.uniform(6.0, 8.0)
    t = np.deg2rad(twist)
    # log-spiral stripes; the angular term wraps cleanly because ``arms`` is an integer
    k = 2.0 * np.pi * half / period
    phase = (np.cos(t) * k * np.log1p(rad / half) + np.sin(t) * arms * ang) / (2.0 * np.pi)
    tpl = np.where(np.mod(phase, 1.0) < 0.5, 0.9, 0.1)
    tpl[:3, :] = tpl[-3:, :] = tpl[:, :3] = tpl[:, -3:] = 0.0
    return tpl


def make_background(rng: np.random.Generator, size: int) -> np.ndarray:
    noise = rng.normal(size=(size, size))
    bg = ndimage.gaussian_filter(noise, sigma=rng.uniform(1.5, 4.0))
    bg = (bg - bg.mean()) / (bg.std() + 1e-12)
    ramp = np.linspace(-1, 1, size)
    angle = rng.uniform(0, 2 * np.pi)
    bg += 0.5 * (np.cos(angle) * ramp[None, :] + np.sin(angle) * ramp[:, None])
    return 0.5 + 0.15 * bg


def _resize(template: np.ndarray, side: int) -> np.ndarray:
    img = Image.fromarray(np.clip(template * 255.0, 0, 255).astype(np.uint8))
    return np.asarray(img.resize((side, side), Image.BILINEAR), dtype=np.float64) / 255.0


def make_collection(n_classes: int = 1, images_per_class: int = 40, n_outliers: int = 0,
                    image_size: int = 128, seed: int = 0,
                    scale_range=(0.25, 0.6)) -> List[SyntheticImage]:
    """Generate the collection in a seed-determined shuffled order."""
    rng = np.random.default_rng(seed)
    # twists spread over [0, 90]: rings, spirals, spokes
    templates = [make_template(rng, 90.0 * c / max(n_classes - 1, 1)) for c in range(n_classes)]
    plan = [c for c in range(n_classes) for _ in range(images_per_class)]
    plan += [-1] * n_outliers
    order = rng.permutation(len(plan))
    images = []
    for idx, slot in enumerate(order):
        cls = plan[slot]
        pixels = make_background(rng, image_size)
        labels, boxes = [], []
        if cls >= 0:
            side = int(round(rng.uniform(*scale_range) * image_size))
            x0 = int(rng.integers(0, image_size - side + 1))
            y0 = int(rng.integers(0, image_size - side + 1))
            pixels[y0:y0 + side, x0:x0 + side] = _resize(templates[cls], side)
            labels = [f"class{cls}"]
            boxes = [[float(x0), float(y0), float(x0 + side), float(y0 + side)]]
        pixels = np.clip(np.round(pixels * 255.0), 0, 255).astype(np.uint8)
        images.append(SyntheticImage(f"img{idx:04d}", pixels, labels, boxes))
    return images


def write_collection(images: List[SyntheticImage], out_dir) -> Path:
    """Write PNGs plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for item in images:
        rel = f"images/{item.image_id}.png"
        Image.fromarray(item.pixels).save(out_dir / rel, optimize=False)
        records.append({
            "image_id": item.image_id,
            "image_path": rel,
            "class_labels": list(item.class_labels),
            "ground_truth_boxes": [{"label": lbl, "box": box}
                                   for lbl, box in zip(item.class_labels, item.boxes)],
        })
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")
    return manifest
