"""Random fixtures shared across test modules."""
import numpy as np

from objdiscovery.proposals import RegionSet


def random_boxes(rng, n, width, height, min_side=2.0):
    x0 = rng.uniform(0, width - min_side, n)
    y0 = rng.uniform(0, height - min_side, n)
    x1 = x0 + rng.uniform(min_side, width - x0 + 1e-9)
    y1 = y0 + rng.uniform(min_side, height - y0 + 1e-9)
    boxes = np.stack([x0, y0, np.minimum(x1, width), np.minimum(y1, height)], axis=1)
    return boxes


def random_region_set(rng, n, dims=None, dim=27, image_id="img"):
    if dims is None:
        dims = (int(rng.integers(40, 400)), int(rng.integers(40, 400)))
    desc = rng.random((n, dim))
    desc /= np.linalg.norm(desc, axis=1, keepdims=True)
    return RegionSet(image_id, random_boxes(rng, n, *dims), dims, desc)


def random_similarity(rng, n, m, zero_fraction=0.2):
    sim = rng.random((n, m))
    sim[rng.random((n, m)) < zero_fraction] = 0.0
    sim[rng.random((n, m)) < 0.05] = 5e-5  # below the default threshold
    return sim


def nested_boxes(rng, n, size=200.0):
    """Boxes built by repeatedly shrinking earlier ones, so containment chains are common."""
    boxes = [np.array([0.0, 0.0, size, size])]
    while len(boxes) < n:
        parent = boxes[int(rng.integers(len(boxes)))]
        w, h = parent[2] - parent[0], parent[3] - parent[1]
        if rng.random() < 0.3 or min(w, h) < 4:
            x0, y0 = rng.uniform(0, size - 4, 2)
            side = rng.uniform(4, size - max(x0, y0))
            boxes.append(np.array([x0, y0, x0 + side, y0 + side]))
            continue
        f = rng.uniform(0.3, 0.9)
        cw, ch = w * f, h * rng.uniform(0.3, 0.9)
        x0 = parent[0] + rng.uniform(-0.1, 1.0) * (w - cw)
        y0 = parent[1] + rng.uniform(-0.1, 1.0) * (h - ch)
        x0, y0 = max(x0, 0.0), max(y0, 0.0)
        boxes.append(np.array([x0, y0, min(x0 + cw, size), min(y0 + ch, size)]))
    return np.round(np.array(boxes), 2)
