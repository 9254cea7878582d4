"""HOG patch descriptors, the whole-image descriptor, and appearance similarity.

Every region is cropped, bilinearly resampled to ``patch_size x patch_size``
pixels and described by an 8x8 grid of 9-bin unsigned orientation
histograms (576 values). Each cell is L2-normalized on its own, then the
concatenated vector is L2-normalized again.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .validation import check_boxes, check_image

GRID = 8
ORIENTATIONS = 9
DESCRIPTOR_DIM = GRID * GRID * ORIENTATIONS
CELL_EPS = 1e-6
NORM_FLOOR = 1e-9
DESCRIPTOR_VERSION = 1

_LUMA = np.array([0.299, 0.587, 0.114])


def to_grayscale(image) -> np.ndarray:
    """Float64 grayscale raster; uint8 input is scaled to [0, 1]."""
    image = check_image(image)
    scale = 255.0 if image.dtype == np.uint8 else 1.0
    image = image.astype(np.float64)
    if image.ndim == 3:
        image = image[..., :3] @ _LUMA if image.shape[2] >= 3 else image[..., 0]
    return image / scale if scale != 1.0 else image


def resample_patches(gray: np.ndarray, boxes: np.ndarray, patch_size: int = 64) -> np.ndarray:
    """Bilinearly resample each box of ``gray`` to a square patch.

    Pixel ``i`` spans ``[i, i + 1)``; sample points are patch pixel centers
    mapped into the box and clamped at the image border.
    """
    height, width = gray.shape
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    t = (np.arange(patch_size) + 0.5) / patch_size
    xs = boxes[:, 0:1] + t[None, :] * (boxes[:, 2:3] - boxes[:, 0:1]) - 0.5
    ys = boxes[:, 1:2] + t[None, :] * (boxes[:, 3:4] - boxes[:, 1:2]) - 0.5
    xs = np.clip(xs, 0.0, width - 1.0)
    ys = np.clip(ys, 0.0, height - 1.0)
    x0 = np.minimum(np.floor(xs).astype(np.intp), width - 1)
    y0 = np.minimum(np.floor(ys).astype(np.intp), height - 1)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    wx = (xs - x0)[:, None, :]
    wy = (ys - y0)[:, :, None]
    # a + w * (b - a) keeps constant regions exactly constant
    top_a = gray[y0[:, :, None], x0[:, None, :]]
    top = top_a + wx * (gray[y0[:, :, None], x1[:, None, :]] - top_a)
    bot_a = gray[y1[:, :, None], x0[:, None, :]]
    bot = bot_a + wx * (gray[y1[:, :, None], x1[:, None, :]] - bot_a)
    return top + wy * (bot - top)


def hog_cells(patches: np.ndarray) -> np.ndarray:
    """Raw cell histograms, shape ``[N, 8, 8, 9]``, for ``[N, P, P]`` patches."""
    n, size, _ = patches.shape
    cell = size // GRID
    gx = np.zeros_like(patches)
    gy = np.zeros_like(patches)
    gx[:, :, 1:-1] = patches[:, :, 2:] - patches[:, :, :-2]
    gy[:, 1:-1, :] = patches[:, 2:, :] - patches[:, :-2, :]
    mag = np.hypot(gx, gy)
    angle = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    # bin b is centered on b * 20 degrees; bin 0 holds horizontal gradients
    pos = angle / (180.0 / ORIENTATIONS)
    base = np.floor(pos)
    frac = pos - base
    lo = base.astype(np.intp) % ORIENTATIONS
    hi = (lo + 1) % ORIENTATIONS

    rows = np.arange(size) // cell
    cell_index = (rows[:, None] * GRID + rows[None, :])
    flat_cell = (np.arange(n)[:, None, None] * (GRID * GRID) + cell_index[None]) * ORIENTATIONS
    length = n * GRID * GRID * ORIENTATIONS
    hist = np.bincount((flat_cell + lo).ravel(), weights=(mag * (1.0 - frac)).ravel(),
                       minlength=length)
    hist += np.bincount((flat_cell + hi).ravel(), weights=(mag * frac).ravel(),
                        minlength=length)
    return hist.reshape(n, GRID, GRID, ORIENTATIONS)


def normalize_cells(cells: np.ndarray) -> np.ndarray:
    n = cells.shape[0]
    cell_norm = np.sqrt(np.sum(cells * cells, axis=-1, keepdims=True))
    out = (cells / (cell_norm + CELL_EPS)).reshape(n, -1)
    norm = np.sqrt(np.sum(out * out, axis=1, keepdims=True))
    keep = norm[:, 0] >= NORM_FLOOR
    out[keep] /= norm[keep]
    out[~keep] = 0.0
    return out


def extract_patch_descriptors(image, boxes, patch_size: int = 64,
                              chunk: int = 256) -> np.ndarray:
    """Descriptors for many boxes of one image, shape ``[N, 576]``."""
    gray = image if (isinstance(image, np.ndarray) and image.ndim == 2
                     and image.dtype == np.float64) else to_grayscale(image)
    height, width = gray.shape
    boxes = check_boxes(boxes, width=width, height=height)
    out = np.empty((boxes.shape[0], DESCRIPTOR_DIM))
    for start in range(0, boxes.shape[0], chunk):
        stop = start + chunk
        patches = resample_patches(gray, boxes[start:stop], patch_size)
        out[start:stop] = normalize_cells(hog_cells(patches))
    return out


def extract_patch_descriptor(image, box, patch_size: int = 64) -> np.ndarray:
    """HOG descriptor of a single box; raises ``ValueError`` if the box leaves the image."""
    if hasattr(box, "as_tuple"):
        box = box.as_tuple()
    return extract_patch_descriptors(image, np.asarray(box, dtype=np.float64)[None, :],
                                     patch_size)[0]


def extract_global_descriptor(image, patch_size: int = 64) -> np.ndarray:
    """Whole-image descriptor used for first-round neighbor retrieval."""
    gray = to_grayscale(image)
    height, width = gray.shape
    return extract_patch_descriptor(gray, (0.0, 0.0, float(width), float(height)), patch_size)


def center_cells(F: np.ndarray) -> np.ndarray:
    """Remove each cell's isotropic component, then L2-normalize the rows.

    The result is what the ``centered`` similarity compares. Unrelated
    non-negative HOG vectors share a large positive floor; subtracting the
    per-cell mean leaves only the orientation contrast, so unrelated patches
    score near zero and matching ones near one.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        return center_cells(F[None])[0]
    n, dim = F.shape
    if dim % ORIENTATIONS:
        raise ValueError(f"descriptor length {dim} is not a multiple of {ORIENTATIONS}")
    X = F.reshape(n, -1, ORIENTATIONS)
    X = (X - X.mean(axis=2, keepdims=True)).reshape(n, dim)
    norm = np.sqrt(np.sum(X * X, axis=1, keepdims=True))
    keep = norm[:, 0] >= NORM_FLOOR
    X[keep] /= norm[keep]
    X[~keep] = 0.0
    return X


def appearance_similarity(f: np.ndarray, f_prime: np.ndarray, centered: bool = False,
                          power: float = 1.0) -> float:
    """Similarity of two descriptors in [0, 1].

    The plain form is the inner product. ``centered`` compares
    :func:`center_cells` features instead (clipped at zero) and ``power``
    sharpens the result.
    """
    f = np.asarray(f, dtype=np.float64)
    f_prime = np.asarray(f_prime, dtype=np.float64)
    if f.shape != f_prime.shape:
        raise ValueError(f"descriptor dimension mismatch: {f.shape} vs {f_prime.shape}")
    return float(appearance_matrix(f[None], f_prime[None], centered, power)[0, 0])


def appearance_matrix(F: np.ndarray, F_prime: np.ndarray, centered: bool = False,
                      power: float = 1.0) -> np.ndarray:
    """Pairwise similarities between descriptor rows, in [0, 1]."""
    if F.shape[1] != F_prime.shape[1]:
        raise ValueError(f"descriptor dimension mismatch: {F.shape[1]} vs {F_prime.shape[1]}")
    if centered:
        F, F_prime = center_cells(F), center_cells(F_prime)
    sim = np.clip(F @ F_prime.T, 0.0, 1.0)
    if power != 1.0:
        sim **= power
    return sim


class HOGDescriptor(BaseEstimator, TransformerMixin):
    """Transformer mapping a list of images to whole-image HOG descriptors.

    Stateless; ``fit`` only records the descriptor width so the transformer
    composes with scikit-learn pipelines (e.g. in front of a
    ``NearestNeighbors`` model).
    """

    def __init__(self, patch_size=64):
        self.patch_size = patch_size

    def fit(self, X, y=None):
        self.n_features_out_ = DESCRIPTOR_DIM
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_out_")
        return np.stack([extract_global_descriptor(img, self.patch_size) for img in X])
