"""Probabilistic Hough Matching between two region sets.

Candidate matches ``(r, r')`` vote into a 3-D grid of pose offsets
(normalized translation and log2 scale change) with weight
``similarity * gaussian``; the match confidence then reads the accumulated
grid back through the same Gaussian::

    h(x)     = sum_m  a(m) g(m, x)
    c(m)     = a(m) sum_x g(m, x) h(x)
    phi(r)   = max_r' c(r, r')

``g`` is an unnormalized isotropic Gaussian measured in bin units and
truncated at ``truncation * sigma`` per axis. Offsets outside the grid are
clamped to the outermost bin centers. Pairs whose similarity is below
``appearance_threshold`` are skipped in both passes.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Tuple

import numba
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .descriptors import appearance_matrix
from .geometry import Offset

APPEARANCE_THRESHOLD = 1e-4


@dataclass(frozen=True)
class HoughGrid:
    """Offset-bin geometry.

    ``dx`` and ``dy`` span ``[-translation_range, translation_range]`` and
    the log2 scale ratio spans ``[-log_scale_range, log_scale_range]``.
    ``sigma`` is in bin widths, ``truncation`` in multiples of sigma.
    """

    dx_bins: int = 21
    dy_bins: int = 21
    dscale_bins: int = 9
    translation_range: float = 1.0
    log_scale_range: float = 2.0
    sigma: float = 1.0
    truncation: float = 2.0

    def __post_init__(self):
        for name in ("dx_bins", "dy_bins", "dscale_bins"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.translation_range <= 0 or self.log_scale_range <= 0:
            raise ValueError("grid ranges must be positive")
        if self.sigma <= 0 or self.truncation <= 0:
            raise ValueError("sigma and truncation must be positive")

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.dx_bins, self.dy_bins, self.dscale_bins)

    @property
    def lows(self) -> np.ndarray:
        t, s = self.translation_range, self.log_scale_range
        return np.array([-t, -t, -s])

    @property
    def widths(self) -> np.ndarray:
        return 2.0 * -self.lows / np.array(self.shape, dtype=np.float64)

    @property
    def reach(self) -> float:
        """Half-width of the Gaussian support, in bins."""
        return self.truncation * self.sigma

    def bin_center(self, index) -> np.ndarray:
        return self.lows + (np.asarray(index, dtype=np.float64) + 0.5) * self.widths

    def bin_coords(self, offset: Offset) -> np.ndarray:
        """Continuous bin coordinates of an offset, clamped into the grid."""
        u = (np.array(offset.as_tuple()) - self.lows) / self.widths - 0.5
        return np.clip(u, 0.0, np.array(self.shape, dtype=np.float64) - 1.0)

    def _params(self):
        return (np.array(self.shape, dtype=np.int64), self.lows, self.widths,
                float(self.sigma), float(self.reach))


def geometry_likelihood(offset: Offset, x, grid: HoughGrid = HoughGrid()) -> float:
    """Truncated Gaussian weight of ``offset`` for the bin with index ``x``."""
    d = (grid.bin_coords(offset) - np.asarray(x, dtype=np.float64)) / grid.sigma
    if np.any(np.abs(d) > grid.truncation):
        return 0.0
    return float(math.exp(-0.5 * float(np.dot(d, d))))


@dataclass
class HoughSpace:
    scores: np.ndarray
    grid: HoughGrid

    def total(self) -> float:
        return float(self.scores.sum())

    def peak(self) -> Tuple[int, int, int]:
        return tuple(int(i) for i in np.unravel_index(np.argmax(self.scores), self.scores.shape))

    def zero_bin(self) -> Tuple[int, int, int]:
        return tuple(int(i) for i in np.round(self.grid.bin_coords(Offset(0.0, 0.0, 0.0))))

    def dump(self, path) -> None:
        """Write the grid as little-endian float64 (C order) plus a JSON sidecar."""
        path = Path(path)
        path.write_bytes(np.ascontiguousarray(self.scores, dtype="<f8").tobytes())
        meta = {"shape": list(self.scores.shape), "dtype": "<f8", "order": "C",
                "axes": ["dx", "dy", "dscale"], "grid": asdict(self.grid)}
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "HoughSpace":
        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text())
        scores = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(meta["shape"]).copy()
        return cls(scores, HoughGrid(**meta["grid"]))


# -- kernels ------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _axis_window(u, nbins, sigma, reach, idx, w):
    if u < 0.0:
        u = 0.0
    elif u > nbins - 1.0:
        u = nbins - 1.0
    lo = int(math.ceil(u - reach))
    hi = int(math.floor(u + reach))
    if lo < 0:
        lo = 0
    if hi > nbins - 1:
        hi = nbins - 1
    # consecutive Gaussian weights differ by a factor that shrinks by
    # exp(-step^2) per bin, so two exp calls cover the whole window
    step = 1.0 / sigma
    d = (u - lo) / sigma
    weight = math.exp(-0.5 * d * d)
    factor = math.exp(d * step - 0.5 * step * step)
    shrink = math.exp(-step * step)
    count = 0
    for b in range(lo, hi + 1):
        idx[count] = b
        w[count] = weight
        weight *= factor
        factor *= shrink
        count += 1
    return count


@numba.njit(cache=True, nogil=True)
def _pair_window(r, q, loc_t, loc_s, log_t, log_s, norm, shape, lows, widths, sigma, reach,
                 ix, iy, iz, wx, wy, wz):
    ux = ((loc_s[q, 0] - loc_t[r, 0]) / norm - lows[0]) / widths[0] - 0.5
    uy = ((loc_s[q, 1] - loc_t[r, 1]) / norm - lows[1]) / widths[1] - 0.5
    uz = ((log_s[q] - log_t[r]) - lows[2]) / widths[2] - 0.5
    nx = _axis_window(ux, shape[0], sigma, reach, ix, wx)
    ny = _axis_window(uy, shape[1], sigma, reach, iy, wy)
    nz = _axis_window(uz, shape[2], sigma, reach, iz, wz)
    return nx, ny, nz


@numba.njit(cache=True, nogil=True)
def _vote_kernel(loc_t, loc_s, sim, norm, shape, lows, widths, sigma, reach, threshold):
    flat = np.zeros(shape[0] * shape[1] * shape[2])
    size = int(2.0 * reach) + 2
    ix = np.empty(size, np.int64)
    iy = np.empty(size, np.int64)
    iz = np.empty(size, np.int64)
    wx = np.empty(size)
    wy = np.empty(size)
    wz = np.empty(size)
    log_t = np.log2(loc_t[:, 2])
    log_s = np.log2(loc_s[:, 2])
    sy = shape[2]
    sx = shape[1] * shape[2]
    for r in range(loc_t.shape[0]):
        for q in range(loc_s.shape[0]):
            a = sim[r, q]
            if a < threshold or a <= 0.0:
                continue
            nx, ny, nz = _pair_window(r, q, loc_t, loc_s, log_t, log_s, norm, shape, lows,
                                      widths, sigma, reach, ix, iy, iz, wx, wy, wz)
            for i in range(nx):
                ai = a * wx[i]
                bi = ix[i] * sx
                for j in range(ny):
                    aij = ai * wy[j]
                    bij = bi + iy[j] * sy
                    for k in range(nz):
                        flat[bij + iz[k]] += aij * wz[k]
    return flat.reshape((shape[0], shape[1], shape[2]))


@numba.njit(cache=True, nogil=True)
def _readout_kernel(loc_t, loc_s, sim, h, norm, shape, lows, widths, sigma, reach,
                    threshold, conf, phi, store):
    flat = h.ravel()
    size = int(2.0 * reach) + 2
    ix = np.empty(size, np.int64)
    iy = np.empty(size, np.int64)
    iz = np.empty(size, np.int64)
    wx = np.empty(size)
    wy = np.empty(size)
    wz = np.empty(size)
    log_t = np.log2(loc_t[:, 2])
    log_s = np.log2(loc_s[:, 2])
    sy = shape[2]
    sx = shape[1] * shape[2]
    for r in range(loc_t.shape[0]):
        best = 0.0
        for q in range(loc_s.shape[0]):
            a = sim[r, q]
            if a < threshold or a <= 0.0:
                if store:
                    conf[r, q] = 0.0
                continue
            nx, ny, nz = _pair_window(r, q, loc_t, loc_s, log_t, log_s, norm, shape, lows,
                                      widths, sigma, reach, ix, iy, iz, wx, wy, wz)
            total = 0.0
            for i in range(nx):
                bi = ix[i] * sx
                for j in range(ny):
                    wij = wx[i] * wy[j]
                    bij = bi + iy[j] * sy
                    for k in range(nz):
                        total += wij * wz[k] * flat[bij + iz[k]]
            c = a * total
            if store:
                conf[r, q] = c
            if c > best:
                best = c
        phi[r] = best


# -- public operations -----------------------------------------------------------

def _pair_inputs(R, R_prime, similarity):
    if similarity is None:
        if R.descriptors is None or R_prime.descriptors is None:
            raise ValueError("both region sets need descriptors")
        similarity = appearance_matrix(R.descriptors, R_prime.descriptors)
    similarity = np.ascontiguousarray(similarity, dtype=np.float64)
    if similarity.shape != (len(R), len(R_prime)):
        raise ValueError(f"similarity shape {similarity.shape} does not match "
                         f"({len(R)}, {len(R_prime)})")
    width, height = R.image_dims
    norm = math.sqrt(float(width) * float(height))
    return (np.ascontiguousarray(R.locations), np.ascontiguousarray(R_prime.locations),
            similarity, norm)


def vote(R, R_prime, grid: HoughGrid = HoughGrid(), similarity=None,
         threshold: float = APPEARANCE_THRESHOLD) -> HoughSpace:
    """Accumulate the Hough space of offsets for every candidate match.

    ``similarity`` overrides the descriptor inner products when given.
    Translations are normalized by the dimensions of ``R``'s image.
    """
    loc_t, loc_s, sim, norm = _pair_inputs(R, R_prime, similarity)
    shape, lows, widths, sigma, reach = grid._params()
    h = _vote_kernel(loc_t, loc_s, sim, norm, shape, lows, widths, sigma, reach, threshold)
    return HoughSpace(h, grid)


def _readout(R, R_prime, h: HoughSpace, similarity, threshold, store):
    loc_t, loc_s, sim, norm = _pair_inputs(R, R_prime, similarity)
    shape, lows, widths, sigma, reach = h.grid._params()
    conf = np.empty((len(R), len(R_prime)) if store else (1, 1))
    phi = np.empty(len(R))
    _readout_kernel(loc_t, loc_s, sim, np.ascontiguousarray(h.scores), norm, shape, lows,
                    widths, sigma, reach, threshold, conf, phi, store)
    return conf, phi


def match_confidence(R, R_prime, h: HoughSpace, similarity=None,
                     threshold: float = APPEARANCE_THRESHOLD) -> np.ndarray:
    """``[n, n']`` matrix of Hough match confidences."""
    conf, _ = _readout(R, R_prime, h, similarity, threshold, store=True)
    return conf


def region_confidence(conf: np.ndarray) -> np.ndarray:
    """Max-pooled confidence of each row region."""
    conf = np.asarray(conf, dtype=np.float64)
    if conf.shape[1] == 0:
        return np.zeros(conf.shape[0])
    return conf.max(axis=1)


def pair_region_confidence(R, R_prime, grid: HoughGrid = HoughGrid(), similarity=None,
                           threshold: float = APPEARANCE_THRESHOLD) -> np.ndarray:
    """Vote plus max-pooled readout without materializing the confidence matrix."""
    if len(R_prime) == 0:
        return np.zeros(len(R))
    h = vote(R, R_prime, grid, similarity, threshold)
    _, phi = _readout(R, R_prime, h, similarity, threshold, store=False)
    return phi


def greedy_one_to_one(conf: np.ndarray, k: int) -> List[Tuple[int, int, float]]:
    """Pick up to ``k`` matches, best first, never reusing a row or column.

    Ties go to the lowest ``(r, r')``. Zero-confidence entries are never
    emitted.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    conf = np.asarray(conf, dtype=np.float64)
    rows, cols = np.nonzero(conf > 0)
    vals = conf[rows, cols]
    order = np.lexsort((cols, rows, -vals))
    used_r, used_c = set(), set()
    out = []
    for idx in order:
        r, q = int(rows[idx]), int(cols[idx])
        if r in used_r or q in used_c:
            continue
        out.append((r, q, float(vals[idx])))
        used_r.add(r)
        used_c.add(q)
        if len(out) == k:
            break
    return out


def write_matches_csv(matches, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("r_id,r_prime_id,confidence\n")
        for r, q, c in matches:
            fh.write(f"{r},{q},{c!r}\n")


class ProbabilisticHoughMatcher(BaseEstimator):
    """Estimator wrapper around one PHM run.

    ``fit(R, R_prime)`` stores ``hough_``, ``confidences_`` and
    ``region_confidence_``; ``matches(k)`` extracts one-to-one matches.
    Without an explicit ``similarity`` the descriptors are compared with
    :func:`~objdiscovery.descriptors.appearance_matrix` using
    ``appearance_centered`` and ``appearance_power``.
    """

    def __init__(self, dx_bins=21, dy_bins=21, dscale_bins=9, translation_range=1.0,
                 log_scale_range=2.0, sigma=1.0, truncation=2.0,
                 appearance_threshold=APPEARANCE_THRESHOLD, appearance_centered=True,
                 appearance_power=2.0):
        self.dx_bins = dx_bins
        self.dy_bins = dy_bins
        self.dscale_bins = dscale_bins
        self.translation_range = translation_range
        self.log_scale_range = log_scale_range
        self.sigma = sigma
        self.truncation = truncation
        self.appearance_threshold = appearance_threshold
        self.appearance_centered = appearance_centered
        self.appearance_power = appearance_power

    def _grid(self):
        return HoughGrid(self.dx_bins, self.dy_bins, self.dscale_bins, self.translation_range,
                         self.log_scale_range, self.sigma, self.truncation)

    def fit(self, R, R_prime, similarity=None):
        grid = self._grid()
        if similarity is None:
            if R.descriptors is None or R_prime.descriptors is None:
                raise ValueError("both region sets need descriptors")
            similarity = appearance_matrix(R.descriptors, R_prime.descriptors,
                                           self.appearance_centered, self.appearance_power)
        self.similarity_ = np.asarray(similarity, dtype=np.float64)
        self.hough_ = vote(R, R_prime, grid, similarity, self.appearance_threshold)
        self.confidences_ = match_confidence(R, R_prime, self.hough_, similarity,
                                             self.appearance_threshold)
        self.region_confidence_ = region_confidence(self.confidences_)
        return self

    def matches(self, k=20):
        check_is_fitted(self, "confidences_")
        return greedy_one_to_one(self.confidences_, k)
