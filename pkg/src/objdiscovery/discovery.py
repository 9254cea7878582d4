"""Iterative object discovery over an image collection.

Each iteration runs three steps for every image, reading only the previous
iteration's frozen state:

1. retrieve ``k`` neighbor images (whole-image descriptors in the first
   iteration, PHM between the top confident regions afterwards);
2. match all proposals of the image against the regions of each neighbor
   lying inside that neighbor's potential object regions, summing the
   max-pooled confidences;
3. score every region by how much it stands out over the regions that
   contain it and keep the best ones as the new potential object regions.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import PipelineConfig
from .descriptors import (appearance_matrix, center_cells, extract_global_descriptor,
                          extract_patch_descriptors, to_grayscale)
from .geometry import (areas, covered_mask, inside_mask, intersection_matrix)
from .phm import HoughGrid, pair_region_confidence
from .proposals import RegionSet, ensure_full_frame, full_frame_index, generate_proposals
from .validation import check_image

logger = logging.getLogger(__name__)


@dataclass
class ImageState:
    image_id: object
    potential_regions: List[int]
    neighbors: List[int] = field(default_factory=list)
    aggregated_confidence: Optional[np.ndarray] = None
    standout: Optional[np.ndarray] = None


@dataclass
class DiscoveryResult:
    image_id: object
    region_id: int
    box: List[float]
    part_boxes: List[List[float]]
    neighbors: List[object]
    standout_score: float
    history: List[dict]
    confidence: Optional[np.ndarray] = field(default=None, repr=False)

    def to_record(self) -> dict:
        return {
            "image_id": self.image_id,
            "box": [float(v) for v in self.box],
            "part_boxes": [[float(v) for v in b] for b in self.part_boxes],
            "neighbors": list(self.neighbors),
            "standout_score": float(self.standout_score),
            "region_id": int(self.region_id),
            "history": self.history,
        }


def _rank(scores: np.ndarray, candidates: Optional[np.ndarray] = None) -> np.ndarray:
    """Indices sorted by descending score, ties by ascending index."""
    idx = np.arange(scores.shape[0]) if candidates is None else np.asarray(candidates)
    order = np.lexsort((idx, -scores[idx]))
    return idx[order]


def initial_retrieval(global_descriptors: np.ndarray, k: int, centered: bool = False,
                      power: float = 1.0) -> List[np.ndarray]:
    """k most similar other images for each image, by whole-image descriptor."""
    G = np.asarray(global_descriptors, dtype=np.float64)
    n = G.shape[0]
    if n < 2:
        raise ValueError("neighbor retrieval needs at least two images")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    sim = appearance_matrix(G, G, centered, power)
    k = min(k, n - 1)
    out = []
    for i in range(n):
        others = np.delete(np.arange(n), i)
        out.append(_rank(sim[i], others)[:k])
    return out


def retrieval_regions(psi: np.ndarray, boxes: np.ndarray, potential: Sequence[int],
                      top: int, overlap: float) -> np.ndarray:
    """Top-``top`` regions by confidence among those inside the potential regions."""
    inside = np.flatnonzero(covered_mask(boxes, boxes[np.asarray(potential)], overlap))
    return _rank(psi, inside)[:top]


def matching_retrieval(region_sets: Sequence[RegionSet], psis: Sequence[np.ndarray],
                       potentials: Sequence[Sequence[int]], k: int, top: int = 20,
                       grid: HoughGrid = HoughGrid(), overlap: float = 0.8,
                       threshold: float = 1e-4, appearance_scale: float = 1.0,
                       workers: int = 1, centered: bool = False,
                       power: float = 1.0) -> List[np.ndarray]:
    """Neighbors from PHM between each image's most confident object regions.

    The similarity of ``j`` to ``i`` is the summed region confidence of
    ``i``'s selected regions when matched against ``j``'s selected regions.
    """
    n = len(region_sets)
    if n < 2:
        raise ValueError("neighbor retrieval needs at least two images")
    k = min(k, n - 1)
    picked = [rs.subset(retrieval_regions(psis[i], rs.boxes, potentials[i], top, overlap))
              for i, rs in enumerate(region_sets)]

    def row(i):
        sims = np.full(n, -np.inf)
        for j in range(n):
            if j == i:
                continue
            sim = appearance_scale * appearance_matrix(picked[i].descriptors, picked[j].descriptors,
                                                       centered, power)
            sims[j] = pair_region_confidence(picked[i], picked[j], grid, sim,
                                             threshold * appearance_scale).sum()
        others = np.delete(np.arange(n), i)
        return _rank(sims, others)[:k]

    return _map(row, range(n), workers)


def aggregate_confidence(target: RegionSet, sources: Sequence[RegionSet],
                         grid: HoughGrid = HoughGrid(), threshold: float = 1e-4,
                         appearance_scale: float = 1.0, centered: bool = False,
                         power: float = 1.0) -> np.ndarray:
    """Sum over sources of the max-pooled match confidence of each target region.

    ``appearance_scale`` multiplies every similarity; the skip threshold
    applies to the unscaled value.
    """
    psi = np.zeros(len(target))
    for src in sources:
        if src is None or len(src) == 0:
            continue
        sim = appearance_scale * appearance_matrix(target.descriptors, src.descriptors,
                                                   centered, power)
        psi += pair_region_confidence(target, src, grid, sim, threshold * appearance_scale)
    return psi


def background_confidence(boxes: np.ndarray, psi: np.ndarray, area_ratio: float = 0.5,
                          overlap: float = 0.8, chunk: int = 512):
    """Max confidence over the containers of each region, and whether any exist."""
    boxes = np.asarray(boxes, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    n = boxes.shape[0]
    a = areas(boxes)
    best = np.full(n, -np.inf)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        inter = intersection_matrix(boxes[start:stop], boxes)
        ar = a[start:stop, None]
        contained = (ar < area_ratio * a[None, :]) & (inter >= overlap * ar)
        best[start:stop] = np.where(contained, psi[None, :], -np.inf).max(axis=1)
    return best, np.isfinite(best)


def standout_scores(regions, psi: np.ndarray, area_ratio: float = 0.5,
                    overlap: float = 0.8) -> np.ndarray:
    """Confidence minus the best confidence among containing regions.

    Regions that no other region contains keep their confidence unchanged.
    """
    boxes = regions.boxes if isinstance(regions, RegionSet) else np.asarray(regions)
    bg, has_bg = background_confidence(boxes, psi, area_ratio, overlap)
    psi = np.asarray(psi, dtype=np.float64)
    return np.where(has_bg, psi - np.where(has_bg, bg, 0.0), psi)


def update_potential_regions(scores: np.ndarray, count: int = 5) -> List[int]:
    return [int(i) for i in _rank(np.asarray(scores, dtype=np.float64))[:count]]


def part_regions(boxes: np.ndarray, psi: np.ndarray, final_id: int, count: int = 5,
                 area_ratio: float = 0.5, overlap: float = 0.8) -> List[int]:
    """Most confident regions inside the final box, excluding the box itself."""
    final = boxes[final_id]
    a = areas(boxes)
    inter = intersection_matrix(boxes, final[None, :])[:, 0]
    related = ((a < area_ratio * a[final_id]) & (inter >= overlap * a)) | inside_mask(boxes, final)
    related[final_id] = False
    return [int(i) for i in _rank(psi, np.flatnonzero(related))[:count]]


def _map(fn: Callable, items, workers: int) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_discovery(region_sets: Sequence[RegionSet], global_descriptors: np.ndarray,
                  config: PipelineConfig = PipelineConfig(),
                  appearance_scale: float = 1.0) -> List[DiscoveryResult]:
    """Run the full iterative discovery on prepared region sets.

    Every region set needs descriptors and must contain the full-frame box,
    which seeds each image's potential object regions.
    """
    n = len(region_sets)
    if n < 2:
        raise ValueError("discovery needs at least two images")
    for rs in region_sets:
        if rs.descriptors is None:
            raise ValueError(f"image {rs.image_id!r} has no descriptors")
    grid = config.grid
    ratio, overlap = config.containment_area_ratio, config.containment_overlap
    thr, workers = config.appearance_threshold, config.workers
    power = config.appearance_power
    # center once up front; matching below then uses the plain product
    if config.appearance_centered:
        matched = [rs.with_descriptors(center_cells(rs.descriptors)) for rs in region_sets]
    else:
        matched = list(region_sets)

    potentials = [[full_frame_index(rs)] for rs in region_sets]
    psis: List[Optional[np.ndarray]] = [None] * n
    standouts: List[Optional[np.ndarray]] = [None] * n
    neighbors: List[np.ndarray] = []
    history: List[List[dict]] = [[] for _ in range(n)]

    for iteration in range(1, config.iterations + 1):
        if iteration == 1:
            neighbors = initial_retrieval(global_descriptors, config.k,
                                          config.appearance_centered, power)
        else:
            neighbors = matching_retrieval(matched, psis, potentials, config.k,
                                           config.retrieval_top_regions, grid, overlap, thr,
                                           appearance_scale, workers, power=power)
        sources = [rs.subset(np.flatnonzero(covered_mask(rs.boxes, rs.boxes[potentials[i]],
                                                         overlap)))
                   for i, rs in enumerate(matched)]

        def step(i):
            psi = aggregate_confidence(matched[i], [sources[j] for j in neighbors[i]],
                                       grid, thr, appearance_scale, power=power)
            s = standout_scores(region_sets[i], psi, ratio, overlap)
            return psi, s, update_potential_regions(s, config.potential_regions)

        outcomes = _map(step, range(n), workers)
        for i, (psi, s, top) in enumerate(outcomes):
            psis[i], standouts[i], potentials[i] = psi, s, top
            history[i].append({
                "iteration": iteration,
                "neighbors": [region_sets[j].image_id for j in neighbors[i]],
                "potential_regions": list(top),
                "potential_boxes": [[float(v) for v in region_sets[i].boxes[r]] for r in top],
            })
        logger.info("iteration %d/%d done", iteration, config.iterations)

    results = []
    for i, rs in enumerate(region_sets):
        final = potentials[i][0]
        parts = part_regions(rs.boxes, psis[i], final, config.part_count, ratio, overlap)
        results.append(DiscoveryResult(
            image_id=rs.image_id,
            region_id=final,
            box=[float(v) for v in rs.boxes[final]],
            part_boxes=[[float(v) for v in rs.boxes[p]] for p in parts],
            neighbors=[region_sets[j].image_id for j in neighbors[i]],
            standout_score=float(standouts[i][final]),
            history=history[i],
            confidence=psis[i],
        ))
    return results


def prepare_region_set(image, region_set: Optional[RegionSet], config: PipelineConfig,
                       image_id=None, cache=None):
    """Proposals (generated when missing) with descriptors, plus the global descriptor."""
    image = check_image(image)
    gray = to_grayscale(image)
    height, width = gray.shape
    if region_set is None:
        region_set = generate_proposals((width, height), config.generator, image_id=image_id)
    region_set = ensure_full_frame(RegionSet(
        image_id if image_id is not None else region_set.image_id,
        region_set.boxes, region_set.image_dims, dropped=region_set.dropped))
    if cache is not None:
        found = cache.get(image, region_set.boxes, config.patch_size)
        if found is not None:
            desc, glob = found
            return region_set.with_descriptors(desc), glob
    desc = extract_patch_descriptors(gray, region_set.boxes, config.patch_size)
    glob = extract_global_descriptor(gray, config.patch_size)
    if cache is not None:
        cache.put(image, region_set.boxes, config.patch_size, desc, glob)
    return region_set.with_descriptors(desc), glob


class ObjectDiscovery(BaseEstimator):
    """Unsupervised discovery and localization of dominant objects.

    Parameters mirror :class:`~objdiscovery.config.PipelineConfig`. The
    method is transductive, so ``fit`` does all the work and
    ``fit_predict`` returns one ``(x_min, y_min, x_max, y_max)`` box per
    image.

    Attributes
    ----------
    boxes_ : ndarray of shape (n_images, 4)
    part_boxes_ : list of lists of boxes
    neighbors_ : list of lists of image ids
    standout_scores_ : ndarray of shape (n_images,)
    results_ : list of DiscoveryResult
    """

    def __init__(self, k=10, potential_regions=5, iterations=5, retrieval_top_regions=20,
                 part_count=5, containment_area_ratio=0.5, containment_overlap=0.8,
                 dx_bins=21, dy_bins=21, dscale_bins=9, translation_range=1.0,
                 log_scale_range=2.0, sigma=1.0, truncation=2.0, appearance_threshold=1e-4,
                 appearance_centered=True, appearance_power=2.0, max_proposals=4000,
                 min_scale=0.1, min_box_side=16.0, patch_size=64,
                 workers=1, seed=0, cache=None):
        self.k = k
        self.potential_regions = potential_regions
        self.iterations = iterations
        self.retrieval_top_regions = retrieval_top_regions
        self.part_count = part_count
        self.containment_area_ratio = containment_area_ratio
        self.containment_overlap = containment_overlap
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
        self.max_proposals = max_proposals
        self.min_scale = min_scale
        self.min_box_side = min_box_side
        self.patch_size = patch_size
        self.workers = workers
        self.seed = seed
        self.cache = cache

    @classmethod
    def from_config(cls, config: PipelineConfig, **kwargs) -> "ObjectDiscovery":
        return cls(**config.to_dict(), **kwargs)

    def get_config(self) -> PipelineConfig:
        params = self.get_params()
        params.pop("cache")
        return PipelineConfig(**params)

    def fit(self, X, y=None, proposals=None, image_ids=None):
        """Discover objects in the images ``X``.

        ``proposals`` optionally gives one :class:`RegionSet` (or ``[N, 4]``
        box array) per image; missing entries fall back to the built-in
        generator. ``y`` is ignored.
        """
        config = self.get_config()
        images = [check_image(img) for img in X]
        if len(images) < 2:
            raise ValueError("ObjectDiscovery needs at least two images")
        if image_ids is None:
            image_ids = list(range(len(images)))
        if len(image_ids) != len(images):
            raise ValueError("image_ids must match the number of images")
        if proposals is None:
            proposals = [None] * len(images)
        if len(proposals) != len(images):
            raise ValueError("proposals must match the number of images")

        def prepare(i):
            rs = proposals[i]
            if rs is not None and not isinstance(rs, RegionSet):
                h, w = images[i].shape[:2]
                rs = RegionSet(image_ids[i], np.asarray(rs, dtype=np.float64), (w, h))
            return prepare_region_set(images[i], rs, config, image_ids[i], self.cache)

        prepared = _map(prepare, range(len(images)), config.workers)
        self.region_sets_ = [rs for rs, _ in prepared]
        self.global_descriptors_ = np.stack([g for _, g in prepared])
        self.results_ = run_discovery(self.region_sets_, self.global_descriptors_, config)
        self.boxes_ = np.array([r.box for r in self.results_])
        self.part_boxes_ = [r.part_boxes for r in self.results_]
        self.neighbors_ = [r.neighbors for r in self.results_]
        self.standout_scores_ = np.array([r.standout_score for r in self.results_])
        return self

    def fit_predict(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).boxes_

    def records(self) -> List[dict]:
        check_is_fitted(self, "results_")
        return [r.to_record() for r in self.results_]
