"""SLIC superpixels: CIELAB k-means with a compactness-weighted spatial term."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from skimage.color import rgb2lab

from . import kernels
from .imaging import Frame


@dataclass(frozen=True)
class SlicConfig:
    target_count: int = 500
    compactness: float = 10.0
    iterations: int = 10
    enforce_min_size: float = 0.25

    def __post_init__(self):
        if self.target_count < 1:
            raise ValueError("target_count must be >= 1")
        if not self.compactness > 0:
            raise ValueError("compactness must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


class Segmentation:
    """Dense superpixel partition of an image grid.

    ``labels`` is an (H, W) int32 map with values in ``[0, count)``.
    """

    def __init__(self, labels: np.ndarray, count: int | None = None):
        labels = np.ascontiguousarray(labels, dtype=np.int32)
        if labels.ndim != 2:
            raise ValueError("labels must be 2-D")
        if count is None:
            count = int(labels.max()) + 1
        self.labels = labels
        self.count = int(count)
        if labels.min() < 0 or labels.max() >= self.count:
            raise ValueError("labels outside [0, count)")
        if (self.sizes == 0).any():
            raise ValueError("every superpixel needs at least one pixel")

    @property
    def shape(self):
        return self.labels.shape

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.count)

    @cached_property
    def _order(self) -> np.ndarray:
        return np.argsort(self.labels.ravel(), kind="stable")

    @cached_property
    def members(self) -> list:
        """Per superpixel, the flat (row-major) pixel indexes it owns."""
        bounds = np.concatenate([[0], np.cumsum(self.sizes)])
        return [self._order[bounds[i]:bounds[i + 1]] for i in range(self.count)]

    @cached_property
    def centroids(self) -> np.ndarray:
        """(count, 2) array of (x, y) member means."""
        H, W = self.labels.shape
        flat = self.labels.ravel()
        ys, xs = np.divmod(np.arange(H * W), W)
        cx = np.bincount(flat, weights=xs, minlength=self.count) / self.sizes
        cy = np.bincount(flat, weights=ys, minlength=self.count) / self.sizes
        return np.stack([cx, cy], axis=1)

    def is_connected(self) -> bool:
        _, ncomp = kernels.connected_components(self.labels)
        return ncomp == self.count

    def __eq__(self, other):
        return isinstance(other, Segmentation) and np.array_equal(self.labels, other.labels)

    def __repr__(self):
        H, W = self.labels.shape
        return f"Segmentation({W}x{H}, count={self.count})"


def _gradient(lab: np.ndarray) -> np.ndarray:
    p = np.pad(lab, ((1, 1), (1, 1), (0, 0)), mode="edge")
    gx = p[1:-1, 2:] - p[1:-1, :-2]
    gy = p[2:, 1:-1] - p[:-2, 1:-1]
    return (gx * gx).sum(axis=2) + (gy * gy).sum(axis=2)


def _seed_centers(lab: np.ndarray, target: int) -> tuple[np.ndarray, float]:
    H, W = lab.shape[:2]
    step = math.sqrt(H * W / target)
    ny = min(H, max(1, int(math.floor(math.sqrt(target * H / W) + 0.5))))
    nx = min(W, max(1, int(math.floor(target / ny + 0.5))))
    grad = _gradient(lab) if step >= 3 else None
    centers = []
    for i in range(ny):
        cy = min(int((i + 0.5) * H / ny), H - 1)
        for j in range(nx):
            cx = min(int((j + 0.5) * W / nx), W - 1)
            if grad is not None:
                best = grad[cy, cx]
                by, bx = cy, cx
                for yy in range(max(cy - 1, 0), min(cy + 2, H)):
                    for xx in range(max(cx - 1, 0), min(cx + 2, W)):
                        if grad[yy, xx] < best:
                            best, by, bx = grad[yy, xx], yy, xx
                cy_, cx_ = by, bx
            else:
                cy_, cx_ = cy, cx
            centers.append([cy_, cx_, *lab[cy_, cx_]])
    return np.array(centers, dtype=np.float64), step


def segment(frame: Frame, cfg: SlicConfig = SlicConfig(), seed: int = 0) -> Segmentation:
    """Decompose ``frame`` into connected superpixels.

    Seeding is a deterministic grid, so ``seed`` does not change the result;
    it is accepted so every pipeline stage takes one.
    """
    H, W = frame.height, frame.width
    if cfg.target_count > H * W:
        raise ValueError(f"target_count {cfg.target_count} exceeds pixel count {H * W}")
    lab = np.ascontiguousarray(rgb2lab(frame.data), dtype=np.float64)
    centers, step = _seed_centers(lab, cfg.target_count)
    ratio2 = (cfg.compactness / step) ** 2
    labels = np.empty((H, W), dtype=np.int32)
    dist = np.empty((H, W), dtype=np.float64)
    ys, xs = np.divmod(np.arange(H * W, dtype=np.float64), W)
    flat_lab = lab.reshape(-1, 3)
    for _ in range(cfg.iterations):
        kernels.slic_assign(lab, centers, 2.0 * step, ratio2, labels, dist)
        flat = labels.ravel()
        n = np.bincount(flat, minlength=len(centers)).astype(np.float64)
        live = n > 0
        sums = [np.bincount(flat, weights=w, minlength=len(centers))
                for w in (ys, xs, flat_lab[:, 0], flat_lab[:, 1], flat_lab[:, 2])]
        for col, s in enumerate(sums):
            centers[live, col] = s[live] / n[live]
    min_size = max(1, int(round(cfg.enforce_min_size * H * W / cfg.target_count)))
    return enforce_connectivity(labels, min_size)


def enforce_connectivity(labels: np.ndarray, min_size: int = 1) -> Segmentation:
    """Make every superpixel 4-connected and relabel densely.

    Each raw label keeps its largest component if that has at least
    ``min_size`` pixels; every other component is absorbed into the largest
    adjacent surviving superpixel.
    """
    labels = np.ascontiguousarray(labels, dtype=np.int32)
    comp, ncomp = kernels.connected_components(labels)
    flat = comp.ravel()
    sizes = np.bincount(flat, minlength=ncomp)
    first = np.full(ncomp, labels.size, dtype=np.int64)
    np.minimum.at(first, flat, np.arange(flat.size))
    raw = labels.ravel()[first]

    # per raw label, largest component (earliest on ties) survives
    order = np.lexsort((np.arange(ncomp), -sizes, raw))
    head = np.ones(ncomp, dtype=bool)
    head[1:] = raw[order[1:]] != raw[order[:-1]]
    kept = np.zeros(ncomp, dtype=bool)
    kept[order[head]] = True
    kept &= sizes >= min_size
    if not kept.any():
        kept[int(np.argmax(sizes))] = True

    owner = np.where(kept, np.arange(ncomp), -1)
    if not kept.all():
        pairs = np.concatenate([
            np.stack([comp[:, :-1].ravel(), comp[:, 1:].ravel()], axis=1),
            np.stack([comp[:-1, :].ravel(), comp[1:, :].ravel()], axis=1),
        ])
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        pairs = np.unique(np.concatenate([pairs, pairs[:, ::-1]]), axis=0)
        starts = np.searchsorted(pairs[:, 0], np.arange(ncomp + 1)).tolist()
        nbrs = pairs[:, 1].tolist()
        grown = np.where(kept, sizes, 0).tolist()
        own = owner.tolist()
        frontier = sorted({n for c in np.flatnonzero(kept).tolist()
                           for n in nbrs[starts[c]:starts[c + 1]] if own[n] < 0})
        # absorb in waves outward from the survivors; sizes frozen per wave
        while frontier:
            chosen = []
            for c in frontier:
                best = -1
                for n in nbrs[starts[c]:starts[c + 1]]:
                    o = own[n]
                    if o >= 0 and (best < 0 or grown[o] > grown[best] or (grown[o] == grown[best] and o < best)):
                        best = o
                chosen.append(best)
            for c, o in zip(frontier, chosen):
                own[c] = o
            for c, o in zip(frontier, chosen):
                grown[o] += int(sizes[c])
            frontier = sorted({n for c in frontier for n in nbrs[starts[c]:starts[c + 1]] if own[n] < 0})
        owner = np.array(own, dtype=np.int64)

    dense = np.cumsum(kept) - 1
    out = dense[owner][comp]
    return Segmentation(out.astype(np.int32), int(kept.sum()))
