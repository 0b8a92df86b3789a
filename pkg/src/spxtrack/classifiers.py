"""Pixel-to-superpixel posteriors: train on the target frame, predict on the source.

Posterior fields are CSR matrices with one row per source pixel (row-major)
and one column per target superpixel.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from . import kernels
from .features import FeatureBank, frame_features
from .imaging import Frame
from .rng import SplitMix64, derive_seed
from .slic import Segmentation

FOREST_FORMAT = 1


@dataclass(frozen=True)
class ForestConfig:
    trees: int = 100
    max_depth: int = 20
    min_leaf: int = 5
    candidate_features_per_node: int | None = None  # None: ceil(sqrt(K_a))
    candidate_thresholds_per_feature: int = 10
    bootstrap: bool = True
    train_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.trees < 1:
            raise ValueError("trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not 0 < self.train_fraction <= 1:
            raise ValueError("train_fraction must be in (0, 1]")


class Tree(NamedTuple):
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_id: np.ndarray
    leaf_ptr: np.ndarray
    leaf_classes: np.ndarray
    leaf_counts: np.ndarray

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_ptr) - 1

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=np.int64)
        for node in range(len(self.feature)):
            if self.leaf_id[node] < 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def leaf_matrix(self, n_classes: int) -> sp.csr_matrix:
        """Normalised leaf histograms, shape (n_leaves, n_classes)."""
        sizes = np.add.reduceat(self.leaf_counts, self.leaf_ptr[:-1])
        probs = self.leaf_counts / np.repeat(sizes, np.diff(self.leaf_ptr))
        return sp.csr_matrix((probs, self.leaf_classes, self.leaf_ptr),
                             shape=(self.n_leaves, n_classes))


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple
    n_classes: int
    n_features: int

    def __eq__(self, other):
        return (isinstance(other, Forest) and self.n_classes == other.n_classes
                and self.n_features == other.n_features and len(self.trees) == len(other.trees)
                and all(np.array_equal(a, b) for s, o in zip(self.trees, other.trees)
                        for a, b in zip(s, o)))


class PosteriorField:
    def __init__(self, probs: sp.csr_matrix, width: int, height: int):
        probs = sp.csr_matrix(probs)
        probs.sum_duplicates()
        probs.sort_indices()
        if probs.shape[0] != width * height:
            raise ValueError("one row per pixel required")
        self.probs = probs
        self.width = width
        self.height = height

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]

    def pixel(self, x: int, y: int) -> dict:
        row = self.probs.getrow(y * self.width + x)
        return dict(zip(row.indices.tolist(), row.data.tolist()))

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.probs.sum(axis=1)).ravel()


def _xlogx(n: int) -> np.ndarray:
    return np.array([0.0] + [c * math.log(c) for c in range(1, n + 1)])


def _training_rows(n: int, fraction: float, seed: int) -> np.ndarray:
    if fraction >= 1.0:
        return np.arange(n)
    keep = max(1, int(round(fraction * n)))
    draws = SplitMix64(derive_seed(seed, 0x7A11)).bulk(n)
    return np.sort(np.argsort(draws, kind="stable")[:keep])


def train_forest(target: Frame, target_seg: Segmentation, bank: FeatureBank,
                 cfg: ForestConfig = ForestConfig(), features: np.ndarray | None = None,
                 jobs: int = 1) -> Forest:
    """Fit a forest whose classes are the target frame's superpixel indexes."""
    if target_seg.shape != (target.height, target.width):
        raise ValueError("segmentation and frame dimensions differ")
    X = frame_features(target, bank) if features is None else features
    X = np.ascontiguousarray(X, dtype=np.float64)
    rows = _training_rows(X.shape[0], cfg.train_fraction, cfg.seed)
    if rows.size < cfg.min_leaf:
        raise ValueError(f"{rows.size} training samples is fewer than min_leaf={cfg.min_leaf}")
    y = target_seg.labels.ravel().astype(np.int32)
    n_feat = cfg.candidate_features_per_node or math.ceil(math.sqrt(bank.count))
    xlogx = _xlogx(rows.size)

    def grow(t):
        seed = derive_seed(cfg.seed, t)
        if cfg.bootstrap:
            pick = (SplitMix64(derive_seed(seed, 0xB007)).bulk(rows.size) % np.uint64(rows.size))
            sample = rows[pick.astype(np.int64)]
        else:
            sample = rows
        arrays = kernels.grow_tree(X, y, sample.astype(np.int32), target_seg.count, xlogx,
                                   cfg.max_depth, cfg.min_leaf, n_feat,
                                   cfg.candidate_thresholds_per_feature, seed)
        return Tree(*arrays)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            trees = tuple(pool.map(grow, range(cfg.trees)))
    else:
        trees = tuple(grow(t) for t in range(cfg.trees))
    return Forest(trees, target_seg.count, bank.count)


def forest_posteriors(forest: Forest, source: Frame, bank: FeatureBank,
                      features: np.ndarray | None = None) -> PosteriorField:
    """Average of the leaf histograms reached in every tree."""
    if bank.count != forest.n_features:
        raise ValueError(f"bank has {bank.count} features, forest was trained on {forest.n_features}")
    X = frame_features(source, bank) if features is None else features
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    cols, blocks, offset = [], [], 0
    for tree in forest.trees:
        leaves = kernels.apply_tree(X, *tree[:5])
        cols.append(leaves.astype(np.int64) + offset)
        blocks.append(tree.leaf_matrix(forest.n_classes))
        offset += tree.n_leaves
    T = len(forest.trees)
    route = sp.csr_matrix((np.full(n * T, 1.0 / T), np.stack(cols, axis=1).ravel(),
                           np.arange(0, n * T + 1, T)), shape=(n, offset))
    probs = route @ sp.vstack(blocks, format="csr")
    return PosteriorField(probs, source.width, source.height)


def knn_posteriors(target: Frame, target_seg: Segmentation, source: Frame, bank: FeatureBank,
                   k: int = 5, target_features: np.ndarray | None = None,
                   source_features: np.ndarray | None = None,
                   train_fraction: float = 1.0, seed: int = 0) -> PosteriorField:
    """Class frequencies among the k Euclidean-nearest target pixels (uniform weights)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    T = frame_features(target, bank) if target_features is None else target_features
    S = frame_features(source, bank) if source_features is None else source_features
    rows = _training_rows(T.shape[0], train_fraction, seed)
    if k > rows.size:
        raise ValueError(f"k={k} exceeds training size {rows.size}")
    train = np.ascontiguousarray(T[rows], dtype=np.float64)
    nn = kernels.knn_query(train, np.ascontiguousarray(S, dtype=np.float64), k)
    classes = target_seg.labels.ravel()[rows][nn]
    n = S.shape[0]
    probs = sp.csr_matrix((np.full(n * k, 1.0 / k), classes.ravel(), np.arange(0, n * k + 1, k)),
                          shape=(n, target_seg.count))
    return PosteriorField(probs, source.width, source.height)


def save_forest(forest: Forest, path) -> None:
    arrays = {"format": np.array([FOREST_FORMAT, forest.n_classes, forest.n_features, len(forest.trees)])}
    for t, tree in enumerate(forest.trees):
        for name, arr in zip(Tree._fields, tree):
            arrays[f"t{t}_{name}"] = arr
    with open(Path(path), "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_forest(path) -> Forest:
    with np.load(Path(path)) as z:
        fmt, n_classes, n_features, n_trees = z["format"].tolist()
        if fmt != FOREST_FORMAT:
            raise ValueError(f"{path}: unsupported forest format {fmt}")
        trees = tuple(Tree(*(z[f"t{t}_{name}"] for name in Tree._fields)) for t in range(n_trees))
    return Forest(trees, n_classes, n_features)
