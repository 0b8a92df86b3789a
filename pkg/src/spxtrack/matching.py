"""Superpixel-to-superpixel match fields from pixel posteriors.

Every argmax in this module breaks ties toward the lowest superpixel index.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .classifiers import PosteriorField
from .slic import Segmentation


@dataclass(eq=False)
class MatchField:
    """Total map from source superpixels to target superpixels for one frame pair."""

    source_frame: int
    target_frame: int
    map: np.ndarray
    n_target: int
    soft: sp.csr_matrix | None = None

    def __post_init__(self):
        self.map = np.asarray(self.map, dtype=np.int64)
        if self.map.size and (self.map.min() < 0 or self.map.max() >= self.n_target):
            raise ValueError("mapped index outside the target superpixel range")
        if self.soft is not None and self.soft.shape != (self.map.size, self.n_target):
            raise ValueError("soft matrix shape mismatch")

    @property
    def n_source(self) -> int:
        return self.map.size

    def __eq__(self, other):
        return (isinstance(other, MatchField) and self.source_frame == other.source_frame
                and self.target_frame == other.target_frame and self.n_target == other.n_target
                and np.array_equal(self.map, other.map))


def row_argmax(m: sp.csr_matrix) -> np.ndarray:
    """Column of the largest entry per row, lowest column on ties; -1 for empty rows."""
    m = sp.csr_matrix(m)
    out = np.full(m.shape[0], -1, dtype=np.int64)
    nnz = np.diff(m.indptr)
    rows = np.flatnonzero(nnz)
    if rows.size == 0:
        return out
    starts = m.indptr[rows]
    row_of = np.repeat(np.arange(m.shape[0]), nnz)
    best = np.full(m.shape[0], -np.inf)
    best[rows] = np.maximum.reduceat(m.data, starts)
    cand = np.where(m.data == best[row_of], m.indices.astype(np.int64), np.iinfo(np.int64).max)
    out[rows] = np.minimum.reduceat(cand, starts)
    # an all-negative row never arises from probabilities; implicit zeros would win then
    return out


def pixel_argmax(field: PosteriorField) -> np.ndarray:
    """Per-pixel most probable target superpixel, as an (H, W) int map."""
    return row_argmax(field.probs).reshape(field.height, field.width)


def _plurality(rows: np.ndarray, cols: np.ndarray, n_rows: int, n_cols: int) -> sp.csr_matrix:
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n_rows, n_cols))


def match_by_vote(pixel_map: np.ndarray, source_seg: Segmentation, n_target: int | None = None,
                  source_frame: int = 0, target_frame: int = 1) -> MatchField:
    """Each source superpixel takes the target index predicted by most of its pixels."""
    if pixel_map.shape != source_seg.shape:
        raise ValueError("pixel map and segmentation dimensions differ")
    pm = pixel_map.ravel()
    if n_target is None:
        n_target = int(pm.max()) + 1
    counts = _plurality(source_seg.labels.ravel(), pm, source_seg.count, n_target)
    return MatchField(source_frame, target_frame, row_argmax(counts), n_target)


def superpixel_posteriors(field: PosteriorField, source_seg: Segmentation) -> sp.csr_matrix:
    """Mean pixel posterior inside each source superpixel, shape (|F|, |S|)."""
    if source_seg.shape != (field.height, field.width):
        raise ValueError("posterior field and segmentation dimensions differ")
    n = field.width * field.height
    lab = source_seg.labels.ravel()
    avg = sp.csr_matrix((1.0 / source_seg.sizes[lab], (lab, np.arange(n))),
                        shape=(source_seg.count, n))
    out = sp.csr_matrix(avg @ field.probs)
    out.sort_indices()
    return out


def match_by_soft_argmax(sp_posteriors: sp.csr_matrix, source_frame: int = 0,
                         target_frame: int = 1) -> MatchField:
    P = sp.csr_matrix(sp_posteriors)
    return MatchField(source_frame, target_frame, row_argmax(P), P.shape[1], soft=P)


def match_fwbw(fw: sp.csr_matrix, bw: sp.csr_matrix, source_frame: int = 0,
               target_frame: int = 1) -> MatchField:
    """argmax_n fw[i, n] * bw[n, i]; rows whose products all vanish fall back to argmax fw."""
    fw = sp.csr_matrix(fw)
    bw = sp.csr_matrix(bw)
    if bw.shape != fw.shape[::-1]:
        raise ValueError(f"backward posteriors {bw.shape} do not transpose forward {fw.shape}")
    prod = sp.csr_matrix(fw.multiply(bw.T.tocsr()))
    prod.eliminate_zeros()
    out = row_argmax(prod)
    empty = out < 0
    if empty.any():
        out[empty] = row_argmax(fw)[empty]
    return MatchField(source_frame, target_frame, out, fw.shape[1], soft=fw)


# ---------------------------------------------------------------- CSV

def write_match_csv(field: MatchField, path, with_soft: bool = False) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# source_frame={field.source_frame} target_frame={field.target_frame} "
                 f"n_target={field.n_target}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_index", "target_index"] + (["prob"] if with_soft else []))
        soft = field.soft if with_soft else None
        for i, j in enumerate(field.map.tolist()):
            row = [i, j]
            if soft is not None:
                s, e = soft.indptr[i], soft.indptr[i + 1]
                row += [f"{c}:{v!r}" for c, v in zip(soft.indices[s:e].tolist(), soft.data[s:e].tolist())]
            w.writerow(row)


def read_match_csv(path) -> MatchField:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        head = fh.readline()
        if not head.startswith("#"):
            raise ValueError(f"{path}: missing match-field header")
        meta = dict(kv.split("=") for kv in head[1:].split())
        rows = list(csv.reader(fh))
    body = rows[1:]
    n_target = int(meta["n_target"])
    mapping = np.array([int(r[1]) for r in body], dtype=np.int64)
    if [int(r[0]) for r in body] != list(range(len(body))):
        raise ValueError(f"{path}: source indexes are not dense")
    soft = None
    if rows[0][2:] == ["prob"]:
        ind, val, ptr = [], [], [0]
        for r in body:
            for tok in r[2:]:
                c, v = tok.split(":")
                ind.append(int(c))
                val.append(float(v))
            ptr.append(len(ind))
        soft = sp.csr_matrix((val, ind, ptr), shape=(len(body), n_target))
    return MatchField(int(meta["source_frame"]), int(meta["target_frame"]), mapping, n_target, soft)
