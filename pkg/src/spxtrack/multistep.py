"""Step sequences, multi-step path composition and long-term candidate voting."""
from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .matching import MatchField, row_argmax

STRATEGIES = ("MSId", "MSIr", "MSIm")


@dataclass(frozen=True)
class StepPlan:
    step_set: tuple = (1, 2, 5, 10, 20)
    k_max: int = 7
    budget: int = 200  # L: sampled sequences per frame pair
    seed: int = 0

    def __post_init__(self):
        steps = tuple(sorted(set(int(s) for s in self.step_set)))
        if not steps or steps[0] < 1:
            raise ValueError("step_set must be non-empty with steps >= 1")
        object.__setattr__(self, "step_set", steps)
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")


class MissingFieldError(KeyError):
    pass


def enumerate_sequences(distance: int, step_set, max_len: int | None = None) -> list:
    """All ordered compositions of ``distance`` into parts from ``step_set``.

    Depth-first with smaller steps explored first; ``max_len`` bounds the
    depth so longer sequences are never generated.
    """
    steps = sorted(set(step_set))
    out = []
    path = []

    def walk(rest):
        if rest == 0:
            out.append(tuple(path))
            return
        if max_len is not None and len(path) >= max_len:
            return
        for a in steps:
            if a > rest:
                break
            path.append(a)
            walk(rest - a)
            path.pop()

    if distance >= 1:
        walk(distance)
    return out


def count_sequences(distance: int, step_set, max_len: int | None = None) -> int:
    """Number of sequences ``enumerate_sequences`` would return, by dynamic programming."""
    if distance < 0:
        return 0
    steps = sorted(set(step_set))
    if max_len is None:
        f = [1] + [0] * distance
        for d in range(1, distance + 1):
            f[d] = sum(f[d - a] for a in steps if a <= d)
        return f[distance]
    return _bounded_counter(tuple(steps))(max_len, distance)


def _bounded_counter(steps):
    @lru_cache(maxsize=None)
    def g(k, d):
        # compositions of d into at most k parts
        if d == 0:
            return 1
        if k == 0:
            return 0
        return sum(g(k - 1, d - a) for a in steps if a <= d)
    return g


def _unrank(rank: int, distance: int, steps: tuple, k_max: int, g) -> tuple:
    seq = []
    rest, k = distance, k_max
    while rest > 0:
        for a in steps:
            if a > rest:
                raise AssertionError("rank out of range")
            c = g(k - 1, rest - a)
            if rank < c:
                seq.append(a)
                rest -= a
                k -= 1
                break
            rank -= c
    return tuple(seq)


def prune_and_sample(distance: int, plan: StepPlan, seed: int | None = None) -> list:
    """Sequences of at most ``k_max`` steps; at most ``budget`` of them, uniformly drawn.

    Sampling picks distinct ranks in the depth-first order and unranks them, so
    the pruned set is never materialised. Output keeps depth-first order.
    """
    steps = plan.step_set
    g = _bounded_counter(steps)
    total = g(plan.k_max, distance) if distance >= 1 else 0
    if total <= plan.budget:
        return enumerate_sequences(distance, steps, plan.k_max)
    rng = random.Random(plan.seed if seed is None else seed)
    ranks = sorted(rng.sample(range(total), plan.budget))
    return [_unrank(r, distance, steps, plan.k_max, g) for r in ranks]


def compose_path(fields: Mapping, steps, start: int, direction: int = 1) -> MatchField:
    """Chain elementary fields along ``steps`` from frame ``start``.

    ``direction`` is +1 to walk forward in time and -1 to walk backward.
    """
    if not steps:
        raise ValueError("empty step sequence")
    frame = start
    mapping = None
    n_target = None
    for a in steps:
        nxt = frame + direction * a
        try:
            f = fields[(frame, nxt)]
        except KeyError:
            raise MissingFieldError(f"no elementary field for hop {frame}->{nxt}") from None
        if mapping is None:
            mapping = f.map.copy()
        else:
            if mapping.max(initial=-1) >= f.n_source:
                raise ValueError(f"hop {frame}->{nxt} does not cover the previous targets")
            mapping = f.map[mapping]
        n_target = f.n_target
        frame = nxt
    return MatchField(start, frame, mapping, n_target)


@dataclass
class CandidateSet:
    """Per source superpixel, direct and reverse candidate target superpixels.

    ``direct`` holds one composed source->target map per direct sequence,
    shape (n_direct, n_source). ``reverse`` holds one composed
    target->source map per reverse sequence, shape (n_reverse, n_target);
    target ``j`` is a reverse candidate of source ``reverse[l, j]``.
    """

    direct: np.ndarray
    reverse: np.ndarray
    n_source: int
    n_target: int

    def direct_counts(self) -> sp.csr_matrix:
        L = self.direct.shape[0]
        rows = np.tile(np.arange(self.n_source), L)
        return sp.csr_matrix((np.ones(rows.size), (rows, self.direct.ravel())),
                             shape=(self.n_source, self.n_target))

    def reverse_counts(self) -> sp.csr_matrix:
        L = self.reverse.shape[0]
        cols = np.tile(np.arange(self.n_target), L)
        return sp.csr_matrix((np.ones(cols.size), (self.reverse.ravel(), cols)),
                             shape=(self.n_source, self.n_target))

    def entries(self, i: int) -> list:
        """The multiset of (target, provenance) pairs for source ``i``."""
        out = [(int(t), "direct") for t in self.direct[:, i]]
        for row in self.reverse:
            out += [(int(j), "reverse") for j in np.flatnonzero(row == i)]
        return out


def gather_candidates(fields: Mapping, direct_seqs, reverse_seqs, source_frame: int,
                      target_frame: int, n_source: int, n_target: int) -> CandidateSet:
    sign = 1 if target_frame > source_frame else -1
    direct = [compose_path(fields, g, source_frame, sign).map for g in direct_seqs]
    reverse = [compose_path(fields, g, target_frame, -sign).map for g in reverse_seqs]
    direct = np.array(direct, dtype=np.int64).reshape(len(direct), n_source)
    reverse = np.array(reverse, dtype=np.int64).reshape(len(reverse), n_target)
    return CandidateSet(direct, reverse, n_source, n_target)


def select_long_term(cands: CandidateSet, strategy: str = "MSIm", source_frame: int = 0,
                     target_frame: int = 1) -> MatchField:
    """Plurality vote per source superpixel, ties toward the lowest target index.

    MSId votes over direct candidates, MSIr over direct and reverse ones, and
    MSIm only over targets present with both provenances, falling back to MSIr
    where no target has both.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if cands.direct.shape[0] == 0:
        raise ValueError("empty direct candidate multiset")
    D = cands.direct_counts()
    if strategy == "MSId":
        out = row_argmax(D)
    else:
        R = cands.reverse_counts()
        both = sp.csr_matrix(D + R)
        out = row_argmax(both)
        if strategy == "MSIm":
            mutual = sp.csr_matrix(both.multiply(D.multiply(R) > 0))
            mutual.eliminate_zeros()
            m = row_argmax(mutual)
            out = np.where(m >= 0, m, out)
    return MatchField(source_frame, target_frame, out, cands.n_target)


def mutual_fallback_rows(cands: CandidateSet) -> np.ndarray:
    """Source superpixels for which MSIm falls back to MSIr."""
    D = cands.direct_counts()
    R = cands.reverse_counts()
    mutual = sp.csr_matrix(D.multiply(R))
    mutual.eliminate_zeros()
    return np.flatnonzero(np.diff(mutual.indptr) == 0)
