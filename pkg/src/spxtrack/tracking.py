"""DIR / SEQ / MSI pipelines over a frame sequence with ROI label propagation."""
from __future__ import annotations

import hashlib
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifiers import ForestConfig, forest_posteriors, knn_posteriors, train_forest
from .features import FeatureBank, frame_features, generate_bank
from .imaging import RoiMask, Sequence
from .matching import (MatchField, match_by_soft_argmax, match_by_vote, match_fwbw,
                       pixel_argmax, read_match_csv, superpixel_posteriors, write_match_csv)
from .multistep import STRATEGIES, StepPlan, compose_path, gather_candidates, prune_and_sample, \
    select_long_term
from .rng import derive_seed
from .slic import Segmentation, SlicConfig, segment

log = logging.getLogger(__name__)

CLASSIFIERS = ("forest", "knn")
MATCHERS = ("vote", "soft", "fwbw")
INTEGRATIONS = ("DIR", "SEQ", "MSI")
DIRECTIONS = ("from_reference", "to_reference")

# fixed offsets from the master seed
SLIC_OFFSET, BANK_OFFSET, FOREST_OFFSET, SAMPLE_OFFSET, REVERSE_OFFSET = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class TrackerConfig:
    classifier: str = "forest"
    matcher: str = "fwbw"
    integration: str = "MSI"
    msi_strategy: str = "MSIm"
    plan: StepPlan = field(default_factory=StepPlan)
    slic: SlicConfig = field(default_factory=SlicConfig)
    n_features: int = 80
    radius: int = 40
    box_sizes: tuple = (3, 5, 7)
    forest: ForestConfig = field(default_factory=ForestConfig)
    knn_k: int = 5
    knn_train_fraction: float = 1.0
    direction: str | None = None  # None: to_reference for DIR, from_reference otherwise
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        for name, allowed in (("classifier", CLASSIFIERS), ("matcher", MATCHERS),
                              ("integration", INTEGRATIONS), ("msi_strategy", STRATEGIES)):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.direction is not None and self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.integration == "SEQ" and 1 not in self.plan.step_set:
            raise ValueError("SEQ requires step 1 in the step set")

    @property
    def resolved_direction(self) -> str:
        if self.direction:
            return self.direction
        return "to_reference" if self.integration == "DIR" else "from_reference"


@dataclass
class TrackResult:
    """Long-term matches and propagated masks, keyed by non-reference frame index."""

    ref_index: int
    fields: dict          # primary field per frame (direction of mask painting)
    forward: dict         # ref -> n
    backward: dict        # n -> ref
    masks: dict
    object_superpixels: np.ndarray
    quantized_ref: RoiMask
    manifest: dict


def propagate_roi_labels(mask: RoiMask, seg: Segmentation) -> np.ndarray:
    """Superpixels with at least half of their pixels inside the mask, sorted."""
    if mask.bits.shape != seg.shape:
        raise ValueError("mask and segmentation dimensions differ")
    inside = np.bincount(seg.labels.ravel(), weights=mask.bits.ravel(), minlength=seg.count)
    return np.flatnonzero(2 * inside >= seg.sizes)


def paint(seg: Segmentation, selected) -> RoiMask:
    flag = np.zeros(seg.count, dtype=bool)
    flag[np.asarray(selected, dtype=np.int64)] = True
    return RoiMask(flag[seg.labels])


def quantize_mask(mask: RoiMask, seg: Segmentation) -> RoiMask:
    return paint(seg, propagate_roi_labels(mask, seg))


def _sequence_digest(seq: Sequence) -> str:
    h = hashlib.sha1()
    for f in seq.frames:
        h.update(f.data.tobytes())
    return h.hexdigest()[:16]


class Pipeline:
    """Shared state for one sequence: segmentations, feature bank, elementary fields."""

    def __init__(self, seq: Sequence, cfg: TrackerConfig, cache_dir=None):
        self.seq = seq
        self.cfg = cfg
        self.bank: FeatureBank = generate_bank(cfg.seed + BANK_OFFSET, cfg.n_features,
                                               cfg.radius, cfg.box_sizes)
        self._segs: dict = {}
        self.fields: dict = {}
        self.stats = {"fields_computed": 0, "fields_reused": 0, "classifiers_trained": 0}
        self.timings: dict = {}
        env = os.environ.get("SPXTRACK_CACHE")
        root = Path(env) if env else (Path(cache_dir) if cache_dir is not None else None)
        self.cache = root / self.cache_key() if root is not None else None

    # -- bookkeeping
    def cache_key(self) -> str:
        c = self.cfg
        relevant = (c.classifier, c.matcher, asdict(c.slic), c.n_features, c.radius,
                    tuple(c.box_sizes), asdict(c.forest), c.knn_k, c.knn_train_fraction, c.seed)
        h = hashlib.sha1(repr(relevant).encode()).hexdigest()[:16]
        return f"{_sequence_digest(self.seq)}-{h}"

    def _timed(self, stage, t0):
        self.timings[stage] = self.timings.get(stage, 0.0) + time.perf_counter() - t0

    def segmentation(self, n: int) -> Segmentation:
        if n not in self._segs:
            self._segs[n] = segment(self.seq.frames[n], self.cfg.slic, self.cfg.seed + SLIC_OFFSET)
        return self._segs[n]

    def segment_all(self) -> list:
        t0 = time.perf_counter()
        segs = [self.segmentation(n) for n in range(len(self.seq))]
        self._timed("segment", t0)
        return segs

    # -- elementary fields
    def _cache_path(self, a, b) -> Path:
        return self.cache / f"field_{a:05d}_{b:05d}.csv"

    def ensure_fields(self, pairs) -> dict:
        """Compute (or load from cache) the elementary field of every ordered pair."""
        t0 = time.perf_counter()
        todo = []
        for a, b in sorted(set(pairs)):
            if (a, b) in self.fields:
                continue
            if self.cache is not None and self._cache_path(a, b).exists():
                self.fields[(a, b)] = read_match_csv(self._cache_path(a, b))
                self.stats["fields_reused"] += 1
            else:
                todo.append((a, b))
        if todo:
            self._compute(todo)
        self._timed("fields", t0)
        return {p: self.fields[p] for p in pairs}

    def _needed_posteriors(self, todo):
        need = set(todo)
        if self.cfg.matcher == "fwbw":
            need |= {(b, a) for a, b in todo}
        by_target: dict = {}
        for a, b in sorted(need):
            by_target.setdefault(b, []).append(a)
        return by_target

    def _posteriors_for_target(self, target: int, sources: list) -> dict:
        """Train once on ``target``; superpixel posteriors (or vote maps) for each source."""
        cfg = self.cfg
        seg_t = self.segmentation(target)
        X_t = frame_features(self.seq.frames[target], self.bank)
        if cfg.classifier == "forest":
            fcfg = replace(cfg.forest, seed=derive_seed(cfg.seed + FOREST_OFFSET, target))
            model = train_forest(self.seq.frames[target], seg_t, self.bank, fcfg, features=X_t)
        out = {}
        for s in sources:
            X_s = X_t if s == target else frame_features(self.seq.frames[s], self.bank)
            if cfg.classifier == "forest":
                post = forest_posteriors(model, self.seq.frames[s], self.bank, features=X_s)
            else:
                post = knn_posteriors(self.seq.frames[target], seg_t, self.seq.frames[s], self.bank,
                                      cfg.knn_k, target_features=X_t, source_features=X_s,
                                      train_fraction=cfg.knn_train_fraction,
                                      seed=derive_seed(cfg.seed + FOREST_OFFSET, target))
            seg_s = self.segmentation(s)
            if cfg.matcher == "vote":
                out[(s, target)] = match_by_vote(pixel_argmax(post), seg_s, seg_t.count, s, target)
            else:
                out[(s, target)] = superpixel_posteriors(post, seg_s)
        return out

    def _compute(self, todo):
        for n in sorted({a for p in todo for a in p}):
            self.segmentation(n)
        by_target = self._needed_posteriors(todo)
        jobs = max(1, int(self.cfg.jobs))
        targets = sorted(by_target)
        if jobs > 1:
            with ThreadPoolExecutor(jobs) as pool:
                parts = list(pool.map(lambda t: self._posteriors_for_target(t, by_target[t]), targets))
        else:
            parts = [self._posteriors_for_target(t, by_target[t]) for t in targets]
        self.stats["classifiers_trained"] += len(targets)
        post = {}
        for p in parts:
            post.update(p)
        for a, b in todo:
            if self.cfg.matcher == "vote":
                f = post[(a, b)]
            elif self.cfg.matcher == "soft":
                f = match_by_soft_argmax(post[(a, b)], a, b)
            else:
                f = match_fwbw(post[(a, b)], post[(b, a)], a, b)
            self.fields[(a, b)] = f
            self.stats["fields_computed"] += 1
            if self.cache is not None:
                self.cache.mkdir(parents=True, exist_ok=True)
                path = self._cache_path(a, b)
                if not path.exists():
                    tmp = path.with_suffix(f".tmp{os.getpid()}")
                    write_match_csv(f, tmp)
                    os.replace(tmp, path)


def elementary_pairs(n_frames: int, step_set) -> list:
    """Ordered pairs (n, n + a) and their reverses for every step a that fits."""
    N = n_frames - 1
    pairs = []
    for a in sorted(set(step_set)):
        for n in range(0, N - a + 1):
            pairs.append((n, n + a))
            pairs.append((n + a, n))
    return pairs


def compute_elementary_fields(seq: Sequence, step_set, cfg: TrackerConfig, cache_dir=None,
                              pipeline: Pipeline | None = None) -> dict:
    pipe = pipeline or Pipeline(seq, cfg, cache_dir)
    return pipe.ensure_fields(elementary_pairs(len(seq), step_set))


# ---------------------------------------------------------------- integrations

def _finish(pipe: Pipeline, mask: RoiMask, forward: dict, backward: dict, t_start) -> TrackResult:
    cfg, seq = pipe.cfg, pipe.seq
    ref = seq.ref_index
    seg_ref = pipe.segmentation(ref)
    obj = propagate_roi_labels(mask, seg_ref)
    is_obj = np.zeros(seg_ref.count, dtype=bool)
    is_obj[obj] = True
    direction = cfg.resolved_direction
    masks, primary = {}, {}
    for n in sorted(forward):
        seg_n = pipe.segmentation(n)
        if direction == "from_reference":
            masks[n] = paint(seg_n, np.unique(forward[n].map[obj]))
            primary[n] = forward[n]
        else:
            masks[n] = RoiMask(is_obj[backward[n].map][seg_n.labels])
            primary[n] = backward[n]
    manifest = {
        "integration": cfg.integration,
        "direction": direction,
        "stats": dict(pipe.stats),
        "timings": {k: round(v, 3) for k, v in pipe.timings.items()},
        "total_seconds": round(time.perf_counter() - t_start, 3),
        "seeds": {"slic": cfg.seed + SLIC_OFFSET, "bank": cfg.seed + BANK_OFFSET,
                  "forest": cfg.seed + FOREST_OFFSET, "sampling": cfg.seed + SAMPLE_OFFSET,
                  "reverse_sampling": cfg.seed + REVERSE_OFFSET},
        "cache": str(pipe.cache) if pipe.cache is not None else "",
    }
    return TrackResult(ref, primary, forward, backward, masks, obj, paint(seg_ref, obj), manifest)


def _check_mask(seq: Sequence, mask: RoiMask):
    if mask.bits.shape != seq.frames[0].data.shape[:2]:
        raise ValueError("ROI mask and frame dimensions differ")


def track_dir(seq: Sequence, mask: RoiMask, cfg: TrackerConfig, cache_dir=None,
              pipeline: Pipeline | None = None) -> TrackResult:
    t0 = time.perf_counter()
    _check_mask(seq, mask)
    pipe = pipeline or Pipeline(seq, cfg, cache_dir)
    ref = seq.ref_index
    others = [n for n in range(len(seq)) if n != ref]
    pipe.segment_all()
    pipe.ensure_fields([(ref, n) for n in others] + [(n, ref) for n in others])
    forward = {n: pipe.fields[(ref, n)] for n in others}
    backward = {n: pipe.fields[(n, ref)] for n in others}
    return _finish(pipe, mask, forward, backward, t0)


def _unit_chain(src: int, dst: int) -> tuple:
    return (1,) * abs(dst - src)


def track_seq(seq: Sequence, mask: RoiMask, cfg: TrackerConfig, cache_dir=None,
              pipeline: Pipeline | None = None) -> TrackResult:
    t0 = time.perf_counter()
    _check_mask(seq, mask)
    pipe = pipeline or Pipeline(seq, cfg, cache_dir)
    ref = seq.ref_index
    others = [n for n in range(len(seq)) if n != ref]
    pipe.segment_all()
    pipe.ensure_fields(elementary_pairs(len(seq), (1,)))
    forward, backward = {}, {}
    t1 = time.perf_counter()
    for n in others:
        sign = 1 if n > ref else -1
        forward[n] = compose_path(pipe.fields, _unit_chain(ref, n), ref, sign)
        backward[n] = compose_path(pipe.fields, _unit_chain(ref, n), n, -sign)
    pipe._timed("integrate", t1)
    return _finish(pipe, mask, forward, backward, t0)


def track_msi(seq: Sequence, mask: RoiMask, cfg: TrackerConfig, cache_dir=None,
              pipeline: Pipeline | None = None) -> TrackResult:
    t0 = time.perf_counter()
    _check_mask(seq, mask)
    pipe = pipeline or Pipeline(seq, cfg, cache_dir)
    ref = seq.ref_index
    plan = cfg.plan
    others = [n for n in range(len(seq)) if n != ref]
    pipe.segment_all()
    pipe.ensure_fields(elementary_pairs(len(seq), plan.step_set))
    t1 = time.perf_counter()
    forward, backward = {}, {}
    for n in others:
        d = abs(n - ref)
        direct = prune_and_sample(d, plan, seed=cfg.seed + SAMPLE_OFFSET)
        reverse = prune_and_sample(d, plan, seed=cfg.seed + REVERSE_OFFSET)
        if not direct:
            raise ValueError(f"frame {n} is unreachable from the reference with steps "
                             f"{plan.step_set} and k_max={plan.k_max}")
        n_ref, n_n = pipe.segmentation(ref).count, pipe.segmentation(n).count
        strategy = cfg.msi_strategy
        rev = reverse if strategy != "MSId" else []
        c_fw = gather_candidates(pipe.fields, direct, rev, ref, n, n_ref, n_n)
        c_bw = gather_candidates(pipe.fields, direct, rev, n, ref, n_n, n_ref)
        forward[n] = select_long_term(c_fw, strategy, ref, n)
        backward[n] = select_long_term(c_bw, strategy, n, ref)
    pipe._timed("integrate", t1)
    return _finish(pipe, mask, forward, backward, t0)


def track(seq: Sequence, mask: RoiMask, cfg: TrackerConfig, cache_dir=None,
          pipeline: Pipeline | None = None) -> TrackResult:
    fn = {"DIR": track_dir, "SEQ": track_seq, "MSI": track_msi}[cfg.integration]
    return fn(seq, mask, cfg, cache_dir, pipeline)
