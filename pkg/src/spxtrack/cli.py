"""Command line driver: segment, fields, track, eval, all."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path


from . import kernels
from .config import ConfigError, RunConfig
from .imaging import (ImageFormatError, RoiMask, Sequence, load_frame, load_mask, read_label_map,
                      save_mask, write_label_map)
from .matching import read_match_csv, write_match_csv
from .metrics import MetricsReport, fwbw_consistency
from .slic import Segmentation
from .tracking import Pipeline, elementary_pairs, track

log = logging.getLogger("spxtrack")

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm", ".pnm")
STAGES = ("segment", "fields", "track", "eval", "all")
MANIFEST = "manifest.txt"


class DataError(RuntimeError):
    pass


# ---------------------------------------------------------------- inputs

def _images(directory: Path, pattern: str = "*") -> list:
    if not directory.is_dir():
        raise DataError(f"directory not found: {directory}")
    return sorted(p for p in directory.glob(pattern)
                  if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _by_stem(directory: Path) -> dict:
    out = {}
    for p in _images(directory):
        if p.stem in out:
            raise DataError(f"{directory}: two files share the frame name '{p.stem}'")
        out[p.stem] = p
    return out


def load_sequence(rc: RunConfig) -> Sequence:
    paths = _images(Path(rc.sequence_dir), rc.pattern)
    if not paths:
        raise DataError(f"no frames matching '{rc.pattern}' in {rc.sequence_dir}")
    if not 0 <= rc.reference_index < len(paths):
        raise DataError(f"reference_index {rc.reference_index} outside the "
                        f"{len(paths)}-frame sequence")
    frames = [load_frame(p) for p in paths]
    try:
        return Sequence(frames, rc.reference_index, [p.stem for p in paths])
    except ValueError as exc:
        raise DataError(str(exc)) from None


def load_roi(rc: RunConfig, seq: Sequence) -> RoiMask:
    if rc.roi_mask:
        path = Path(rc.roi_mask)
    elif rc.gt_dir:
        ref = seq.names[seq.ref_index]
        path = _by_stem(Path(rc.gt_dir)).get(ref)
        if path is None:
            raise DataError(f"no ground-truth mask for reference frame '{ref}' in {rc.gt_dir}")
    else:
        raise ConfigError("set roi_mask or gt_dir to provide the reference ROI")
    if not path.is_file():
        raise DataError(f"ROI mask not found: {path}")
    mask = load_mask(path)
    if mask.bits.shape != seq.frames[0].data.shape[:2]:
        raise DataError(f"ROI mask {path} does not match the frame dimensions")
    return mask


def make_pipeline(rc: RunConfig, seq: Sequence) -> Pipeline:
    cache = Path(rc.cache_dir) if rc.cache_dir else Path(rc.output_dir) / "cache"
    return Pipeline(seq, rc.tracker(), cache)


# ---------------------------------------------------------------- stages

def stage_segment(rc: RunConfig, seq: Sequence, pipe: Pipeline) -> None:
    out = Path(rc.output_dir) / "segments"
    out.mkdir(parents=True, exist_ok=True)
    for n, seg in enumerate(pipe.segment_all()):
        write_label_map(seg, out / f"{seq.names[n]}.png")


def needed_pairs(rc: RunConfig, seq: Sequence) -> list:
    cfg = rc.tracker()
    ref = seq.ref_index
    if cfg.integration == "DIR":
        others = [n for n in range(len(seq)) if n != ref]
        return [(ref, n) for n in others] + [(n, ref) for n in others]
    steps = (1,) if cfg.integration == "SEQ" else cfg.plan.step_set
    return elementary_pairs(len(seq), steps)


def stage_fields(rc: RunConfig, seq: Sequence, pipe: Pipeline) -> None:
    pipe.ensure_fields(needed_pairs(rc, seq))


def write_manifest(rc: RunConfig, seq: Sequence, result, path: Path) -> None:
    m = result.manifest
    lines = ["# spxtrack run manifest; the key = value lines re-run this experiment",
             f"# backend = {kernels.BACKEND}",
             f"# reference = {seq.names[seq.ref_index]}",
             f"# frames = {','.join(seq.names)}",
             f"# direction = {m['direction']}",
             f"# cache = {m['cache']}"]
    lines += [f"# seed.{k} = {v}" for k, v in m["seeds"].items()]
    lines += [f"# stats.{k} = {v}" for k, v in m["stats"].items()]
    lines += [f"# timing.{k} = {v}" for k, v in m["timings"].items()]
    lines.append(f"# timing.total = {m['total_seconds']}")
    path.write_text("\n".join(lines) + "\n" + rc.echo(), encoding="utf-8")


def stage_track(rc: RunConfig, seq: Sequence, pipe: Pipeline):
    out = Path(rc.output_dir)
    mask = load_roi(rc, seq)
    stage_segment(rc, seq, pipe)
    result = track(seq, mask, rc.tracker(), pipeline=pipe)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    (out / "matches").mkdir(parents=True, exist_ok=True)
    save_mask(result.quantized_ref, out / "reference_roi.png")
    for n in sorted(result.masks):
        name = seq.names[n]
        save_mask(result.masks[n], out / "masks" / f"{name}.png")
        write_match_csv(result.forward[n], out / "matches" / f"{name}_fw.csv")
        write_match_csv(result.backward[n], out / "matches" / f"{name}_bw.csv")
    write_manifest(rc, seq, result, out / MANIFEST)
    return result


def read_manifest_info(run_dir: Path) -> dict:
    info = {}
    path = run_dir / MANIFEST
    if not path.is_file():
        raise DataError(f"no {MANIFEST} in {run_dir}")
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.startswith("# ") and " = " in line:
            k, v = line[2:].split(" = ", 1)
            info[k.strip()] = v.strip()
    return info


def run_eval(masks_dir, gt_dir, run_dir=None, out_csv=None, radius=None) -> MetricsReport:
    masks_dir, gt_dir = Path(masks_dir), Path(gt_dir)
    masks, gts = _by_stem(masks_dir), _by_stem(gt_dir)
    ref_seg = ref_roi = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        info = read_manifest_info(run_dir)
        frames = info.get("frames", "").split(",")
        ref = info.get("reference")
        expected = [(i, s) for i, s in enumerate(frames) if s != ref]
        ref_seg = Segmentation(read_label_map(run_dir / "segments" / f"{ref}.png"))
        ref_roi = load_mask(run_dir / "reference_roi.png")
    else:
        expected = list(enumerate(sorted(set(masks) | set(gts))))
    if not expected or not masks or not gts:
        raise DataError(f"nothing to evaluate in {masks_dir} and {gt_dir}")
    for _, stem in expected:
        if stem not in masks:
            raise DataError(f"frame '{stem}' has no result mask in {masks_dir}")
        if stem not in gts:
            raise DataError(f"frame '{stem}' has no ground-truth mask in {gt_dir}")
    report = MetricsReport()
    for idx, stem in expected:
        result, truth = load_mask(masks[stem]), load_mask(gts[stem])
        if result.bits.shape != truth.bits.shape:
            raise DataError(f"frame '{stem}': result and ground truth differ in size")
        cons = None
        if run_dir is not None:
            fw = read_match_csv(run_dir / "matches" / f"{stem}_fw.csv")
            bw = read_match_csv(run_dir / "matches" / f"{stem}_bw.csv")
            cons = fwbw_consistency(ref_roi, ref_seg, fw, bw)
        report.add(idx, result, truth, cons, radius)
    if out_csv is not None:
        report.write_csv(out_csv)
    return report


def stage_eval(rc: RunConfig) -> MetricsReport:
    if not rc.gt_dir:
        raise ConfigError("eval needs gt_dir")
    out = Path(rc.output_dir)
    report = run_eval(out / "masks", rc.gt_dir, out, out / "metrics.csv", rc.contour_radius)
    print("frame_index,dice,precision,recall,f_measure,consistency")
    print(report.aggregate_line())
    return report


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spxtrack", description="Long-term superpixel tracking.")
    p.add_argument("command", nargs="?", choices=STAGES, help="stage to run")
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--stage", choices=STAGES, help="same as the positional stage")
    p.add_argument("--jobs", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--seed", help="master seed, overrides the config file")
    p.add_argument("--masks", help="eval without config: result mask directory")
    p.add_argument("--gt", help="eval without config: ground-truth directory")
    p.add_argument("--run", help="eval without config: run directory for consistency scores")
    p.add_argument("--out", help="eval without config: metrics CSV path")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _dispatch(args) -> None:
    stage = args.command or args.stage
    if stage is None:
        raise ConfigError("no stage given (segment, fields, track, eval, all)")
    if args.command and args.stage and args.command != args.stage:
        raise ConfigError(f"conflicting stages '{args.command}' and '{args.stage}'")
    if stage == "eval" and args.config is None:
        if not (args.masks and args.gt):
            raise ConfigError("eval needs --config or both --masks and --gt")
        report = run_eval(args.masks, args.gt, args.run, args.out or "metrics.csv")
        print("frame_index,dice,precision,recall,f_measure,consistency")
        print(report.aggregate_line())
        return
    if args.config is None:
        raise ConfigError("--config is required")
    rc = RunConfig.load(args.config, {"seed": args.seed, "jobs": args.jobs})
    if stage == "eval":
        stage_eval(rc)
        return
    seq = load_sequence(rc)
    pipe = make_pipeline(rc, seq)
    t0 = time.perf_counter()
    if stage in ("segment", "all"):
        stage_segment(rc, seq, pipe)
    if stage in ("fields", "all"):
        stage_fields(rc, seq, pipe)
    if stage in ("track", "all"):
        stage_track(rc, seq, pipe)
    if stage == "all" and rc.gt_dir:
        stage_eval(rc)
    log.info("%s finished in %.1f s", stage, time.perf_counter() - t0)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        _dispatch(args)
    except ConfigError as exc:
        print(f"spxtrack: config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ImageFormatError, FileNotFoundError) as exc:
        print(f"spxtrack: data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001
        print(f"spxtrack: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
