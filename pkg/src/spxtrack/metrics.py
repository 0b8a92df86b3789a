"""Region, contour and forward-backward consistency scores."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imaging import RoiMask
from .matching import MatchField
from .slic import Segmentation

CSV_COLUMNS = ("frame_index", "dice", "precision", "recall", "f_measure", "consistency")


def _bits(m) -> np.ndarray:
    return m.bits if isinstance(m, RoiMask) else np.asarray(m, dtype=bool)


def _same_shape(x, y):
    if x.shape != y.shape:
        raise ValueError(f"mask dimensions differ: {x.shape} vs {y.shape}")


def dice(x, y) -> float:
    a, b = _bits(x), _bits(y)
    _same_shape(a, b)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / total


def boundary(mask) -> np.ndarray:
    """Mask pixels with a 4-neighbor outside the mask or lying on the image border."""
    m = _bits(mask)
    padded = np.pad(m, 1, constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    return m & ~interior


def disc(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return xx * xx + yy * yy <= r * r


def default_radius(height: int, width: int) -> int:
    return max(1, int(round(0.0075 * math.hypot(height, width))))


def contour_f_measure(x, y, radius: int | None = None) -> tuple:
    """(precision, recall, F) of the boundary of ``x`` against that of ``y``."""
    a, b = _bits(x), _bits(y)
    _same_shape(a, b)
    if radius is None:
        radius = default_radius(*a.shape)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    bx, by = boundary(a), boundary(b)
    nx, ny = int(bx.sum()), int(by.sum())
    if nx == 0 and ny == 0:
        return 1.0, 1.0, 1.0
    if nx == 0 or ny == 0:
        return 0.0, 0.0, 0.0
    se = disc(radius)
    dx = ndimage.binary_dilation(bx, structure=se) if radius else bx
    dy = ndimage.binary_dilation(by, structure=se) if radius else by
    p = np.count_nonzero(bx & dy) / nx
    r = np.count_nonzero(by & dx) / ny
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return float(p), float(r), float(f)


def fwbw_consistency(ref_mask, ref_seg: Segmentation, fw: MatchField, bw: MatchField) -> float:
    """Percentage of ROI pixels whose superpixel comes back to itself through fw then bw."""
    m = _bits(ref_mask)
    if m.shape != ref_seg.shape:
        raise ValueError("mask and segmentation dimensions differ")
    if fw.n_source != ref_seg.count or bw.n_source != fw.n_target:
        raise IndexError("field sizes do not line up with the reference segmentation")
    fmap = np.asarray(fw.map)
    if fmap.size and (fmap.min() < 0 or fmap.max() >= bw.n_source):
        raise IndexError("forward field points outside the backward field")
    bmap = np.asarray(bw.map)
    if bmap.size and (bmap.min() < 0 or bmap.max() >= ref_seg.count):
        raise IndexError("backward field points outside the reference segmentation")
    den = int(m.sum())
    if den == 0:
        return 100.0
    ok = bmap[fmap] == np.arange(ref_seg.count)
    num = int(np.count_nonzero(ok[ref_seg.labels] & m))
    return 100.0 * num / den


@dataclass
class FrameScore:
    frame_index: int
    dice: float
    precision: float
    recall: float
    f_measure: float
    consistency: float | None = None


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)
    note: str = "consistency denominator: superpixel-quantized reference ROI"

    def add(self, frame_index, result, truth, consistency=None, radius=None) -> FrameScore:
        p, r, f = contour_f_measure(result, truth, radius)
        row = FrameScore(int(frame_index), dice(result, truth), p, r, f, consistency)
        self.rows.append(row)
        return row

    def aggregate(self) -> dict:
        out = {}
        for col in CSV_COLUMNS[1:]:
            vals = [getattr(r, col) for r in self.rows if getattr(r, col) is not None]
            out[col] = float(np.mean(vals)) if vals else float("nan")
        return out

    @staticmethod
    def _fmt(v) -> str:
        return "" if v is None else f"{v:.6f}"

    def aggregate_line(self) -> str:
        agg = self.aggregate()
        return ",".join(["mean"] + [self._fmt(agg[c]) for c in CSV_COLUMNS[1:]])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# {self.note}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow([r.frame_index] + [self._fmt(getattr(r, c)) for c in CSV_COLUMNS[1:]])
            fh.write(self.aggregate_line() + "\n")
