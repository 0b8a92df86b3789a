"""Context-rich multi-channel box features evaluated through integral images.

Feature ``m`` at pixel ``p`` is the mean of channel ``c`` over a ``w`` box
centred at ``p + dr``, minus (when ``beta`` is 1) the mean over a ``w2`` box
at ``p + dr2``. Offsets lie in a disc of radius ``radius``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import Frame
from .rng import SplitMix64

PARAM_DTYPE = np.dtype([
    ("w", np.int32), ("w2", np.int32),
    ("dx", np.int32), ("dy", np.int32),
    ("dx2", np.int32), ("dy2", np.int32),
    ("beta", np.int8), ("c", np.int8),
])

BANK_MAGIC = "spxtrack-feature-bank"
BANK_VERSION = 1


@dataclass(frozen=True, eq=False)
class FeatureBank:
    count: int
    radius: int
    box_sizes: tuple
    params: np.ndarray
    seed: int

    def __post_init__(self):
        p = self.params
        p.setflags(write=False)
        if len(p) != self.count:
            raise ValueError("params length differs from count")
        if ((p["dx"] ** 2 + p["dy"] ** 2) > self.radius ** 2).any() or \
                ((p["dx2"] ** 2 + p["dy2"] ** 2) > self.radius ** 2).any():
            raise ValueError("offset outside the disc")

    def __eq__(self, other):
        return (isinstance(other, FeatureBank) and self.count == other.count
                and self.radius == other.radius and self.box_sizes == other.box_sizes
                and self.seed == other.seed and np.array_equal(self.params, other.params))

    @property
    def n_forced(self) -> int:
        return 3 * len(self.box_sizes)


def generate_bank(seed: int, count: int = 80, radius: int = 40, box_sizes=(3, 5, 7)) -> FeatureBank:
    box_sizes = tuple(int(w) for w in box_sizes)
    if any(w < 1 or w % 2 == 0 for w in box_sizes):
        raise ValueError("box sizes must be odd and >= 1")
    if count < 3 * len(box_sizes):
        raise ValueError(f"count {count} too small for {3 * len(box_sizes)} local color features")
    if radius < 1:
        raise ValueError("radius must be >= 1")
    rng = SplitMix64(seed)
    params = np.zeros(count, dtype=PARAM_DTYPE)
    m = 0
    for w in box_sizes:
        for c in range(3):
            params[m] = (w, w, 0, 0, 0, 0, 0, c)
            m += 1

    def offset():
        while True:
            dx = rng.below(2 * radius + 1) - radius
            dy = rng.below(2 * radius + 1) - radius
            if dx * dx + dy * dy <= radius * radius:
                return dx, dy

    nb = len(box_sizes)
    for m in range(m, count):
        dx, dy = offset()
        dx2, dy2 = offset()
        w = box_sizes[rng.below(nb)]
        w2 = box_sizes[rng.below(nb)]
        beta = rng.below(2)
        c = rng.below(3)
        params[m] = (w, w2, dx, dy, dx2, dy2, beta, c)
    return FeatureBank(count, radius, box_sizes, params, int(seed))


def save_bank(bank: FeatureBank, path) -> None:
    lines = [f"{BANK_MAGIC} {BANK_VERSION}",
             f"count {bank.count}", f"radius {bank.radius}", f"seed {bank.seed}",
             "box_sizes " + " ".join(map(str, bank.box_sizes)),
             "# w w2 dx dy dx2 dy2 beta c"]
    for r in bank.params:
        lines.append(" ".join(str(int(v)) for v in r))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_bank(path) -> FeatureBank:
    rows = [ln.split() for ln in Path(path).read_text(encoding="utf-8").splitlines()
            if ln.strip() and not ln.startswith("#")]
    if rows[0] != [BANK_MAGIC, str(BANK_VERSION)]:
        raise ValueError(f"{path}: not a version {BANK_VERSION} feature bank")
    head = {r[0]: r[1:] for r in rows[1:5]}
    params = np.array([tuple(int(v) for v in r) for r in rows[5:]], dtype=PARAM_DTYPE)
    return FeatureBank(int(head["count"][0]), int(head["radius"][0]),
                       tuple(int(v) for v in head["box_sizes"]), params, int(head["seed"][0]))


class IntegralStack:
    """Per-channel summed-area tables of shape (3, H + 1, W + 1), int64."""

    def __init__(self, frame: Frame):
        H, W = frame.height, frame.width
        t = np.zeros((3, H + 1, W + 1), dtype=np.int64)
        img = frame.data.astype(np.int64).transpose(2, 0, 1)
        t[:, 1:, 1:] = img.cumsum(axis=1).cumsum(axis=2)
        t.setflags(write=False)
        self.tables = t
        self.height = H
        self.width = W

    def _box(self, x, y, w, c):
        # x, y already clamped; window clipped to the image, divided by its true area
        h = w // 2
        x0 = np.maximum(x - h, 0)
        x1 = np.minimum(x + h, self.width - 1)
        y0 = np.maximum(y - h, 0)
        y1 = np.minimum(y + h, self.height - 1)
        t = self.tables[c]
        s = t[y1 + 1, x1 + 1] - t[y0, x1 + 1] - t[y1 + 1, x0] + t[y0, x0]
        area = (x1 - x0 + 1) * (y1 - y0 + 1)
        return s / area


def box_mean(stack: IntegralStack, center, w: int, c: int) -> float:
    x = min(max(int(center[0]), 0), stack.width - 1)
    y = min(max(int(center[1]), 0), stack.height - 1)
    return float(stack._box(np.int64(x), np.int64(y), int(w), int(c)))


def features_at(stack: IntegralStack, pixel, bank: FeatureBank) -> np.ndarray:
    x, y = int(pixel[0]), int(pixel[1])
    out = np.empty(bank.count)
    for m, p in enumerate(bank.params):
        a = box_mean(stack, (x + p["dx"], y + p["dy"]), p["w"], p["c"])
        if p["beta"]:
            a = a - box_mean(stack, (x + p["dx2"], y + p["dy2"]), p["w2"], p["c"])
        out[m] = a
    return out


def compute_features(stack: IntegralStack, bank: FeatureBank) -> np.ndarray:
    """Feature matrix for every pixel, shape (H * W, count), rows row-major."""
    H, W = stack.height, stack.width
    ys, xs = np.divmod(np.arange(H * W, dtype=np.int64), W)
    out = np.empty((H * W, bank.count), dtype=np.float64)

    def at(dx, dy, w, c):
        return stack._box(np.clip(xs + dx, 0, W - 1), np.clip(ys + dy, 0, H - 1), int(w), int(c))

    for m, p in enumerate(bank.params):
        a = at(p["dx"], p["dy"], p["w"], p["c"])
        if p["beta"]:
            a = a - at(p["dx2"], p["dy2"], p["w2"], p["c"])
        out[:, m] = a
    return out


def frame_features(frame: Frame, bank: FeatureBank) -> np.ndarray:
    return compute_features(IntegralStack(frame), bank)
