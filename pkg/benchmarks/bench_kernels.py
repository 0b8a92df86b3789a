"""Time each hot kernel under the compiled extension and the pure-Python twin.

    python3 benchmarks/bench_kernels.py [--repeat N]

Also checks that both backends return identical results on every input.
"""
import argparse
import time

import numpy as np
from skimage.color import rgb2lab

from spxtrack import _pure
from spxtrack.classifiers import _xlogx
from spxtrack.features import frame_features, generate_bank
from spxtrack.slic import SlicConfig, segment
from spxtrack.synthetic import textured_frame

try:
    from spxtrack import _core
except ImportError:  # extension not built
    _core = None


def cases():
    frame = textured_frame(120, 160, seed=1)
    lab = np.ascontiguousarray(rgb2lab(frame.data), dtype=np.float64)
    rng = np.random.default_rng(0)
    centers = np.column_stack([rng.random(150) * 119, rng.random(150) * 159,
                               lab[rng.integers(0, 120, 150), rng.integers(0, 160, 150)]])
    seg = segment(frame, SlicConfig(target_count=150))
    bank = generate_bank(1)
    X = np.ascontiguousarray(frame_features(frame, bank))
    y = seg.labels.ravel().astype(np.int32)
    sample = rng.integers(0, len(y), len(y)).astype(np.int32)
    small = rng.integers(0, 256, (40 * 40, 20)).astype(np.float64)

    def slic(mod):
        labels = np.empty((120, 160), np.int32)
        dist = np.empty((120, 160))
        mod.slic_assign(lab, centers, 2 * 11.3, (10 / 11.3) ** 2, labels, dist)
        return labels

    def grow(mod):
        return mod.grow_tree(X, y, sample, seg.count, _xlogx(len(y)), 20, 5, 9, 10, 7)

    tree = _pure.grow_tree(X, y, sample, seg.count, _xlogx(len(y)), 20, 5, 9, 10, 7)
    return [
        ("slic_assign 160x120, 150 centers", slic),
        ("connected_components 160x120", lambda m: m.connected_components(seg.labels)),
        ("grow_tree 19200 px x 80 features", grow),
        ("apply_tree 19200 px", lambda m: m.apply_tree(X, *tree[:5])),
        ("knn_query 1600 x 1600, k=5", lambda m: m.knn_query(small, small[::-1].copy(), 5)),
    ]


def same(a, b):
    if isinstance(a, tuple):
        return all(same(u, v) for u, v in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _core is None:
        print("compiled extension not built; nothing to compare")
        return
    print(f"{'kernel':36s} {'compiled s':>11s} {'pure s':>9s} {'speedup':>8s}  identical")
    for name, fn in cases():
        tc, rc = best_of(lambda: fn(_core), args.repeat)
        tp, rp = best_of(lambda: fn(_pure), 1)
        print(f"{name:36s} {tc:11.4f} {tp:9.3f} {tp / tc:7.1f}x  {same(rc, rp)}")


if __name__ == "__main__":
    main()
