"""Brute-force reference implementations used as test oracles."""
import numpy as np


def knn_oracle(train, queries, labels, k, n_classes):
    """Exhaustive k-NN class frequencies; distance ties go to the lower training index."""
    train = np.asarray(train, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    d = np.zeros((len(queries), len(train)))
    for f in range(train.shape[1]):  # accumulate feature by feature
        diff = queries[:, None, f] - train[None, :, f]
        d += diff * diff
    out = np.zeros((len(queries), n_classes))
    idx = np.arange(len(train))
    for q in range(len(queries)):
        order = np.lexsort((idx, d[q]))[:k]
        for j in order:
            out[q, labels[j]] += 1.0 / k
    return out


def plurality_oracle(pixel_map, labels, n_target):
    """Per superpixel, the most frequent predicted index (lowest on ties)."""
    out = []
    for i in range(labels.max() + 1):
        vals = pixel_map[labels == i]
        counts = np.bincount(vals, minlength=n_target)
        out.append(int(np.argmax(counts)))
    return np.array(out)


def boundary_oracle(mask):
    h, w = mask.shape
    out = np.zeros_like(mask)
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            if x in (0, w - 1) or y in (0, h - 1):
                out[y, x] = True
                continue
            if not (mask[y - 1, x] and mask[y + 1, x] and mask[y, x - 1] and mask[y, x + 1]):
                out[y, x] = True
    return out


def contour_oracle(x, y, radius):
    """Precision/recall/F by scanning each boundary pixel's distance to the other boundary."""
    bx, by = boundary_oracle(x), boundary_oracle(y)
    px, py = np.argwhere(bx), np.argwhere(by)
    if len(px) == 0 and len(py) == 0:
        return 1.0, 1.0, 1.0
    if len(px) == 0 or len(py) == 0:
        return 0.0, 0.0, 0.0

    def frac(a, b):
        hits = 0
        for p in a:
            d2 = ((b - p) ** 2).sum(axis=1).min()
            hits += d2 <= radius * radius
        return hits / len(a)
    p, r = frac(px, py), frac(py, px)
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def consistency_oracle(mask, labels, fw_map, bw_map):
    num = den = 0
    h, w = labels.shape
    for yy in range(h):
        for xx in range(w):
            if mask[yy, xx]:
                den += 1
                f = labels[yy, xx]
                num += bw_map[fw_map[f]] == f
    return 100.0 if den == 0 else 100.0 * num / den


def identity_field(n, a=0, b=1):
    from spxtrack.matching import MatchField
    return MatchField(a, b, np.arange(n), n)
