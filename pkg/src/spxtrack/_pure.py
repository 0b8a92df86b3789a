"""Reference numpy/pure-Python implementations of the compiled kernels.

Every function here is bit-identical to its ``_core`` counterpart: same draw
order from the SplitMix64 stream, same summation order, same tie rules.
"""
from __future__ import annotations

import math
from collections import deque

import numpy as np

from .rng import SplitMix64


def slic_assign(lab, centers, radius, ratio2, labels, dist):
    H, W = lab.shape[:2]
    labels.fill(-1)
    dist.fill(1e300)
    for k in range(centers.shape[0]):
        cy, cx, cl, ca, cb = centers[k]
        y0 = max(int(math.ceil(cy - radius)), 0)
        y1 = min(int(math.floor(cy + radius)), H - 1)
        x0 = max(int(math.ceil(cx - radius)), 0)
        x1 = min(int(math.floor(cx + radius)), W - 1)
        if y1 < y0 or x1 < x0:
            continue
        sub = lab[y0:y1 + 1, x0:x1 + 1]
        dl = sub[..., 0] - cl
        da = sub[..., 1] - ca
        db = sub[..., 2] - cb
        dy = np.arange(y0, y1 + 1, dtype=np.float64)[:, None] - cy
        dx = np.arange(x0, x1 + 1, dtype=np.float64)[None, :] - cx
        dc = dl * dl + da * da + db * db
        ds = dy * dy + dx * dx
        d = dc + ratio2 * ds
        region = dist[y0:y1 + 1, x0:x1 + 1]
        better = d < region
        region[better] = d[better]
        labels[y0:y1 + 1, x0:x1 + 1][better] = k
    for y, x in zip(*np.nonzero(labels < 0)):
        best = 1e300
        for k in range(centers.shape[0]):
            cy, cx, cl, ca, cb = centers[k]
            dl = lab[y, x, 0] - cl
            da = lab[y, x, 1] - ca
            db = lab[y, x, 2] - cb
            dy = y - cy
            dx = x - cx
            d = (dl * dl + da * da + db * db) + ratio2 * (dy * dy + dx * dx)
            if d < best:
                best = d
                labels[y, x] = k
        dist[y, x] = best


def connected_components(labels):
    H, W = labels.shape
    flat = labels.ravel()
    comp = np.full(H * W, -1, dtype=np.int32)
    n = 0
    for start in range(H * W):
        if comp[start] >= 0:
            continue
        lab = flat[start]
        comp[start] = n
        queue = deque([start])
        while queue:
            p = queue.popleft()
            py, px = divmod(p, W)
            for q, ok in ((p - W, py > 0), (p + W, py < H - 1), (p - 1, px > 0), (p + 1, px < W - 1)):
                if ok and comp[q] < 0 and flat[q] == lab:
                    comp[q] = n
                    queue.append(q)
        n += 1
    return comp.reshape(H, W), n


def grow_tree(X, y, sample, n_classes, xlogx, max_depth, min_leaf, n_feat, n_thresh, seed):
    K = X.shape[1]
    rng = SplitMix64(seed)
    nf = min(n_feat, K)
    feature, threshold, left, right, leaf_id = [-1], [0.0], [-1], [-1], [-1]
    leaf_ptr, leaf_cls, leaf_cnt = [0], [], []
    n_leaves = 0
    stack = [(0, np.asarray(sample, dtype=np.int64), 0)]
    while stack:
        node, idx, depth = stack.pop()
        n = idx.size
        ys = y[idx]
        counts = np.bincount(ys, minlength=n_classes)
        present = np.flatnonzero(counts)
        pcnt = counts[present]
        P = present.size
        best_f, best_tau = -1, 0.0
        if depth < max_depth and n >= 2 * min_leaf and P > 1:
            parent_cost = xlogx[n] - np.cumsum(xlogx[pcnt])[-1]
            best_gain = 1e-9
            local = np.searchsorted(present, ys)
            perm = list(range(K))
            for j in range(nf):
                r = j + rng.below(K - j)
                perm[j], perm[r] = perm[r], perm[j]
                f = perm[j]
                vals = X[idx, f]
                mn, mx = vals.min(), vals.max()
                if not mn < mx:
                    continue
                tau = np.array([mn + rng.uniform() * (mx - mn) for _ in range(n_thresh)])
                order = np.argsort(tau, kind="stable")
                bins = np.searchsorted(tau[order], vals, side="left")
                hist = np.zeros((n_thresh + 1, P), dtype=np.int64)
                np.add.at(hist, (bins, local), 1)
                lefts = np.cumsum(hist, axis=0)[:n_thresh]
                rank = np.empty(n_thresh, dtype=np.int64)
                rank[order] = np.arange(n_thresh)
                for t in range(n_thresh):
                    lc = lefts[rank[t]]
                    nl = int(lc.sum())
                    nr = n - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    cost_l = xlogx[nl] - np.cumsum(xlogx[lc])[-1]
                    cost_r = xlogx[nr] - np.cumsum(xlogx[pcnt - lc])[-1]
                    gain = parent_cost - cost_l - cost_r
                    if gain > best_gain:
                        best_gain, best_f, best_tau = gain, f, tau[t]
        if best_f < 0:
            leaf_id[node] = n_leaves
            n_leaves += 1
            leaf_cls.extend(present.tolist())
            leaf_cnt.extend(pcnt.tolist())
            leaf_ptr.append(len(leaf_cls))
            continue
        go_left = X[idx, best_f] <= best_tau
        nid = len(feature)
        feature[node], threshold[node], left[node], right[node] = best_f, float(best_tau), nid, nid + 1
        for _ in range(2):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            leaf_id.append(-1)
        stack.append((nid + 1, idx[~go_left], depth + 1))
        stack.append((nid, idx[go_left], depth + 1))
    return (
        np.array(feature, dtype=np.int32),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int32),
        np.array(right, dtype=np.int32),
        np.array(leaf_id, dtype=np.int32),
        np.array(leaf_ptr, dtype=np.int64),
        np.array(leaf_cls, dtype=np.int32),
        np.array(leaf_cnt, dtype=np.int64),
    )


def apply_tree(X, feature, threshold, left, right, leaf_id):
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = leaf_id[node] < 0
    while active.any():
        a = node[active]
        go_right = X[rows[active], feature[a]] > threshold[a]
        node[active] = np.where(go_right, right[a], left[a])
        active = leaf_id[node] < 0
    return leaf_id[node].astype(np.int32)


def knn_query(train, queries, k, block=256):
    m, K = train.shape
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    index = np.arange(m)
    for s in range(0, queries.shape[0], block):
        q = queries[s:s + block]
        d = np.zeros((q.shape[0], m))
        for f in range(K):
            diff = train[None, :, f] - q[:, f, None]
            d += diff * diff
        for r in range(q.shape[0]):
            order = np.lexsort((index, d[r]))
            out[s + r] = order[:k]
    return out
