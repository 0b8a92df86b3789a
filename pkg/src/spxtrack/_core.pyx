# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled hot loops. ``_pure`` holds the reference twin of every function here."""
import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, floor
from libc.stdint cimport uint64_t, int32_t, int64_t
from libcpp.vector cimport vector

cnp.import_array()

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _next(uint64_t* state) noexcept nogil:
    state[0] = state[0] + GAMMA
    return _mix(state[0])


cdef inline double _uniform(uint64_t* state) noexcept nogil:
    return <double>(_next(state) >> 11) * (1.0 / 9007199254740992.0)


cdef inline uint64_t _below(uint64_t* state, uint64_t n) noexcept nogil:
    # limit = 2**64 - (2**64 % n), computed without 128-bit arithmetic
    cdef uint64_t rem = (0xFFFFFFFFFFFFFFFFULL % n + 1) % n
    cdef uint64_t x
    while True:
        x = _next(state)
        if rem == 0 or x < <uint64_t>(0 - rem):
            return x % n


# ---------------------------------------------------------------- SLIC

def slic_assign(double[:, :, ::1] lab, double[:, ::1] centers, double radius,
                double ratio2, int32_t[:, ::1] labels, double[:, ::1] dist):
    """One assignment sweep. ``centers`` rows are (y, x, L, a, b)."""
    cdef Py_ssize_t H = lab.shape[0], W = lab.shape[1], C = centers.shape[0]
    cdef Py_ssize_t k, y, x, y0, y1, x0, x1
    cdef double cy, cx, dl, da, db, dy, dx, dc, ds, d
    with nogil:
        for y in range(H):
            for x in range(W):
                labels[y, x] = -1
                dist[y, x] = 1e300
        for k in range(C):
            cy = centers[k, 0]
            cx = centers[k, 1]
            y0 = <Py_ssize_t>ceil(cy - radius)
            y1 = <Py_ssize_t>floor(cy + radius)
            x0 = <Py_ssize_t>ceil(cx - radius)
            x1 = <Py_ssize_t>floor(cx + radius)
            if y0 < 0:
                y0 = 0
            if x0 < 0:
                x0 = 0
            if y1 > H - 1:
                y1 = H - 1
            if x1 > W - 1:
                x1 = W - 1
            for y in range(y0, y1 + 1):
                for x in range(x0, x1 + 1):
                    dl = lab[y, x, 0] - centers[k, 2]
                    da = lab[y, x, 1] - centers[k, 3]
                    db = lab[y, x, 2] - centers[k, 4]
                    dy = y - cy
                    dx = x - cx
                    dc = dl * dl + da * da + db * db
                    ds = dy * dy + dx * dx
                    d = dc + ratio2 * ds
                    if d < dist[y, x]:
                        dist[y, x] = d
                        labels[y, x] = <int32_t>k
        # pixels outside every window fall back to a global search
        for y in range(H):
            for x in range(W):
                if labels[y, x] >= 0:
                    continue
                for k in range(C):
                    dl = lab[y, x, 0] - centers[k, 2]
                    da = lab[y, x, 1] - centers[k, 3]
                    db = lab[y, x, 2] - centers[k, 4]
                    dy = y - centers[k, 0]
                    dx = x - centers[k, 1]
                    dc = dl * dl + da * da + db * db
                    ds = dy * dy + dx * dx
                    d = dc + ratio2 * ds
                    if d < dist[y, x]:
                        dist[y, x] = d
                        labels[y, x] = <int32_t>k


def connected_components(int32_t[:, ::1] labels):
    """4-connected components of equal labels, numbered by first raster pixel."""
    cdef Py_ssize_t H = labels.shape[0], W = labels.shape[1]
    comp_arr = np.full((H, W), -1, dtype=np.int32)
    cdef int32_t[:, ::1] comp = comp_arr
    cdef vector[int64_t] queue
    cdef Py_ssize_t head, p, py, px, y, x
    cdef int32_t n = 0, lab
    with nogil:
        for y in range(H):
            for x in range(W):
                if comp[y, x] >= 0:
                    continue
                lab = labels[y, x]
                comp[y, x] = n
                queue.clear()
                queue.push_back(y * W + x)
                head = 0
                while head < <Py_ssize_t>queue.size():
                    p = queue[head]
                    head += 1
                    py = p // W
                    px = p - py * W
                    if py > 0 and comp[py - 1, px] < 0 and labels[py - 1, px] == lab:
                        comp[py - 1, px] = n
                        queue.push_back(p - W)
                    if py < H - 1 and comp[py + 1, px] < 0 and labels[py + 1, px] == lab:
                        comp[py + 1, px] = n
                        queue.push_back(p + W)
                    if px > 0 and comp[py, px - 1] < 0 and labels[py, px - 1] == lab:
                        comp[py, px - 1] = n
                        queue.push_back(p - 1)
                    if px < W - 1 and comp[py, px + 1] < 0 and labels[py, px + 1] == lab:
                        comp[py, px + 1] = n
                        queue.push_back(p + 1)
                n += 1
    return comp_arr, int(n)


# ---------------------------------------------------------------- forest

cdef struct Frame_:
    int32_t node
    int64_t start
    int64_t end
    int32_t depth


def grow_tree(const double[:, ::1] X, const int32_t[::1] y, const int32_t[::1] sample,
              int n_classes, const double[::1] xlogx, int max_depth, int min_leaf,
              int n_feat, int n_thresh, uint64_t seed):
    """Grow one tree greedily on ``X[sample]``; see ``_pure.grow_tree``."""
    cdef Py_ssize_t K = X.shape[1]
    cdef int64_t n_all = sample.shape[0]
    idx_arr = np.array(sample, dtype=np.int32, copy=True)
    cdef int32_t[::1] idx = idx_arr
    perm_arr = np.empty(K, dtype=np.int32)
    cdef int32_t[::1] perm = perm_arr
    counts_arr = np.zeros(n_classes, dtype=np.int64)
    cdef int64_t[::1] counts = counts_arr
    local_arr = np.full(n_classes, -1, dtype=np.int32)
    cdef int32_t[::1] local = local_arr
    tau_arr = np.empty(n_thresh, dtype=np.float64)
    cdef double[::1] tau = tau_arr
    order_arr = np.empty(n_thresh, dtype=np.int32)
    cdef int32_t[::1] order = order_arr
    cdef vector[int32_t] feature, left, right, leaf_id, present, leaf_cls
    cdef vector[double] threshold
    cdef vector[int64_t] leaf_cnt, leaf_ptr, binhist, parent_cnt
    cdef vector[Frame_] stack
    cdef Frame_ fr, ch
    cdef uint64_t state = seed
    cdef int64_t i, n, nl, nr, s0, s1, lo, hi, cl, cr
    cdef Py_ssize_t j, t, f, P, b, r, tmp_i, best_f
    cdef int32_t c, n_nodes = 1, n_leaves = 0
    cdef double parent_cost, cost_l, cost_r, gain, best_gain, best_tau, mn, mx, v, tmp
    cdef int nf = n_feat if n_feat < K else <int>K

    leaf_ptr.push_back(0)
    with nogil:
        feature.push_back(-1)
        threshold.push_back(0.0)
        left.push_back(-1)
        right.push_back(-1)
        leaf_id.push_back(-1)
        fr.node = 0
        fr.start = 0
        fr.end = n_all
        fr.depth = 0
        stack.push_back(fr)
        while stack.size() > 0:
            fr = stack.back()
            stack.pop_back()
            s0 = fr.start
            s1 = fr.end
            n = s1 - s0
            for i in range(s0, s1):
                counts[y[idx[i]]] += 1
            present.clear()
            parent_cnt.clear()
            for c in range(n_classes):
                if counts[c] > 0:
                    local[c] = <int32_t>present.size()
                    present.push_back(c)
                    parent_cnt.push_back(counts[c])
                    counts[c] = 0
            P = present.size()
            best_f = -1
            best_tau = 0.0
            if fr.depth < max_depth and n >= 2 * min_leaf and P > 1:
                parent_cost = 0.0
                for j in range(P):
                    parent_cost = parent_cost + xlogx[parent_cnt[j]]
                parent_cost = xlogx[n] - parent_cost
                best_gain = 1e-9
                for j in range(K):
                    perm[j] = <int32_t>j
                binhist.resize((n_thresh + 1) * P)
                for j in range(nf):
                    r = j + <Py_ssize_t>_below(&state, <uint64_t>(K - j))
                    tmp_i = perm[j]
                    perm[j] = perm[r]
                    perm[r] = <int32_t>tmp_i
                    f = perm[j]
                    mn = X[idx[s0], f]
                    mx = mn
                    for i in range(s0 + 1, s1):
                        v = X[idx[i], f]
                        if v < mn:
                            mn = v
                        if v > mx:
                            mx = v
                    if not (mn < mx):
                        continue
                    for t in range(n_thresh):
                        tau[t] = mn + _uniform(&state) * (mx - mn)
                        order[t] = <int32_t>t
                    # insertion sort of threshold ranks (stable)
                    for t in range(1, n_thresh):
                        tmp_i = order[t]
                        b = t - 1
                        while b >= 0 and tau[order[b]] > tau[tmp_i]:
                            order[b + 1] = order[b]
                            b -= 1
                        order[b + 1] = <int32_t>tmp_i
                    for b in range((n_thresh + 1) * P):
                        binhist[b] = 0
                    for i in range(s0, s1):
                        v = X[idx[i], f]
                        # bin = number of sorted thresholds strictly below v
                        lo = 0
                        hi = n_thresh
                        while lo < hi:
                            b = (lo + hi) // 2
                            if tau[order[b]] < v:
                                lo = b + 1
                            else:
                                hi = b
                        binhist[lo * P + local[y[idx[i]]]] += 1
                    # cumulative: row b holds left counts for sorted threshold b
                    for b in range(1, n_thresh):
                        for t in range(P):
                            binhist[b * P + t] += binhist[(b - 1) * P + t]
                    for t in range(n_thresh):
                        # rank of draw t among sorted thresholds
                        for b in range(n_thresh):
                            if order[b] == t:
                                break
                        nl = 0
                        for r in range(P):
                            nl += binhist[b * P + r]
                        nr = n - nl
                        if nl < min_leaf or nr < min_leaf:
                            continue
                        cost_l = 0.0
                        cost_r = 0.0
                        for r in range(P):
                            cl = binhist[b * P + r]
                            cost_l = cost_l + xlogx[cl]
                            cost_r = cost_r + xlogx[parent_cnt[r] - cl]
                        cost_l = xlogx[nl] - cost_l
                        cost_r = xlogx[nr] - cost_r
                        gain = parent_cost - cost_l - cost_r
                        if gain > best_gain:
                            best_gain = gain
                            best_f = f
                            best_tau = tau[t]
            for j in range(P):
                local[present[j]] = -1
            if best_f < 0:
                leaf_id[fr.node] = n_leaves
                n_leaves += 1
                for j in range(P):
                    leaf_cls.push_back(present[j])
                    leaf_cnt.push_back(parent_cnt[j])
                leaf_ptr.push_back(leaf_cls.size())
                continue
            # partition: left block holds values <= tau
            lo = s0
            hi = s1 - 1
            while lo <= hi:
                if X[idx[lo], best_f] <= best_tau:
                    lo += 1
                else:
                    tmp_i = idx[lo]
                    idx[lo] = idx[hi]
                    idx[hi] = <int32_t>tmp_i
                    hi -= 1
            feature[fr.node] = <int32_t>best_f
            threshold[fr.node] = best_tau
            left[fr.node] = n_nodes
            right[fr.node] = n_nodes + 1
            for j in range(2):
                feature.push_back(-1)
                threshold.push_back(0.0)
                left.push_back(-1)
                right.push_back(-1)
                leaf_id.push_back(-1)
            ch.depth = fr.depth + 1
            ch.node = n_nodes + 1
            ch.start = lo
            ch.end = s1
            stack.push_back(ch)
            ch.node = n_nodes
            ch.start = s0
            ch.end = lo
            stack.push_back(ch)
            n_nodes += 2

    cdef Py_ssize_t m = feature.size(), q = leaf_cls.size()
    out_feature = np.empty(m, dtype=np.int32)
    out_threshold = np.empty(m, dtype=np.float64)
    out_left = np.empty(m, dtype=np.int32)
    out_right = np.empty(m, dtype=np.int32)
    out_leaf = np.empty(m, dtype=np.int32)
    for j in range(m):
        out_feature[j] = feature[j]
        out_threshold[j] = threshold[j]
        out_left[j] = left[j]
        out_right[j] = right[j]
        out_leaf[j] = leaf_id[j]
    out_ptr = np.empty(leaf_ptr.size(), dtype=np.int64)
    for j in range(<Py_ssize_t>leaf_ptr.size()):
        out_ptr[j] = leaf_ptr[j]
    out_cls = np.empty(q, dtype=np.int32)
    out_cnt = np.empty(q, dtype=np.int64)
    for j in range(q):
        out_cls[j] = leaf_cls[j]
        out_cnt[j] = leaf_cnt[j]
    return out_feature, out_threshold, out_left, out_right, out_leaf, out_ptr, out_cls, out_cnt


def apply_tree(const double[:, ::1] X, const int32_t[::1] feature, const double[::1] threshold,
               const int32_t[::1] left, const int32_t[::1] right, const int32_t[::1] leaf_id):
    """Route every row of ``X`` to its leaf index (go right iff value > threshold)."""
    cdef Py_ssize_t n = X.shape[0], i
    cdef int32_t node
    out_arr = np.empty(n, dtype=np.int32)
    cdef int32_t[::1] out = out_arr
    with nogil:
        for i in range(n):
            node = 0
            while leaf_id[node] < 0:
                if X[i, feature[node]] > threshold[node]:
                    node = right[node]
                else:
                    node = left[node]
            out[i] = leaf_id[node]
    return out_arr


# ---------------------------------------------------------------- kNN

def knn_query(const double[:, ::1] train, const double[:, ::1] queries, int k):
    """Exact k nearest training rows per query, ordered by (distance, index)."""
    cdef Py_ssize_t m = train.shape[0], q = queries.shape[0], K = train.shape[1]
    cdef Py_ssize_t qi, i, f, a, worst
    cdef double d, diff, wd
    out_arr = np.empty((q, k), dtype=np.int64)
    cdef int64_t[:, ::1] out = out_arr
    bd_arr = np.empty(k, dtype=np.float64)
    bi_arr = np.empty(k, dtype=np.int64)
    cdef double[::1] bd = bd_arr
    cdef int64_t[::1] bi = bi_arr
    cdef Py_ssize_t filled
    with nogil:
        for qi in range(q):
            filled = 0
            worst = 0
            wd = 0.0
            for i in range(m):
                d = 0.0
                if filled == k:
                    for f in range(K):
                        diff = train[i, f] - queries[qi, f]
                        d = d + diff * diff
                        if d > wd:
                            break
                    # indexes increase, so equal distance never displaces
                    if d >= wd:
                        continue
                    bd[worst] = d
                    bi[worst] = i
                else:
                    for f in range(K):
                        diff = train[i, f] - queries[qi, f]
                        d = d + diff * diff
                    bd[filled] = d
                    bi[filled] = i
                    filled += 1
                    if filled < k:
                        continue
                # recompute the current worst (largest distance, then largest index)
                worst = 0
                for a in range(1, k):
                    if bd[a] > bd[worst] or (bd[a] == bd[worst] and bi[a] > bi[worst]):
                        worst = a
                wd = bd[worst]
            # sort the k survivors by (distance, index)
            for a in range(1, k):
                d = bd[a]
                i = bi[a]
                f = a - 1
                while f >= 0 and (bd[f] > d or (bd[f] == d and bi[f] > i)):
                    bd[f + 1] = bd[f]
                    bi[f + 1] = bi[f]
                    f -= 1
                bd[f + 1] = d
                bi[f + 1] = i
            for a in range(k):
                out[qi, a] = bi[a]
    return out_arr
