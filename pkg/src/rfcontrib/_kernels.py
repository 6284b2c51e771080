"""Compiled inner loops for tree growing, traversal and decomposition.

All kernels are ``nogil`` so the Python layer can fan work out over threads.
Per-row accumulation always runs over trees in ascending index order.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0

MODE_PLAIN = 0
MODE_OOB = 1
MODE_INBAG = 2


@njit(cache=True, nogil=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def next_u64(state):
    state[0] += _GOLDEN
    return _mix(state[0])


@njit(cache=True, nogil=True)
def uniform(state):
    return np.float64(next_u64(state) >> np.uint64(11)) * _INV53


@njit(cache=True, nogil=True)
def randint(state, n):
    return int(uniform(state) * n)


@njit(cache=True, nogil=True)
def bootstrap(state, n_rows, sample_size, replace, class_rows, class_offsets, strat_counts):
    weights = np.zeros(n_rows, np.int64)
    if strat_counts.shape[0] == 0:
        if replace:
            for _ in range(sample_size):
                weights[randint(state, n_rows)] += 1
        else:
            perm = np.arange(n_rows)
            for t in range(sample_size):
                r = t + randint(state, n_rows - t)
                tmp = perm[t]
                perm[t] = perm[r]
                perm[r] = tmp
                weights[perm[t]] += 1
    else:
        for k in range(strat_counts.shape[0]):
            lo = class_offsets[k]
            m = class_offsets[k + 1] - lo
            if replace:
                for _ in range(strat_counts[k]):
                    weights[class_rows[lo + randint(state, m)]] += 1
            else:
                perm = class_rows[lo:lo + m].copy()
                for t in range(strat_counts[k]):
                    r = t + randint(state, m - t)
                    tmp = perm[t]
                    perm[t] = perm[r]
                    perm[r] = tmp
                    weights[perm[t]] += 1
    return weights


@njit(cache=True, nogil=True)
def _node_score(wl, sl, cl, wt, st, ct, n_classes):
    # Larger is better. Regression: SL^2/nL + SR^2/nR (so SSE = sum w*y^2 - score).
    # Classification: sum_k nLk^2/nL + sum_k nRk^2/nR (so weighted Gini = n - score).
    wr = wt - wl
    if n_classes == 0:
        sr = st - sl
        return sl * sl / wl + sr * sr / wr
    a = 0.0
    b = 0.0
    for k in range(n_classes):
        a += cl[k] * cl[k]
        r = ct[k] - cl[k]
        b += r * r
    return a / wl + b / wr


@njit(cache=True, nogil=True)
def find_split(X, y_reg, y_cls, n_classes, is_cat, n_levels, weights, rows, start, end, candidates):
    """Best split of ``rows[start:end]`` over ``candidates`` (in draw order).

    Returns ``(feature, threshold, mask, score)``; ``feature == -1`` when no
    candidate separates the rows into two non-empty children.
    """
    m = end - start
    nc = n_classes if n_classes > 0 else 1
    wt = 0.0
    st = 0.0
    ct = np.zeros(nc)
    for p in range(start, end):
        r = rows[p]
        w = weights[r]
        wt += w
        if n_classes == 0:
            st += w * y_reg[r]
        else:
            ct[y_cls[r]] += w

    best_f = -1
    best_thr = 0.0
    best_mask = np.int64(0)
    best_score = -np.inf
    xs = np.empty(m)
    cl = np.zeros(nc)
    for ci in range(candidates.shape[0]):
        f = candidates[ci]
        for p in range(m):
            xs[p] = X[rows[start + p], f]
        if is_cat[f]:
            nl = n_levels[f]
            lw = np.zeros(nl)
            ls = np.zeros(nl)
            lc = np.zeros((nl, nc))
            for p in range(m):
                r = rows[start + p]
                lev = int(xs[p]) - 1
                w = weights[r]
                lw[lev] += w
                if n_classes == 0:
                    ls[lev] += w * y_reg[r]
                else:
                    lc[lev, y_cls[r]] += w
            n_masks = (np.int64(1) << (nl - 1)) - 1
            for mask in range(1, n_masks + 1):
                wl = 0.0
                sl = 0.0
                for k in range(nc):
                    cl[k] = 0.0
                for lev in range(nl - 1):
                    if (mask >> lev) & 1:
                        wl += lw[lev]
                        sl += ls[lev]
                        for k in range(nc):
                            cl[k] += lc[lev, k]
                if wl == 0.0 or wl == wt:
                    continue
                score = _node_score(wl, sl, cl, wt, st, ct, n_classes)
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_mask = np.int64(mask)
                    best_thr = 0.0
        else:
            order = np.argsort(xs, kind="mergesort")
            wl = 0.0
            sl = 0.0
            for k in range(nc):
                cl[k] = 0.0
            for q in range(m - 1):
                r = rows[start + order[q]]
                w = weights[r]
                wl += w
                if n_classes == 0:
                    sl += w * y_reg[r]
                else:
                    cl[y_cls[r]] += w
                lo = xs[order[q]]
                hi = xs[order[q + 1]]
                if lo == hi:
                    continue
                score = _node_score(wl, sl, cl, wt, st, ct, n_classes)
                if score > best_score:
                    best_score = score
                    best_f = f
                    thr = 0.5 * (lo + hi)
                    if thr >= hi:
                        thr = lo
                    best_thr = thr
                    best_mask = np.int64(0)
    return best_f, best_thr, best_mask, best_score


@njit(cache=True, nogil=True)
def goes_left(value, is_categorical, threshold, mask):
    if is_categorical:
        return ((mask >> (int(value) - 1)) & 1) == 1
    return value <= threshold


@njit(cache=True, nogil=True)
def grow_tree(X, y_reg, y_cls, n_classes, is_cat, n_levels, weights, mtry, min_node_size, state):
    n, d = X.shape
    nc = n_classes if n_classes > 0 else 1
    rows = np.nonzero(weights)[0]
    m = rows.shape[0]
    cap = max(2 * m - 1, 1)
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap)
    cat_mask = np.zeros(cap, np.int64)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    count = np.zeros(cap, np.int64)
    value = np.zeros((cap, nc))

    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    sp = 0
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = m
    sp = 1
    n_nodes = 1
    perm = np.arange(d)
    cand = np.empty(mtry, np.int64)
    buf = np.empty(m, np.int64)

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        lo = st_lo[sp]
        hi = st_hi[sp]

        wsum = 0
        s = 0.0
        ymin = np.inf
        ymax = -np.inf
        for p in range(lo, hi):
            r = rows[p]
            w = weights[r]
            wsum += w
            if n_classes == 0:
                s += w * y_reg[r]
                if y_reg[r] < ymin:
                    ymin = y_reg[r]
                if y_reg[r] > ymax:
                    ymax = y_reg[r]
            else:
                value[node, y_cls[r]] += w
        count[node] = wsum
        pure = False
        if n_classes == 0:
            value[node, 0] = s / wsum
            pure = ymin == ymax
        else:
            for k in range(nc):
                if value[node, k] == wsum:
                    pure = True
                value[node, k] = value[node, k] / wsum
        if wsum <= min_node_size or pure or hi - lo < 2:
            continue

        for t in range(mtry):
            r = t + randint(state, d - t)
            tmp = perm[t]
            perm[t] = perm[r]
            perm[r] = tmp
            cand[t] = perm[t]
        f, thr, mask, _ = find_split(X, y_reg, y_cls, n_classes, is_cat, n_levels, weights, rows, lo, hi, cand)
        if f < 0:
            continue

        # stable partition by the same predicate used at prediction time
        nl = 0
        for p in range(lo, hi):
            if goes_left(X[rows[p], f], is_cat[f], thr, mask):
                buf[nl] = rows[p]
                nl += 1
        k2 = nl
        for p in range(lo, hi):
            if not goes_left(X[rows[p], f], is_cat[f], thr, mask):
                buf[k2] = rows[p]
                k2 += 1
        for p in range(hi - lo):
            rows[lo + p] = buf[p]

        feature[node] = f
        threshold[node] = thr
        cat_mask[node] = mask
        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        left[node] = li
        right[node] = ri
        st_node[sp] = ri
        st_lo[sp] = lo + nl
        st_hi[sp] = hi
        sp += 1
        st_node[sp] = li
        st_lo[sp] = lo
        st_hi[sp] = lo + nl
        sp += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), cat_mask[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(), count[:n_nodes].copy(),
            value[:n_nodes].copy())


@njit(cache=True, nogil=True)
def _leaf(X, i, root, feature, threshold, cat_mask, left, right, is_cat):
    node = root
    while feature[node] >= 0:
        f = feature[node]
        if goes_left(X[i, f], is_cat[f], threshold[node], cat_mask[node]):
            node = root + left[node]
        else:
            node = root + right[node]
    return node


@njit(cache=True, nogil=True)
def leaf_index(X, row_lo, row_hi, offsets, feature, threshold, cat_mask, left, right, is_cat):
    n_tree = offsets.shape[0] - 1
    out = np.empty((row_hi - row_lo, n_tree), np.int64)
    for i in range(row_lo, row_hi):
        for j in range(n_tree):
            out[i - row_lo, j] = _leaf(X, i, offsets[j], feature, threshold, cat_mask, left, right, is_cat) - offsets[j]
    return out


@njit(cache=True, nogil=True)
def predict_sum(X, row_lo, row_hi, offsets, feature, threshold, cat_mask, left, right, value, is_cat,
                in_bag, mode, out_sum, out_cnt):
    """Sum leaf values over the trees selected by ``mode`` for rows [row_lo, row_hi)."""
    n_tree = offsets.shape[0] - 1
    nc = value.shape[1]
    for i in range(row_lo, row_hi):
        cnt = 0.0
        for j in range(n_tree):
            w = 1.0
            if mode == MODE_OOB:
                if in_bag[i, j] != 0:
                    continue
            node = _leaf(X, i, offsets[j], feature, threshold, cat_mask, left, right, is_cat)
            for k in range(nc):
                out_sum[i, k] += w * value[node, k]
            cnt += w
        out_cnt[i] = cnt


@njit(cache=True, nogil=True)
def contribution_sum(X, row_lo, row_hi, offsets, feature, threshold, cat_mask, left, right, value, is_cat,
                     base_rate, in_bag, mode, out, out_cnt):
    """Accumulate local increments by parent split feature (column 0 = bootstrap step).

    mode 0 uses every tree with weight 1, mode 1 only trees where the row is
    out-of-bag, mode 2 every tree weighted by the row's in-bag count.
    """
    n_tree = offsets.shape[0] - 1
    nc = value.shape[1]
    for i in range(row_lo, row_hi):
        cnt = 0.0
        for j in range(n_tree):
            w = 1.0
            if mode == MODE_OOB:
                if in_bag[i, j] != 0:
                    continue
            elif mode == MODE_INBAG:
                w = float(in_bag[i, j])
                if w == 0.0:
                    continue
            root = offsets[j]
            for k in range(nc):
                out[i, 0, k] += w * (value[root, k] - base_rate[k])
            node = root
            while feature[node] >= 0:
                f = feature[node]
                if goes_left(X[i, f], is_cat[f], threshold[node], cat_mask[node]):
                    child = root + left[node]
                else:
                    child = root + right[node]
                for k in range(nc):
                    out[i, f + 1, k] += w * (value[child, k] - value[node, k])
                node = child
            cnt += w
        out_cnt[i] = cnt


@njit(cache=True, nogil=True)
def knn_gauss(train, responses, query, k, exclude_self, out):
    """Gaussian-weighted k-nearest-neighbour means.

    With ``exclude_self`` the query set must be the training set and row i
    never sees itself. Distance ties at the k-th position go to the lower row
    index. The bandwidth is the k-th neighbour distance, or the smallest
    positive distance to any training row when that is zero. Returns False if
    a query has no positive distance to any row (degenerate context).
    """
    n, dim = train.shape
    nq = query.shape[0]
    d2 = np.empty(n)
    for q in range(nq):
        minpos = np.inf
        for r in range(n):
            acc = 0.0
            for c in range(dim):
                diff = train[r, c] - query[q, c]
                acc += diff * diff
            d2[r] = acc
            if acc > 0.0 and acc < minpos:
                minpos = acc
        if exclude_self:
            d2[q] = np.inf
        kth = np.partition(d2, k - 1)[k - 1]
        h2 = kth
        if h2 == 0.0:
            h2 = minpos
            if not np.isfinite(h2):
                return False
        num = 0.0
        den = 0.0
        taken = 0
        for r in range(n):
            if d2[r] < kth:
                w = np.exp(-d2[r] / h2)
                num += w * responses[r]
                den += w
                taken += 1
        for r in range(n):
            if taken >= k:
                break
            if d2[r] == kth:
                w = np.exp(-d2[r] / h2)
                num += w * responses[r]
                den += w
                taken += 1
        out[q] = num / den
    return True
