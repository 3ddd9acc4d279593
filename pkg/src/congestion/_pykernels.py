"""Pure numpy versions of the compiled kernels.

Same signatures and results as ``_ckernels``. Running sums use
``np.cumsum`` / explicit per-dimension accumulation so the floating-point
operation order matches the compiled loops exactly.
"""
import numpy as np


def split_level(Xs, orders, node_of, resid, n_nodes, node_count, node_sum, min_leaf):
    p = Xs.shape[0]
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    best_gain = np.zeros(n_nodes)
    parent = np.zeros(n_nodes)
    live = node_count > 0
    parent[live] = node_sum[live] * node_sum[live] / node_count[live]
    for f in range(p):
        order = orders[f]
        owner = node_of[order]
        for nd in range(n_nodes):
            ntot = int(node_count[nd])
            if ntot < 2 * min_leaf or ntot < 2:
                continue
            sel = owner == nd
            rows = order[sel]
            xs = Xs[f][sel]
            cum = np.cumsum(resid[rows])
            # candidate after position t (left = rows[:t+1]) where the value changes
            t = np.flatnonzero(xs[1:] != xs[:-1])
            nl = t + 1
            nr = ntot - nl
            ok = (nl >= min_leaf) & (nr >= min_leaf)
            if not ok.any():
                continue
            t, nl, nr = t[ok], nl[ok], nr[ok]
            sl = cum[t]
            sr = node_sum[nd] - sl
            gain = (sl * sl / nl + sr * sr / nr) - parent[nd]
            j = int(np.argmax(gain))
            if gain[j] > best_gain[nd]:
                a, b = xs[t[j]], xs[t[j] + 1]
                thr = 0.5 * (a + b)
                if thr >= b:
                    thr = a
                best_gain[nd] = gain[j]
                best_feat[nd] = f
                best_thr[nd] = thr
    return best_feat, best_thr, best_gain


def tree_predict(X, feature, threshold, left, right, value):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    rows = np.arange(n)
    active = left[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[r]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = left[node] >= 0
    return value[node].astype(np.float64)


def _distances(train, q, metric):
    acc = np.zeros(train.shape[0])
    for t in range(train.shape[1]):
        diff = q[t] - train[:, t]
        if metric == 0:
            acc = acc + diff * diff
        else:
            acc = acc + np.abs(diff)
    return acc


def _smallest(dist, idx, k):
    """k best (dist, idx) pairs, ascending, ties on ``idx``."""
    if len(dist) > k:
        kth = np.partition(dist, k - 1)[k - 1]
        keep = dist <= kth
        dist, idx = dist[keep], idx[keep]
    order = np.lexsort((idx, dist))[:k]
    return idx[order], dist[order]


def knn_brute(train, queries, k, metric):
    nq = queries.shape[0]
    out_i = np.empty((nq, k), dtype=np.int64)
    out_d = np.empty((nq, k))
    all_idx = np.arange(train.shape[0], dtype=np.int64)
    for q in range(nq):
        d = _distances(train, queries[q], metric)
        out_i[q], out_d[q] = _smallest(d, all_idx, k)
    return out_i, out_d


def _box_bound(qv, lo, hi, metric):
    c = np.minimum(np.maximum(qv, lo), hi)
    acc = 0.0
    for t in range(len(qv)):
        diff = qv[t] - c[t]
        acc = acc + (diff * diff if metric == 0 else abs(diff))
    return acc


def kdtree_query(data, perm, start, end, left, right, lo, hi, queries, k, metric):
    nq = queries.shape[0]
    out_i = np.empty((nq, k), dtype=np.int64)
    out_d = np.empty((nq, k))
    for q in range(nq):
        qv = queries[q]
        best_d = np.empty(0)
        best_i = np.empty(0, dtype=np.int64)
        stack = [(0, _box_bound(qv, lo[0], hi[0], metric))]
        while stack:
            node, bound = stack.pop()
            if len(best_d) == k and bound > best_d[-1]:
                continue
            if left[node] < 0:
                idx = perm[start[node]:end[node]]
                d = _distances(data[idx], qv, metric)
                best_i, best_d = _smallest(np.concatenate([best_d, d]), np.concatenate([best_i, idx]), k)
            else:
                a, b = left[node], right[node]
                ba = _box_bound(qv, lo[a], hi[a], metric)
                bb = _box_bound(qv, lo[b], hi[b], metric)
                if ba <= bb:
                    stack += [(b, bb), (a, ba)]
                else:
                    stack += [(a, ba), (b, bb)]
        out_i[q], out_d[q] = best_i, best_d
    return out_i, out_d
