# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for tree split search, tree evaluation and KNN.

Every routine accumulates floating-point sums in the same order as its
counterpart in ``_pykernels`` so both backends return identical bits.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef cnp.int64_t i64


def split_level(const double[:, ::1] Xs, const i64[:, ::1] orders, const i64[::1] node_of,
                const double[::1] resid, i64 n_nodes, const i64[::1] node_count,
                const double[::1] node_sum, i64 min_leaf):
    cdef Py_ssize_t p = Xs.shape[0], n = Xs.shape[1]
    best_feat_a = np.full(n_nodes, -1, dtype=np.int64)
    best_thr_a = np.zeros(n_nodes, dtype=np.float64)
    best_gain_a = np.zeros(n_nodes, dtype=np.float64)
    cnt_a = np.zeros(n_nodes, dtype=np.int64)
    sum_a = np.zeros(n_nodes, dtype=np.float64)
    last_a = np.zeros(n_nodes, dtype=np.float64)
    parent_a = np.zeros(n_nodes, dtype=np.float64)
    cdef i64[::1] best_feat = best_feat_a
    cdef double[::1] best_thr = best_thr_a
    cdef double[::1] best_gain = best_gain_a
    cdef i64[::1] cnt = cnt_a
    cdef double[::1] suml = sum_a
    cdef double[::1] lastx = last_a
    cdef double[::1] parent = parent_a
    cdef Py_ssize_t f, j, i, nd
    cdef i64 nl, nr, ntot
    cdef double x, sl, sr, s, gain, thr

    for nd in range(n_nodes):
        if node_count[nd] > 0:
            parent[nd] = node_sum[nd] * node_sum[nd] / node_count[nd]
    with nogil:
        for f in range(p):
            for nd in range(n_nodes):
                cnt[nd] = 0
                suml[nd] = 0.0
            for j in range(n):
                i = orders[f, j]
                nd = node_of[i]
                if nd < 0:
                    continue
                x = Xs[f, j]
                nl = cnt[nd]
                if nl > 0 and x != lastx[nd]:
                    ntot = node_count[nd]
                    nr = ntot - nl
                    if nl >= min_leaf and nr >= min_leaf:
                        s = node_sum[nd]
                        sl = suml[nd]
                        sr = s - sl
                        gain = (sl * sl / nl + sr * sr / nr) - parent[nd]
                        if gain > best_gain[nd]:
                            thr = 0.5 * (lastx[nd] + x)
                            if thr >= x:
                                thr = lastx[nd]
                            best_gain[nd] = gain
                            best_feat[nd] = f
                            best_thr[nd] = thr
                cnt[nd] = nl + 1
                suml[nd] = suml[nd] + resid[i]
                lastx[nd] = x
    return best_feat_a, best_thr_a, best_gain_a


def tree_predict(const double[:, ::1] X, const i64[::1] feature, const double[::1] threshold,
                 const i64[::1] left, const i64[::1] right, const double[::1] value):
    cdef Py_ssize_t n = X.shape[0], i
    cdef i64 node
    out_a = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_a
    with nogil:
        for i in range(n):
            node = 0
            while left[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = value[node]
    return out_a


cdef inline double _dist(const double[:, ::1] A, Py_ssize_t a, const double[:, ::1] B, Py_ssize_t b,
                         Py_ssize_t d, int metric) noexcept nogil:
    cdef double acc = 0.0, diff
    cdef Py_ssize_t t
    if metric == 0:
        for t in range(d):
            diff = A[a, t] - B[b, t]
            acc = acc + diff * diff
    else:
        for t in range(d):
            acc = acc + fabs(A[a, t] - B[b, t])
    return acc


cdef inline bint _worse(double da, i64 ia, double db, i64 ib) noexcept nogil:
    # (da, ia) ranks after (db, ib)
    return da > db or (da == db and ia > ib)


cdef void _sift_down(double* hd, i64* hi, Py_ssize_t size, Py_ssize_t pos) noexcept nogil:
    # max-heap on (distance, index)
    cdef Py_ssize_t child
    cdef double td
    cdef i64 ti
    while True:
        child = 2 * pos + 1
        if child >= size:
            break
        if child + 1 < size and _worse(hd[child + 1], hi[child + 1], hd[child], hi[child]):
            child += 1
        if _worse(hd[child], hi[child], hd[pos], hi[pos]):
            td = hd[pos]; hd[pos] = hd[child]; hd[child] = td
            ti = hi[pos]; hi[pos] = hi[child]; hi[child] = ti
            pos = child
        else:
            break


cdef void _sift_up(double* hd, i64* hi, Py_ssize_t pos) noexcept nogil:
    cdef Py_ssize_t parent
    cdef double td
    cdef i64 ti
    while pos > 0:
        parent = (pos - 1) // 2
        if _worse(hd[pos], hi[pos], hd[parent], hi[parent]):
            td = hd[pos]; hd[pos] = hd[parent]; hd[parent] = td
            ti = hi[pos]; hi[pos] = hi[parent]; hi[parent] = ti
            pos = parent
        else:
            break


cdef inline void _offer(double* hd, i64* hi, Py_ssize_t* size, Py_ssize_t k, double d, i64 idx) noexcept nogil:
    if size[0] < k:
        hd[size[0]] = d
        hi[size[0]] = idx
        _sift_up(hd, hi, size[0])
        size[0] += 1
    elif _worse(hd[0], hi[0], d, idx):
        hd[0] = d
        hi[0] = idx
        _sift_down(hd, hi, k, 0)


cdef void _drain(double* hd, i64* hi, Py_ssize_t k, double[:, ::1] out_d, i64[:, ::1] out_i,
                 Py_ssize_t q) noexcept nogil:
    # pop max repeatedly, filling from the back -> ascending order
    cdef Py_ssize_t size = k, pos
    while size > 0:
        out_d[q, size - 1] = hd[0]
        out_i[q, size - 1] = hi[0]
        size -= 1
        hd[0] = hd[size]
        hi[0] = hi[size]
        _sift_down(hd, hi, size, 0)


def knn_brute(const double[:, ::1] train, const double[:, ::1] queries, Py_ssize_t k, int metric):
    cdef Py_ssize_t n = train.shape[0], d = train.shape[1], nq = queries.shape[0]
    cdef Py_ssize_t q, i, size
    cdef double dist
    out_d_a = np.empty((nq, k), dtype=np.float64)
    out_i_a = np.empty((nq, k), dtype=np.int64)
    cdef double[:, ::1] out_d = out_d_a
    cdef i64[:, ::1] out_i = out_i_a
    cdef double* hd = <double*> malloc(k * sizeof(double))
    cdef i64* hi = <i64*> malloc(k * sizeof(i64))
    if hd == NULL or hi == NULL:
        free(hd); free(hi)
        raise MemoryError()
    try:
        with nogil:
            for q in range(nq):
                size = 0
                for i in range(n):
                    dist = _dist(queries, q, train, i, d, metric)
                    _offer(hd, hi, &size, k, dist, i)
                _drain(hd, hi, k, out_d, out_i, q)
    finally:
        free(hd)
        free(hi)
    return out_i_a, out_d_a


cdef inline double _box_bound(const double[:, ::1] Q, Py_ssize_t q, const double[:, ::1] lo,
                              const double[:, ::1] hi, Py_ssize_t node, Py_ssize_t d, int metric) noexcept nogil:
    cdef double acc = 0.0, c, diff, v
    cdef Py_ssize_t t
    for t in range(d):
        v = Q[q, t]
        c = v
        if c < lo[node, t]:
            c = lo[node, t]
        elif c > hi[node, t]:
            c = hi[node, t]
        diff = v - c
        if metric == 0:
            acc = acc + diff * diff
        else:
            acc = acc + fabs(diff)
    return acc


def kdtree_query(const double[:, ::1] data, const i64[::1] perm, const i64[::1] start, const i64[::1] end,
                 const i64[::1] left, const i64[::1] right, const double[:, ::1] lo, const double[:, ::1] hi,
                 const double[:, ::1] queries, Py_ssize_t k, int metric):
    cdef Py_ssize_t n = data.shape[0], d = data.shape[1], nq = queries.shape[0]
    cdef Py_ssize_t n_nodes = start.shape[0]
    cdef Py_ssize_t q, j, size, top, node, a, b
    cdef double dist, ba, bb
    cdef i64 idx
    out_d_a = np.empty((nq, k), dtype=np.float64)
    out_i_a = np.empty((nq, k), dtype=np.int64)
    cdef double[:, ::1] out_d = out_d_a
    cdef i64[:, ::1] out_i = out_i_a
    cdef double* hd = <double*> malloc(k * sizeof(double))
    cdef i64* hidx = <i64*> malloc(k * sizeof(i64))
    cdef i64* stack = <i64*> malloc((n_nodes + 1) * sizeof(i64))
    cdef double* sbound = <double*> malloc((n_nodes + 1) * sizeof(double))
    if hd == NULL or hidx == NULL or stack == NULL or sbound == NULL:
        free(hd); free(hidx); free(stack); free(sbound)
        raise MemoryError()
    try:
        with nogil:
            for q in range(nq):
                size = 0
                top = 0
                stack[0] = 0
                sbound[0] = _box_bound(queries, q, lo, hi, 0, d, metric)
                top = 1
                while top > 0:
                    top -= 1
                    node = stack[top]
                    if size == k and sbound[top] > hd[0]:
                        continue
                    if left[node] < 0:
                        for j in range(start[node], end[node]):
                            idx = perm[j]
                            dist = _dist(queries, q, data, idx, d, metric)
                            _offer(hd, hidx, &size, k, dist, idx)
                    else:
                        a = left[node]
                        b = right[node]
                        ba = _box_bound(queries, q, lo, hi, a, d, metric)
                        bb = _box_bound(queries, q, lo, hi, b, d, metric)
                        # push the farther child first so the nearer one is expanded next
                        if ba <= bb:
                            stack[top] = b; sbound[top] = bb; top += 1
                            stack[top] = a; sbound[top] = ba; top += 1
                        else:
                            stack[top] = a; sbound[top] = ba; top += 1
                            stack[top] = b; sbound[top] = bb; top += 1
                _drain(hd, hidx, k, out_d, out_i, q)
    finally:
        free(hd); free(hidx); free(stack); free(sbound)
    return out_i_a, out_d_a
