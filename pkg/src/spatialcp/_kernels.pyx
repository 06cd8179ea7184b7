# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops for the quantile forest.

Semantics mirror ``_fallback.py`` operation for operation; both backends
grow identical trees from identical inputs.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t
from libc.stdlib cimport free, malloc
from libc.math cimport INFINITY

cnp.import_array()

ctypedef cnp.intp_t intp


cdef struct Pair:
    double v
    double y
    intp pos


cdef inline bint _less(const Pair* a, const Pair* b) noexcept nogil:
    return a.v < b.v or (a.v == b.v and a.pos < b.pos)


cdef inline void _swap(Pair* a, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef Pair t = a[i]
    a[i] = a[j]
    a[j] = t


cdef void _sort_pairs(Pair* a, Py_ssize_t n) noexcept nogil:
    # quicksort, median-of-three pivot, insertion sort below 16 items;
    # (v, pos) keys are unique so the result equals a stable sort on v
    cdef Py_ssize_t lo, hi, i, j, mid
    cdef Pair piv, t
    while n > 16:
        mid = n // 2
        if _less(&a[mid], &a[0]):
            _swap(a, mid, 0)
        if _less(&a[n - 1], &a[0]):
            _swap(a, n - 1, 0)
        if _less(&a[n - 1], &a[mid]):
            _swap(a, n - 1, mid)
        piv = a[mid]
        i = 0
        j = n - 1
        while True:
            while _less(&a[i], &piv):
                i += 1
            while _less(&piv, &a[j]):
                j -= 1
            if i >= j:
                break
            _swap(a, i, j)
            i += 1
            j -= 1
        # recurse into the smaller part, loop on the larger
        if j + 1 < n - j - 1:
            _sort_pairs(a, j + 1)
            a = a + j + 1
            n = n - j - 1
        else:
            _sort_pairs(a + j + 1, n - j - 1)
            n = j + 1
    for i in range(1, n):
        t = a[i]
        j = i - 1
        while j >= 0 and _less(&t, &a[j]):
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = t


cdef inline uint64_t _splitmix(uint64_t* state) noexcept nogil:
    state[0] = state[0] + <uint64_t>0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


def fit_tree(const double[:, ::1] X, const double[::1] y, const intp[::1] samples_in,
             Py_ssize_t min_leaf, Py_ssize_t mtry, uint64_t seed):
    """Grow one regression tree on ``samples_in`` (row ids, repeats allowed).

    Returns (feature, threshold, left, right, start, end, samples) where
    leaves have ``left == -1`` and own ``samples[start:end]``.
    """
    cdef Py_ssize_t m = samples_in.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t cap = 2 * m + 1

    feature_a = np.full(cap, -1, dtype=np.intp)
    threshold_a = np.zeros(cap, dtype=np.float64)
    left_a = np.full(cap, -1, dtype=np.intp)
    right_a = np.full(cap, -1, dtype=np.intp)
    start_a = np.zeros(cap, dtype=np.intp)
    end_a = np.zeros(cap, dtype=np.intp)
    samples_a = np.array(samples_in, dtype=np.intp, copy=True)

    cdef intp[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef intp[::1] left = left_a
    cdef intp[::1] right = right_a
    cdef intp[::1] start = start_a
    cdef intp[::1] end = end_a
    cdef intp[::1] samples = samples_a

    cdef Pair* buf = <Pair*>malloc(max(m, 1) * sizeof(Pair))
    cdef intp* tmp = <intp*>malloc(max(m, 1) * sizeof(intp))
    cdef intp* feats = <intp*>malloc(max(p, 1) * sizeof(intp))
    cdef intp* stack = <intp*>malloc(cap * sizeof(intp))
    if buf == NULL or tmp == NULL or feats == NULL or stack == NULL:
        free(buf); free(tmp); free(feats); free(stack)
        raise MemoryError()

    cdef uint64_t state = seed
    cdef Py_ssize_t sp = 0, n_nodes = 1
    cdef Py_ssize_t node, s0, s1, n, i, j, jj, f, r, nl, nr, best_f
    cdef intp s, t
    cdef double tot, sq, yi, ymin, ymax, parent, total, sl, sr, proxy, thr
    cdef double best_proxy, best_thr

    start[0] = 0
    end[0] = m
    stack[0] = 0
    sp = 1
    try:
        with nogil:
            while sp > 0:
                sp -= 1
                node = stack[sp]
                s0 = start[node]
                s1 = end[node]
                n = s1 - s0
                if n < 2 * min_leaf:
                    continue
                tot = 0.0
                sq = 0.0
                ymin = INFINITY
                ymax = -INFINITY
                for i in range(s0, s1):
                    yi = y[samples[i]]
                    tot = tot + yi
                    sq = sq + yi * yi
                    if yi < ymin:
                        ymin = yi
                    if yi > ymax:
                        ymax = yi
                if ymin == ymax:
                    continue
                parent = tot * tot / n

                for j in range(p):
                    feats[j] = j
                for j in range(mtry):
                    r = j + <Py_ssize_t>(_splitmix(&state) % <uint64_t>(p - j))
                    t = feats[j]
                    feats[j] = feats[r]
                    feats[r] = t

                best_f = -1
                best_thr = 0.0
                best_proxy = -INFINITY
                for jj in range(mtry):
                    f = feats[jj]
                    for i in range(n):
                        s = samples[s0 + i]
                        buf[i].v = X[s, f]
                        buf[i].y = y[s]
                        buf[i].pos = i
                    _sort_pairs(buf, n)
                    if buf[0].v == buf[n - 1].v:
                        continue
                    total = 0.0
                    for i in range(n):
                        total = total + buf[i].y
                    sl = 0.0
                    for i in range(n - 1):
                        sl = sl + buf[i].y
                        nl = i + 1
                        if nl < min_leaf:
                            continue
                        if n - nl < min_leaf:
                            break
                        if not (buf[i].v < buf[i + 1].v):
                            continue
                        sr = total - sl
                        proxy = sl * sl / nl + sr * sr / (n - nl)
                        thr = 0.5 * (buf[i].v + buf[i + 1].v)
                        if thr >= buf[i + 1].v:
                            thr = buf[i].v
                        if (proxy > best_proxy or
                                (proxy == best_proxy and
                                 (f < best_f or (f == best_f and thr < best_thr)))):
                            best_proxy = proxy
                            best_f = f
                            best_thr = thr

                if best_f < 0 or not (best_proxy - parent > 1e-12 * sq):
                    continue

                nl = 0
                nr = 0
                for i in range(s0, s1):
                    s = samples[i]
                    if X[s, best_f] <= best_thr:
                        samples[s0 + nl] = s
                        nl += 1
                    else:
                        tmp[nr] = s
                        nr += 1
                for i in range(nr):
                    samples[s0 + nl + i] = tmp[i]

                feature[node] = best_f
                threshold[node] = best_thr
                left[node] = n_nodes
                right[node] = n_nodes + 1
                start[n_nodes] = s0
                end[n_nodes] = s0 + nl
                start[n_nodes + 1] = s0 + nl
                end[n_nodes + 1] = s1
                stack[sp] = n_nodes + 1
                stack[sp + 1] = n_nodes
                sp += 2
                n_nodes += 2
    finally:
        free(buf)
        free(tmp)
        free(feats)
        free(stack)

    k = n_nodes
    return (feature_a[:k].copy(), threshold_a[:k].copy(), left_a[:k].copy(),
            right_a[:k].copy(), start_a[:k].copy(), end_a[:k].copy(), samples_a)


def apply_tree(const double[:, ::1] Xq, const intp[::1] feature, const double[::1] threshold,
               const intp[::1] left, const intp[::1] right):
    """Leaf node id reached by each query row."""
    cdef Py_ssize_t m = Xq.shape[0], r
    cdef intp node
    out_a = np.empty(m, dtype=np.intp)
    cdef intp[::1] out = out_a
    with nogil:
        for r in range(m):
            node = 0
            while left[node] != -1:
                if Xq[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r] = node
    return out_a


def accumulate_weights(double[:, ::1] W, const intp[::1] leaves, const intp[::1] ptr,
                       const intp[::1] members, const double[::1] vals, double scale):
    """In place: ``W[r, members[j]] += scale * vals[j]`` over the leaf of row r."""
    cdef Py_ssize_t m = W.shape[0], r, j
    cdef intp node
    with nogil:
        for r in range(m):
            node = leaves[r]
            for j in range(ptr[node], ptr[node + 1]):
                W[r, members[j]] += scale * vals[j]


def row_quantiles(const double[:, ::1] W, const double[::1] sorted_vals, const double[::1] ps):
    """Weighted quantiles per row; columns of ``W`` follow ``sorted_vals`` order.

    For p > 0 returns the smallest value whose cumulative weight reaches
    ``p * total`` (relative tolerance 1e-12); when that threshold is not
    positive, the smallest value with positive weight.
    """
    cdef Py_ssize_t m = W.shape[0], n = W.shape[1], nq = ps.shape[0]
    cdef Py_ssize_t r, j, q, lo, hi, mid
    cdef double acc, total, target
    out_a = np.empty((m, nq), dtype=np.float64)
    cdef double[:, ::1] out = out_a
    cdef double* cum = <double*>malloc(max(n, 1) * sizeof(double))
    if cum == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(m):
                acc = 0.0
                for j in range(n):
                    acc = acc + W[r, j]
                    cum[j] = acc
                total = acc
                for q in range(nq):
                    target = ps[q] * total - 1e-12 * total
                    if target <= 0.0:
                        j = 0
                        while j < n - 1 and not (W[r, j] > 0.0):
                            j += 1
                        out[r, q] = sorted_vals[j]
                        continue
                    lo = 0
                    hi = n - 1
                    while lo < hi:
                        mid = (lo + hi) // 2
                        if cum[mid] < target:
                            lo = mid + 1
                        else:
                            hi = mid
                    out[r, q] = sorted_vals[lo]
    finally:
        free(cum)
    return out_a
