# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``_pykernels`` exactly in semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, log, INFINITY

cnp.import_array()


cdef void _gram(const double[:, ::1] z, double tau, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = z.shape[0], e = z.shape[1], i, j, k
    cdef double acc
    for i in range(n):
        for j in range(i, n):
            acc = 0.0
            for k in range(e):
                acc += z[i, k] * z[j, k]
            out[i, j] = acc / tau
            out[j, i] = acc / tau


cdef void _offdiag_log_softmax(double[:, ::1] logits) noexcept nogil:
    """In-place row-wise log-softmax over off-diagonal entries; diagonal set to -inf."""
    cdef Py_ssize_t n = logits.shape[0], i, j
    cdef double mx, s, lse
    for i in range(n):
        mx = -INFINITY
        for j in range(n):
            if j != i and logits[i, j] > mx:
                mx = logits[i, j]
        s = 0.0
        for j in range(n):
            if j != i:
                s += exp(logits[i, j] - mx)
        lse = mx + log(s)
        for j in range(n):
            if j != i:
                logits[i, j] = logits[i, j] - lse
        logits[i, i] = -INFINITY


cdef void _sym_coef_matmul(double[:, ::1] coef, const double[:, ::1] z, double tau,
                           double[:, ::1] grad) noexcept nogil:
    """grad = (coef + coef^T) @ z / tau"""
    cdef Py_ssize_t n = z.shape[0], e = z.shape[1], i, j, k
    cdef double c
    for i in range(n):
        for k in range(e):
            grad[i, k] = 0.0
    for i in range(n):
        for j in range(n):
            c = (coef[i, j] + coef[j, i]) / tau
            if c != 0.0:
                for k in range(e):
                    grad[i, k] += c * z[j, k]


def scl_loss_grad(z, labels, double tau):
    cdef const double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const long long[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = zv.shape[0], e = zv.shape[1], i, j
    lp_arr = np.empty((n, n), dtype=np.float64)
    coef_arr = np.zeros((n, n), dtype=np.float64)
    grad_arr = np.empty((n, e), dtype=np.float64)
    cdef double[:, ::1] lp = lp_arr
    cdef double[:, ::1] coef = coef_arr
    cdef double[:, ::1] grad = grad_arr
    cdef double loss = 0.0, row, inv_pos
    cdef long long n_pos
    with nogil:
        _gram(zv, tau, lp)
        _offdiag_log_softmax(lp)
        for i in range(n):
            n_pos = 0
            for j in range(n):
                if j != i and lab[j] == lab[i]:
                    n_pos += 1
            inv_pos = 1.0 / n_pos
            row = 0.0
            for j in range(n):
                if j == i:
                    continue
                coef[i, j] = exp(lp[i, j])
                if lab[j] == lab[i]:
                    row += lp[i, j]
                    coef[i, j] -= inv_pos
            loss -= row * inv_pos
        _sym_coef_matmul(coef, zv, tau, grad)
    return loss, grad_arr


def similarity_softmax(z, double tau):
    cdef const double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t n = zv.shape[0], i, j
    out_arr = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        _gram(zv, tau, out)
        _offdiag_log_softmax(out)
        for i in range(n):
            for j in range(n):
                out[i, j] = 0.0 if i == j else exp(out[i, j])
    return out_arr


def kd_loss_grad(teacher, student, double tau):
    cdef const double[:, ::1] tv = np.ascontiguousarray(teacher, dtype=np.float64)
    cdef const double[:, ::1] sv = np.ascontiguousarray(student, dtype=np.float64)
    cdef Py_ssize_t n = sv.shape[0], e = sv.shape[1], i, j
    lt_arr = np.empty((n, n), dtype=np.float64)
    ls_arr = np.empty((n, n), dtype=np.float64)
    grad_arr = np.empty((n, e), dtype=np.float64)
    cdef double[:, ::1] lt = lt_arr
    cdef double[:, ::1] ls = ls_arr
    cdef double[:, ::1] grad = grad_arr
    cdef double loss = 0.0, pt
    with nogil:
        _gram(tv, tau, lt)
        _offdiag_log_softmax(lt)
        _gram(sv, tau, ls)
        _offdiag_log_softmax(ls)
        # ls becomes the coefficient matrix (p_s - p_t) / n
        for i in range(n):
            for j in range(n):
                if j == i:
                    ls[i, j] = 0.0
                    continue
                pt = exp(lt[i, j])
                loss -= pt * ls[i, j]
                ls[i, j] = (exp(ls[i, j]) - pt) / n
        _sym_coef_matmul(ls, sv, tau, grad)
    return loss / n, grad_arr


def herding_order(features, Py_ssize_t m, double tie_rtol=1e-12):
    cdef const double[:, ::1] f = np.ascontiguousarray(features, dtype=np.float64)
    cdef Py_ssize_t n = f.shape[0], e = f.shape[1], i, k, c, best
    if m > n:
        m = n
    total_arr = np.asarray(features, dtype=np.float64).sum(axis=0)
    cdef double[::1] total = total_arr
    cdef double[::1] running = np.zeros(e, dtype=np.float64)
    cdef double[::1] d2 = np.empty(n, dtype=np.float64)
    cdef unsigned char[::1] taken = np.zeros(n, dtype=np.uint8)
    order_arr = np.empty(m, dtype=np.int64)
    cdef long long[::1] order = order_arr
    cdef double diff, mag, sc, min_d2, max_scale
    with nogil:
        for k in range(1, m + 1):
            min_d2 = INFINITY
            max_scale = 0.0
            for i in range(n):
                if taken[i]:
                    continue
                d2[i] = 0.0
                sc = 0.0
                for c in range(e):
                    diff = k * total[c] - n * (f[i, c] + running[c])
                    d2[i] += diff * diff
                    mag = k * fabs(total[c]) + n * (fabs(f[i, c]) + fabs(running[c]))
                    sc += mag * mag
                if d2[i] < min_d2:
                    min_d2 = d2[i]
                if sc > max_scale:
                    max_scale = sc
            best = -1
            for i in range(n):
                if not taken[i] and d2[i] <= min_d2 + tie_rtol * max_scale:
                    best = i
                    break
            order[k - 1] = best
            taken[best] = 1
            for c in range(e):
                running[c] += f[best, c]
    return order_arr


def majority_counts(context, labels, query_rows, Py_ssize_t n_neighbors):
    cdef const double[:, ::1] ctx = np.ascontiguousarray(context, dtype=np.float64)
    cdef const long long[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef const long long[::1] qs = np.ascontiguousarray(query_rows, dtype=np.int64)
    cdef Py_ssize_t n = ctx.shape[0], e = ctx.shape[1], t = qs.shape[0]
    cdef Py_ssize_t a, j, c, pos, filled
    cdef long long q, cnt
    cdef double d2, diff
    counts_arr = np.empty(t, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    # insertion-sorted buffer of the n best (distance, row) pairs
    cdef double[::1] best_d = np.empty(n_neighbors, dtype=np.float64)
    cdef long long[::1] best_r = np.empty(n_neighbors, dtype=np.int64)
    with nogil:
        for a in range(t):
            q = qs[a]
            filled = 0
            for j in range(n):
                if j == q:
                    continue
                d2 = 0.0
                for c in range(e):
                    diff = ctx[j, c] - ctx[q, c]
                    d2 += diff * diff
                # rows visited in ascending order, so strict < keeps the lower row on ties
                if filled == n_neighbors and d2 >= best_d[filled - 1]:
                    continue
                pos = filled if filled < n_neighbors else n_neighbors - 1
                while pos > 0 and best_d[pos - 1] > d2:
                    if pos < n_neighbors:
                        best_d[pos] = best_d[pos - 1]
                        best_r[pos] = best_r[pos - 1]
                    pos -= 1
                best_d[pos] = d2
                best_r[pos] = j
                if filled < n_neighbors:
                    filled += 1
            cnt = 0
            for j in range(filled):
                if lab[best_r[j]] != lab[q]:
                    cnt += 1
            counts[a] = cnt
    return counts_arr
