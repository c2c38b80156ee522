# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: fused LSTM gate math and regression-tree split scans.

Signatures and results mirror ``yatt._kernels_py`` exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    return 1.0 / (1.0 + exp(-x))


def gates_forward(const double[:, ::1] z, const double[:, ::1] c_prev):
    cdef Py_ssize_t B = z.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    if z.shape[1] != 4 * H or c_prev.shape[0] != B:
        raise ValueError(f"gate block {z.shape[0]}x{z.shape[1]} does not match cell {c_prev.shape[0]}x{H}")
    gates_arr = np.empty((B, 4 * H))
    c_arr = np.empty((B, H))
    tc_arr = np.empty((B, H))
    h_arr = np.empty((B, H))
    cdef double[:, ::1] g = gates_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] tc = tc_arr
    cdef double[:, ::1] h = h_arr
    cdef Py_ssize_t b, k
    cdef double e, r, ct, o, cn, t
    with nogil:
        for b in range(B):
            for k in range(H):
                e = _sigmoid(z[b, k])
                r = _sigmoid(z[b, H + k])
                ct = tanh(z[b, 2 * H + k])
                o = _sigmoid(z[b, 3 * H + k])
                g[b, k] = e
                g[b, H + k] = r
                g[b, 2 * H + k] = ct
                g[b, 3 * H + k] = o
                cn = e * c_prev[b, k] + r * ct
                t = tanh(cn)
                c[b, k] = cn
                tc[b, k] = t
                h[b, k] = o * t
    return gates_arr, c_arr, tc_arr, h_arr


def gates_backward(const double[:, ::1] gates, const double[:, ::1] c_prev,
                   const double[:, ::1] tc, const double[:, ::1] dh,
                   const double[:, ::1] dc_next):
    cdef Py_ssize_t B = gates.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    dz_arr = np.empty((B, 4 * H))
    dcp_arr = np.empty((B, H))
    cdef double[:, ::1] dz = dz_arr
    cdef double[:, ::1] dcp = dcp_arr
    cdef Py_ssize_t b, k
    cdef double e, r, ct, o, t, dc
    with nogil:
        for b in range(B):
            for k in range(H):
                e = gates[b, k]
                r = gates[b, H + k]
                ct = gates[b, 2 * H + k]
                o = gates[b, 3 * H + k]
                t = tc[b, k]
                dc = dc_next[b, k] + dh[b, k] * o * (1.0 - t * t)
                dz[b, k] = dc * c_prev[b, k] * e * (1.0 - e)
                dz[b, H + k] = dc * ct * r * (1.0 - r)
                dz[b, 2 * H + k] = dc * r * (1.0 - ct * ct)
                dz[b, 3 * H + k] = dh[b, k] * t * o * (1.0 - o)
                dcp[b, k] = dc * e
    return dz_arr, dcp_arr


def split_scan(const double[:, ::1] xs, const double[:, ::1] ys, Py_ssize_t min_leaf):
    """Best variance-reduction split over presorted columns.

    ``xs[:, j]`` is column j sorted ascending and ``ys[:, j]`` the targets in
    that order. Returns ``(column, threshold, score)`` maximising
    ``sL**2/nL + sR**2/nR``; column is -1 when no admissible split exists.
    """
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t f = xs.shape[1]
    cdef Py_ssize_t j, i
    cdef Py_ssize_t best_j = -1
    cdef double best_thr = 0.0
    cdef double best = -1.0
    cdef double total, left, right, score
    with nogil:
        for j in range(f):
            total = 0.0
            for i in range(n):
                total = total + ys[i, j]
            left = 0.0
            for i in range(1, n):
                left = left + ys[i - 1, j]
                if i < min_leaf or n - i < min_leaf:
                    continue
                if not (xs[i - 1, j] < xs[i, j]):
                    continue
                right = total - left
                score = left * left / i + right * right / (n - i)
                if score > best:
                    best = score
                    best_j = j
                    best_thr = 0.5 * (xs[i - 1, j] + xs[i, j])
                    if best_thr >= xs[i, j]:
                        best_thr = xs[i - 1, j]
    return best_j, best_thr, best
