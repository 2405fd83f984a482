# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled versions of the hot kernels.

Semantics match ``_python.py`` exactly (same pair ordering, same rotation
formulas, same loss definition); only the inner loops are in C. Keep the two
files in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport copysign, exp, fabs, log, sqrt

cnp.import_array()

cdef double P_MIN = 1e-12


def jacobi_sweeps(double[:, ::1] b, double[:, ::1] v, double tol, int max_sweeps):
    """One-sided Jacobi orthogonalization of the columns of ``b``, in place."""
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t n = b.shape[1]
    cdef Py_ssize_t i, p, q
    cdef int sweep, sweeps_done = 0
    cdef bint rotated
    cdef double app, aqq, apq, tau, t, cs, sn, bp, bq

    for sweep in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = 0.0
                aqq = 0.0
                apq = 0.0
                for i in range(m):
                    bp = b[i, p]
                    bq = b[i, q]
                    app += bp * bp
                    aqq += bq * bq
                    apq += bp * bq
                if apq == 0.0 or fabs(apq) <= tol * sqrt(app * aqq):
                    continue
                rotated = True
                tau = (aqq - app) / (2.0 * apq)
                t = copysign(1.0, tau) / (fabs(tau) + sqrt(1.0 + tau * tau))
                cs = 1.0 / sqrt(1.0 + t * t)
                sn = t * cs
                for i in range(m):
                    bp = b[i, p]
                    bq = b[i, q]
                    b[i, p] = cs * bp - sn * bq
                    b[i, q] = sn * bp + cs * bq
                for i in range(n):
                    bp = v[i, p]
                    bq = v[i, q]
                    v[i, p] = cs * bp - sn * bq
                    v[i, q] = sn * bp + cs * bq
        sweeps_done = sweep + 1
        if not rotated:
            break
    return sweeps_done


def head_loss_grads(double[:, ::1] features, cnp.int64_t[::1] y,
                    cnp.int64_t[::1] dom, double[:, ::1] w_c,
                    double[:, :, ::1] w_s, double[:, ::1] mix,
                    double coef_specific, double coef_common, bint want_grads):
    """See ``_python.head_loss_grads`` for the contract."""
    cdef Py_ssize_t n = features.shape[0]
    cdef Py_ssize_t m = features.shape[1]
    cdef Py_ssize_t n_cls = w_c.shape[0]
    cdef Py_ssize_t k = w_s.shape[2]
    cdef Py_ssize_t n_dom = mix.shape[0]
    cdef Py_ssize_t s, i, j, c, di, yi

    heads_arr = np.empty((n_dom, n_cls, m), dtype=np.float64)
    cdef double[:, :, ::1] heads = heads_arr
    cdef double acc
    for di in range(n_dom):
        for c in range(n_cls):
            for i in range(m):
                acc = w_c[c, i]
                for j in range(k):
                    acc += w_s[c, i, j] * mix[di, j]
                heads[di, c, i] = acc

    zs_arr = np.empty(n_cls, dtype=np.float64)
    zc_arr = np.empty(n_cls, dtype=np.float64)
    ps_arr = np.empty(n_cls, dtype=np.float64)
    pc_arr = np.empty(n_cls, dtype=np.float64)
    cdef double[::1] zs = zs_arr
    cdef double[::1] zc = zc_arr
    cdef double[::1] ps = ps_arr
    cdef double[::1] pc = pc_arr

    cdef double[:, ::1] g_wc = None
    cdef double[:, :, ::1] g_ws = None
    cdef double[:, ::1] g_mix = None
    cdef double[:, ::1] g_feat = None
    g_wc_arr = g_ws_arr = g_mix_arr = g_feat_arr = None
    if want_grads:
        g_wc_arr = np.zeros((n_cls, m), dtype=np.float64)
        g_ws_arr = np.zeros((n_cls, m, k), dtype=np.float64)
        g_mix_arr = np.zeros((n_dom, k), dtype=np.float64)
        g_feat_arr = np.zeros((n, m), dtype=np.float64)
        g_wc = g_wc_arr
        g_ws = g_ws_arr
        g_mix = g_mix_arr
        g_feat = g_feat_arr

    cdef double l_s = 0.0
    cdef double l_c = 0.0
    cdef double zmax, total, gs, gc, xi, tmp, py
    for s in range(n):
        di = dom[s]
        yi = y[s]
        # specific-head softmax
        for c in range(n_cls):
            acc = 0.0
            for i in range(m):
                acc += heads[di, c, i] * features[s, i]
            zs[c] = acc
        zmax = zs[0]
        for c in range(1, n_cls):
            if zs[c] > zmax:
                zmax = zs[c]
        total = 0.0
        for c in range(n_cls):
            ps[c] = exp(zs[c] - zmax)
            total += ps[c]
        for c in range(n_cls):
            ps[c] /= total
        py = ps[yi]
        l_s -= log(py if py > P_MIN else P_MIN)

        # common-head softmax
        for c in range(n_cls):
            acc = 0.0
            for i in range(m):
                acc += w_c[c, i] * features[s, i]
            zc[c] = acc
        zmax = zc[0]
        for c in range(1, n_cls):
            if zc[c] > zmax:
                zmax = zc[c]
        total = 0.0
        for c in range(n_cls):
            pc[c] = exp(zc[c] - zmax)
            total += pc[c]
        for c in range(n_cls):
            pc[c] /= total
        py = pc[yi]
        l_c -= log(py if py > P_MIN else P_MIN)

        if not want_grads:
            continue
        for c in range(n_cls):
            gs = (ps[c] - (1.0 if c == yi else 0.0)) * coef_specific / n
            gc = (pc[c] - (1.0 if c == yi else 0.0)) * coef_common / n
            for i in range(m):
                xi = features[s, i]
                g_wc[c, i] += (gs + gc) * xi
                g_feat[s, i] += gs * heads[di, c, i] + gc * w_c[c, i]
                for j in range(k):
                    g_ws[c, i, j] += gs * xi * mix[di, j]
            for j in range(k):
                tmp = 0.0
                for i in range(m):
                    tmp += w_s[c, i, j] * features[s, i]
                g_mix[di, j] += gs * tmp

    l_s /= n
    l_c /= n
    if not want_grads:
        return float(l_s), float(l_c), None, None, None, None
    return float(l_s), float(l_c), g_wc_arr, g_ws_arr, g_mix_arr, g_feat_arr
