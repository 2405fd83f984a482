"""Numpy reference implementation of the hot kernels.

The compiled backend (``_speedups.pyx``) mirrors these functions exactly;
keep the two in sync. Both are selected through ``csdlab._kernels``.
"""

from __future__ import annotations

import math

import numpy as np

P_MIN = 1e-12  # probability floor before the cross-entropy log


def jacobi_sweeps(b: np.ndarray, v: np.ndarray, tol: float, max_sweeps: int) -> int:
    """One-sided Jacobi orthogonalization of the columns of ``b``, in place.

    Rotations are accumulated into ``v`` (must start as the identity), so on
    return ``b == a @ v`` for the original matrix ``a``. Column pairs are
    visited in fixed row-cyclic order; a pair is rotated only while
    ``|b_p . b_q| > tol * |b_p| * |b_q|``. Returns the number of sweeps run.
    """
    n = b.shape[1]
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                bp = b[:, p]
                bq = b[:, q]
                app = float(bp @ bp)
                aqq = float(bq @ bq)
                apq = float(bp @ bq)
                if apq == 0.0 or abs(apq) <= tol * math.sqrt(app * aqq):
                    continue
                rotated = True
                tau = (aqq - app) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                cs = 1.0 / math.sqrt(1.0 + t * t)
                sn = t * cs
                new_p = cs * bp - sn * bq
                new_q = sn * bp + cs * bq
                b[:, p] = new_p
                b[:, q] = new_q
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = cs * vp - sn * vq
                v[:, q] = sn * vp + cs * vq
        if not rotated:
            break
    return sweeps


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def head_loss_grads(features, y, dom, w_c, w_s, mix, coef_specific, coef_common,
                    want_grads):
    """Batch cross-entropy under the per-domain and common heads.

    ``mix`` holds the post-sigmoid domain embeddings, one row per domain; the
    head used for sample ``t`` is ``w_c + w_s . mix[dom[t]]``. Returns
    ``(l_s, l_c, g_wc, g_ws, g_mix, g_feat)`` where the losses are plain
    batch means and the gradients are of
    ``coef_specific * l_s + coef_common * l_c`` (``None`` when
    ``want_grads`` is false).
    """
    n = features.shape[0]
    mix_rows = mix[dom]  # (n, k)
    heads = w_c[None, :, :] + np.einsum("cmj,nj->ncm", w_s, mix_rows)
    logits_s = np.einsum("ncm,nm->nc", heads, features)
    logits_c = features @ w_c.T
    p_s = _softmax(logits_s)
    p_c = _softmax(logits_c)
    rows = np.arange(n)
    l_s = float(-np.log(np.maximum(p_s[rows, y], P_MIN)).mean())
    l_c = float(-np.log(np.maximum(p_c[rows, y], P_MIN)).mean())
    if not want_grads:
        return l_s, l_c, None, None, None, None

    gs = p_s.copy()
    gs[rows, y] -= 1.0
    gs *= coef_specific / n
    gc = p_c.copy()
    gc[rows, y] -= 1.0
    gc *= coef_common / n

    g_wc = gs.T @ features + gc.T @ features
    g_ws = np.einsum("nc,nm,nj->cmj", gs, features, mix_rows)
    g_mix = np.zeros_like(mix)
    np.add.at(g_mix, dom, np.einsum("nc,cmj,nm->nj", gs, w_s, features))
    g_feat = np.einsum("nc,ncm->nm", gs, heads) + gc @ w_c
    return l_s, l_c, g_wc, g_ws, g_mix, g_feat
