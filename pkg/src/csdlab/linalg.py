"""Dense double-precision linear algebra for small matrices.

Everything in this package works on matrices with at most a few hundred
entries per side, so the SVD is a one-sided Jacobi orthogonalization: simple,
accurate to machine precision, and easy to make deterministic. All outputs
follow a fixed sign and ordering convention so repeated calls are
bit-identical.

Numerical constants
-------------------
JACOBI_TOL          relative column-orthogonality threshold that stops the sweeps
JACOBI_MAX_SWEEPS   hard sweep cap (quadratic convergence makes this generous)
PINV_RCOND          pseudoinverse cutoff: sigma <= PINV_RCOND * max(m, n) * sigma_max
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ._kernels import jacobi_sweeps

JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 60
PINV_RCOND = 1e-12


def as_matrix(a, name: str = "a") -> np.ndarray:
    """Validate and return ``a`` as a fresh C-contiguous float64 2-D array.

    Zero-sized axes are allowed (empty factor matrices are legitimate);
    non-finite entries are not.
    """
    out = np.array(a, dtype=np.float64, order="C")
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {out.shape}")
    if out.size and not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


def as_vector(v, name: str = "v") -> np.ndarray:
    out = np.array(v, dtype=np.float64)
    if out.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {out.shape}")
    if out.size and not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


class SvdResult(NamedTuple):
    """Thin SVD ``a = u @ diag(sigma) @ v.T`` with r = min(rows, cols)."""

    u: np.ndarray      # (m, r), orthonormal columns
    sigma: np.ndarray  # (r,), non-increasing, >= 0
    v: np.ndarray      # (n, r), orthonormal columns


def svd(a) -> SvdResult:
    """Deterministic thin SVD.

    Convention: singular values sorted non-increasing (ties keep the Jacobi
    output order), and the largest-magnitude entry of every column of ``u``
    is non-negative (ties broken at the lowest row index).
    """
    a = as_matrix(a)
    m, n = a.shape
    if m == 0 or n == 0:
        raise ValueError(f"svd requires a non-empty matrix, got shape {a.shape}")
    transposed = m < n
    work = np.ascontiguousarray(a.T) if transposed else a.copy()
    u, sigma, v = _jacobi_svd_tall(work)
    if transposed:
        u, v = v, u
    for j in range(sigma.size):
        col = u[:, j]
        i = int(np.argmax(np.abs(col)))
        if col[i] < 0:
            u[:, j] = -col
            v[:, j] = -v[:, j]
    return SvdResult(u, sigma, v)


def _jacobi_svd_tall(b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # b is m x n with m >= n and gets orthogonalized in place.
    m, n = b.shape
    v = np.eye(n)
    jacobi_sweeps(b, v, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    norms = np.linalg.norm(b, axis=0)
    order = np.argsort(-norms, kind="stable")
    sigma = norms[order]
    u = np.zeros((m, n))
    for jj, j in enumerate(order):
        if norms[j] > 0.0:
            u[:, jj] = b[:, j] / norms[j]
        else:
            u[:, jj] = _orthonormal_completion(u[:, :jj])
    return u, sigma, v[:, order]


def _orthonormal_completion(u_partial: np.ndarray) -> np.ndarray:
    # Deterministic unit vector orthogonal to the columns of u_partial: the
    # standard basis vector with the largest residual, re-orthogonalized.
    m = u_partial.shape[0]
    best = None
    best_norm = 0.0
    for i in range(m):
        cand = np.zeros(m)
        cand[i] = 1.0
        for _ in range(2):
            cand -= u_partial @ (u_partial.T @ cand)
        norm = float(np.linalg.norm(cand))
        if norm > best_norm:
            best = cand / norm
            best_norm = norm
    if best is None or best_norm < 1e-8:
        raise ValueError("cannot extend orthonormal basis")
    return best


def truncated_svd(a, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Top-``k`` factors ``(u_k, sigma_k, v_k)`` of ``svd(a)``.

    ``k = 0`` returns empty factors; ``k`` may not exceed min(rows, cols).
    """
    a = as_matrix(a)
    k = int(k)
    if k < 0 or k > min(a.shape):
        raise ValueError(f"k must be in [0, {min(a.shape)}], got {k}")
    if k == 0:
        return (np.zeros((a.shape[0], 0)), np.zeros(0), np.zeros((a.shape[1], 0)))
    u, sigma, v = svd(a)
    return u[:, :k].copy(), sigma[:k].copy(), v[:, :k].copy()


def pseudoinverse(a) -> np.ndarray:
    """Moore-Penrose pseudoinverse via the Jacobi SVD.

    Singular values at or below ``PINV_RCOND * max(m, n) * sigma_max`` are
    treated as exactly zero.
    """
    a = as_matrix(a)
    u, sigma, v = svd(a)
    if sigma.size == 0 or sigma[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]))
    cutoff = PINV_RCOND * max(a.shape) * sigma[0]
    keep = sigma > cutoff
    return (v[:, keep] / sigma[keep]) @ u[:, keep].T


def project_onto_span(basis, v) -> np.ndarray:
    """Orthogonal projection of ``v`` onto the column span of ``basis``.

    Computed as ``B (B^T B)^+ B^T v``; an empty basis projects to zero.
    """
    basis = as_matrix(basis, "basis")
    vec = as_vector(v)
    if basis.shape[0] != vec.size:
        raise ValueError(
            f"basis has {basis.shape[0]} rows but v has length {vec.size}"
        )
    if basis.shape[1] == 0:
        return np.zeros_like(vec)
    gram = basis.T @ basis
    return basis @ (pseudoinverse(gram) @ (basis.T @ vec))
