"""Small dense nonnegative least-squares solvers (Lawson-Hanson active set).

Both solvers are deterministic: on ties the lowest index enters the passive
set first, and passive subproblems use minimum-norm least squares so that
linearly dependent columns do not break the iteration.
"""

from __future__ import annotations

import numpy as np


def _active_set(gradient, solve, size, tol, max_iter):
    lam = np.zeros(size)
    passive = np.zeros(size, dtype=bool)
    w = gradient(lam)
    for _ in range(max_iter):
        candidates = np.where(~passive, w, -np.inf)
        j = int(np.argmax(candidates))
        if candidates[j] <= tol:
            break
        passive[j] = True
        while True:
            s = np.zeros(size)
            s[passive] = solve(passive)
            if np.all(s[passive] > 0):
                break
            blocking = passive & (s <= 0)
            step = np.min(lam[blocking] / (lam[blocking] - s[blocking]))
            lam = lam + step * (s - lam)
            passive &= lam > tol
            lam[~passive] = 0.0
            if not passive.any():
                s = np.zeros(size)
                break
        lam = s
        w = gradient(lam)
    return lam


def nnls(A, b, max_iter=None):
    """Solve ``min |A c - b|`` over ``c >= 0``.

    Returns the coefficient vector and the residual norm.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    k = A.shape[1]
    if k == 0:
        return np.zeros(0), float(np.linalg.norm(b))
    tol = 10 * np.finfo(float).eps * max(1.0, np.abs(A).max()) * max(A.shape)

    def gradient(c):
        return A.T @ (b - A @ c)

    def solve(passive):
        return np.linalg.lstsq(A[:, passive], b, rcond=None)[0]

    c = _active_set(gradient, solve, k, tol, max_iter or 3 * k + 10)
    c = _min_norm(A, c, gradient(c), tol)
    return c, float(np.linalg.norm(A @ c - b))


def _min_norm(A, c, w, tol):
    """Among all nonnegative minimizers pick the one of least norm.

    Minimizers share the fitted vector ``p = A c`` and live on the columns
    with zero gradient. When those columns are independent the minimizer is
    unique; otherwise the least-norm point of ``{A_Z c = p, c >= 0}`` is
    found by a stiff penalty QP and polished on its support.
    """
    zero = np.flatnonzero(np.abs(w) <= 1e3 * tol)
    Z = A[:, zero]
    if zero.size < 2 or np.linalg.matrix_rank(Z) == zero.size:
        return c
    p = A @ c
    scale = max(1.0, float(np.abs(Z).max()) ** 2)
    rho = 1e10 / scale
    cz = nonneg_qp(np.eye(zero.size) + rho * Z.T @ Z, rho * Z.T @ p)
    support = cz > 1e-9 * max(cz.max(), 1e-300)
    polished = np.zeros(zero.size)
    polished[support] = np.linalg.lstsq(Z[:, support], p, rcond=None)[0]
    fit = np.linalg.norm(Z @ polished - p)
    if np.all(polished >= 0) and fit <= 1e-12 * max(1.0, np.linalg.norm(p)) and (
        np.linalg.norm(polished) <= np.linalg.norm(c) + 1e-15
    ):
        out = np.zeros_like(c)
        out[zero] = polished
        return out
    return c


def nonneg_qp(G, h, max_iter=None):
    """Solve ``min 0.5 l.G.l - h.l`` over ``l >= 0`` for symmetric PSD ``G``."""
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    k = h.shape[0]
    if k == 0:
        return np.zeros(0)
    tol = 10 * np.finfo(float).eps * max(1.0, np.abs(G).max(), np.abs(h).max()) * k

    def gradient(lam):
        return h - G @ lam

    def solve(passive):
        return np.linalg.lstsq(G[np.ix_(passive, passive)], h[passive], rcond=None)[0]

    return _active_set(gradient, solve, k, tol, max_iter or 3 * k + 10)
