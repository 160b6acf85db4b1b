"""Batched Newton solves shared by the orbit, branch and preimage code."""

from __future__ import annotations

import numpy as np

MAX_ITER = 50
RESIDUAL_TOL = 1e-10
DET_FLOOR = 1e-300


def batched_newton(m, targets: np.ndarray, X0: np.ndarray, max_iter: int = MAX_ITER,
                   stop_tol: float = 1e-14, max_step: float | None = None):
    """Solve ``f(x) = target`` row-wise starting from ``X0``.

    Returns ``(X, residual, det)``; rows that hit a singular Jacobian or go
    non-finite come back with ``residual = inf``.
    """
    with np.errstate(all="ignore"):
        return _newton(m, targets, X0, max_iter, stop_tol, max_step)


def _newton(m, targets, X0, max_iter, stop_tol, max_step):
    X = np.array(X0, dtype=float, copy=True)
    T = np.asarray(targets, dtype=float)
    n, d = X.shape
    alive = np.ones(n, dtype=bool)
    res = np.full(n, np.inf)
    for _ in range(max_iter):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        Xa = X[idx]
        R = m.diff(m.func(Xa), T[idx])
        r = np.linalg.norm(R, axis=-1)
        res[idx] = r
        done = r < stop_tol
        J = m.jacobians(Xa)
        det = np.linalg.det(J)
        bad = ~np.isfinite(r) | ~np.isfinite(det) | (np.abs(det) < DET_FLOOR)
        go = ~done & ~bad
        if np.any(go):
            Jg = J[go]
            step = np.linalg.solve(Jg, R[go][..., None])[..., 0]
            if max_step is not None:
                sn = np.linalg.norm(step, axis=-1)
                scale = np.minimum(1.0, max_step / np.maximum(sn, 1e-300))
                step *= scale[:, None]
            X[idx[go]] = Xa[go] - step
        res[idx[bad]] = np.inf
        alive[idx[done | bad]] = False
        if np.any(~np.isfinite(X[idx])):
            nf = idx[~np.all(np.isfinite(X[idx]), axis=-1)]
            res[nf] = np.inf
            alive[nf] = False
    live = np.all(np.isfinite(X), axis=-1)
    R = np.full(n, np.inf)
    if np.any(live):
        R[live] = np.linalg.norm(m.diff(m.func(X[live]), T[live]), axis=-1)
    det = np.full(n, np.nan)
    if np.any(live):
        det[live] = np.linalg.det(m.jacobians(X[live]))
    return m.reduce(X), R, det
