"""Damped Newton solvers for F(p) = q, scalar and vectorized."""

from __future__ import annotations

import numpy as np

from .mapdef import MapEvaluationError, PlaneMap


class SingularJacobianError(ArithmeticError):
    pass


class NewtonConvergenceError(ArithmeticError):
    pass


def residual_tol(q, tol: float = 1e-9) -> float:
    return tol * (1.0 + float(np.hypot(*np.asarray(q, float))))


def newton_invert(pm: PlaneMap, q, guess, tol: float | None = None, max_iter: int = 50,
                  max_step: float | None = None, singular_tol: float = 1e-12) -> np.ndarray:
    """Solve ``F(p) = q`` from ``guess`` with residual-halving damping.

    ``max_step`` bounds the total displacement from ``guess``; exceeding it
    counts as non-convergence (used to keep continuation on its branch).
    """
    q = np.asarray(q, float)
    p = np.asarray(guess, float).copy()
    if not np.all(np.isfinite(p)):
        raise ValueError("guess must be finite")
    tol = residual_tol(q) if tol is None else tol
    start = p.copy()
    val, J = pm.value_and_jacobian(p)
    r = val - q
    rn = float(np.hypot(*r))
    for _ in range(max_iter):
        if rn < tol:
            return p
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        scale = 1.0 + float(np.sum(J * J))
        if abs(det) < singular_tol * scale:
            raise SingularJacobianError(f"singular Jacobian at {p.tolist()} (det={det:.3g})")
        step = np.array([J[1, 1] * r[0] - J[0, 1] * r[1], -J[1, 0] * r[0] + J[0, 0] * r[1]]) / det
        lam = 1.0
        while True:
            trial = p - lam * step
            try:
                tv, tJ = pm.value_and_jacobian(trial)
                tr = tv - q
                trn = float(np.hypot(*tr))
            except MapEvaluationError:
                trn = np.inf
            if trn < rn or lam < 1e-4:
                break
            lam *= 0.5
        if not np.isfinite(trn):
            raise NewtonConvergenceError("iterate left the domain of finite values")
        p, val, J, r, rn = trial, tv, tJ, tr, trn
        if max_step is not None and np.hypot(*(p - start)) > max_step:
            raise NewtonConvergenceError("iterate left the trust region")
    if rn < tol:
        return p
    raise NewtonConvergenceError(f"no convergence in {max_iter} iterations (residual {rn:.3g})")


def newton_many(pm: PlaneMap, q, starts, tol: float | None = None, max_iter: int = 60):
    """Vectorized damped Newton from many starts.

    Returns ``(points, residuals, converged)``.
    """
    q = np.asarray(q, float)
    tol = residual_tol(q) if tol is None else tol
    P = np.array(starts, float).reshape(-1, 2).copy()

    def resid(P):
        (f1, f2), jac = pm.evaluate_with_jacobian(P[:, 0], P[:, 1])
        R = np.column_stack([f1 - q[0], f2 - q[1]])
        return R, jac

    R, jac = resid(P)
    rn = np.hypot(R[:, 0], R[:, 1])
    rn[~np.isfinite(rn)] = np.inf
    active = np.isfinite(rn) & (rn >= tol)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        a, b, c, d = jac[0][idx], jac[1][idx], jac[2][idx], jac[3][idx]
        det = a * d - b * c
        ok = np.abs(det) > 1e-14 * (1 + a * a + b * b + c * c + d * d)
        det = np.where(ok, det, 1.0)
        r0, r1 = R[idx, 0], R[idx, 1]
        step = np.column_stack([(d * r0 - b * r1) / det, (-c * r0 + a * r1) / det])
        step[~ok] = 0.0
        lam = np.ones(len(idx))
        newP = P[idx].copy()
        newR = R[idx].copy()
        newJ = [j[idx].copy() for j in jac]
        newrn = rn[idx].copy()
        pending = ok.copy()
        for _ in range(12):
            if not pending.any():
                break
            sel = np.flatnonzero(pending)
            trial = P[idx[sel]] - lam[sel, None] * step[sel]
            tR, tJ = resid(trial)
            trn = np.hypot(tR[:, 0], tR[:, 1])
            trn[~np.isfinite(trn)] = np.inf
            better = trn < rn[idx[sel]]
            acc = sel[better]
            newP[acc] = trial[better]
            newR[acc] = tR[better]
            newrn[acc] = trn[better]
            for k in range(4):
                newJ[k][acc] = tJ[k][better]
            pending[acc] = False
            lam[sel[~better]] *= 0.5
        moved = ~pending & ok
        P[idx] = newP
        R[idx] = newR
        rn[idx] = newrn
        for k in range(4):
            jac[k][idx] = newJ[k]
        stalled = idx[~moved]
        active[stalled] = False
        active[idx] &= rn[idx] >= tol
        bad = ~np.all(np.isfinite(P), axis=1) | (np.abs(P).max(axis=1) > 1e12)
        active &= ~bad
        rn[bad] = np.inf
    return P, rn, rn < tol


def dedup_points(points, tol: float) -> np.ndarray:
    """Greedy clustering; keeps the first representative of each cluster."""
    pts = np.asarray(points, float).reshape(-1, 2)
    reps: list[np.ndarray] = []
    if len(pts) == 0:
        return np.zeros((0, 2))
    # coarse bucketing keeps this linear for huge converged sets
    keys = np.floor(pts / max(tol, 1e-300)).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    for p in pts[np.sort(first)]:
        if all(np.hypot(*(p - r)) > tol for r in reps):
            reps.append(p)
    return np.array(reps).reshape(-1, 2)
