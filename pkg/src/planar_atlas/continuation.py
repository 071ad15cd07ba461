"""Inversion by continuation: preimage paths along target arcs, with path
death and birth where the arc crosses images of fold curves."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .critical import CriticalCurve, image_of_curve, kernel_vector, trace_tol
from .geometry import Polyline, crossings as polyline_crossings, distance_to_polyline
from .mapdef import MapEvaluationError, PlaneMap
from .newton import NewtonConvergenceError, SingularJacobianError, dedup_points, newton_invert, residual_tol

log = logging.getLogger(__name__)

__all__ = [
    "TargetPath", "CrossingRecord", "PreimagePath", "PreimageSet", "RouteError",
    "ContinuationObstruction", "newton_invert", "continue_path", "find_crossings",
    "spawn_at_fold", "all_preimages", "seeds_at_infinity", "far_base", "solve_preimages",
    "build_flower",
]


class RouteError(RuntimeError):
    """The target arc meets F(C) badly (near a cusp image, a double point,
    tangentially) and has to be rerouted."""


class ContinuationObstruction(RuntimeError):
    """Continuation stalled away from every known fold crossing; usually a
    critical curve is missing."""


class TargetOnCriticalImage(ValueError):
    pass


class TargetPath:
    """Piecewise-linear arc delta: [0, 1] -> R^2, parametrized by arc length."""

    def __init__(self, vertices):
        v = np.array(vertices, float).reshape(-1, 2)
        keep = np.r_[True, np.hypot(*np.diff(v, axis=0).T) > 0]
        v = v[keep]
        if len(v) < 2:
            raise ValueError("a target path needs two distinct points")
        seg = np.hypot(*np.diff(v, axis=0).T)
        self.vertices = v
        self.length = float(seg.sum())
        self.knots = np.r_[0.0, np.cumsum(seg)] / self.length
        self.crossing_records: list[CrossingRecord] = []

    @classmethod
    def straight(cls, a, b) -> "TargetPath":
        return cls([a, b])

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.knots.tolist(), self.vertices))

    @property
    def polyline(self) -> Polyline:
        return Polyline(self.vertices, closed=False)

    def segment(self, t: float) -> int:
        return int(min(max(np.searchsorted(self.knots, t, side="right") - 1, 0), len(self.vertices) - 2))

    def at(self, t: float) -> np.ndarray:
        k = self.segment(t)
        t0, t1 = self.knots[k], self.knots[k + 1]
        lam = (t - t0) / (t1 - t0)
        return self.vertices[k] + lam * (self.vertices[k + 1] - self.vertices[k])

    def direction(self, t: float) -> np.ndarray:
        k = self.segment(t)
        d = self.vertices[k + 1] - self.vertices[k]
        return d / math.hypot(*d)

    @property
    def start(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def end(self) -> np.ndarray:
        return self.vertices[-1]


@dataclass
class CrossingRecord:
    t: float
    point: np.ndarray  # delta(t) on F(C)
    fold_point: np.ndarray  # p_f on C
    curve: int
    direction: str  # gain | loss
    kernel: np.ndarray
    spread: float  # image distance from F(C) at which fold preimages sit a unit apart, per unit^2

    def to_json(self) -> dict:
        return {"t": self.t, "point": self.point.tolist(), "fold_point": self.fold_point.tolist(),
                "curve": self.curve, "direction": self.direction}


@dataclass
class PreimagePath:
    id: int
    ts: list = field(default_factory=list)
    points: list = field(default_factory=list)
    born_at: Optional[float] = None
    died_at: Optional[float] = None
    residual_max: float = 0.0
    _dt: float = 0.005

    @property
    def alive(self) -> bool:
        return self.died_at is None

    @property
    def status(self) -> str:
        if self.died_at is not None:
            return "died_at_fold"
        if self.born_at is not None:
            return "born_at_fold"
        return "alive"

    @property
    def t(self) -> float:
        return self.ts[-1]

    @property
    def point(self) -> np.ndarray:
        return self.points[-1]

    def to_json(self, max_points: int = 400) -> dict:
        pts = np.array(self.points)
        stride = max(1, len(pts) // max_points)
        keep = np.r_[np.arange(0, len(pts), stride), len(pts) - 1]
        keep = np.unique(keep)
        return {"id": self.id, "status": self.status, "born_at": self.born_at, "died_at": self.died_at,
                "residual_max": self.residual_max,
                "t": [self.ts[i] for i in keep], "points": pts[keep].tolist()}


@dataclass
class PreimageSet:
    target: np.ndarray
    points: np.ndarray
    residuals: np.ndarray
    provenance: str = "continuation"
    base_provenance: str = ""
    paths: list = field(default_factory=list)
    crossings: list = field(default_factory=list)
    route: Optional[TargetPath] = None

    def __len__(self):
        return len(self.points)

    def to_json(self) -> dict:
        out = {"target": self.target.tolist(), "preimage_count": len(self.points),
               "points": self.points.tolist(), "residuals": self.residuals.tolist(),
               "method": self.provenance, "base": self.base_provenance,
               "crossings": [c.to_json() for c in self.crossings],
               "paths": [p.to_json() for p in self.paths]}
        if self.route is not None:
            out["route"] = self.route.vertices.tolist()
        return out


class _Underflow(Exception):
    def __init__(self, t):
        self.t = t


def _det(pm, p):
    J = pm.jacobian(p)
    return J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]


def _advance(pm: PlaneMap, delta: TargetPath, path: PreimagePath, t_end: float,
             dt_max: float = 0.02, dt_min: float = 1e-13, tol_rel: float = 1e-9):
    """Extend ``path`` along delta up to ``t_end`` (Euler predictor, Newton
    corrector, step halving/doubling).  Paths never cross the critical set
    between fold events, so a sign change of det DF rejects a step."""
    t = path.t
    p = path.point
    sgn = np.sign(_det(pm, p))
    dt = min(path._dt, dt_max)
    wins = 0
    while t < t_end - 1e-15:
        dt = min(dt, t_end - t)
        t1 = t_end if t + dt >= t_end - 1e-15 else t + dt
        q1 = delta.at(t1)
        tol = tol_rel * (1 + math.hypot(*q1))
        ok = False
        try:
            jet = pm.jet(p)
            J, det = jet.jacobian, jet.det
            r = q1 - jet.value
            pred = p + np.array([J[1, 1] * r[0] - J[0, 1] * r[1], -J[1, 0] * r[0] + J[0, 0] * r[1]]) / det
            move = math.hypot(*(pred - p))
            # stay well inside the distance to the critical set
            reach = 0.5 * abs(det) / (math.hypot(*jet.grad_det) + 1e-300)
            if move <= reach:
                p1 = newton_invert(pm, q1, pred, tol=tol, max_iter=8, max_step=0.5 * move + 1e-12)
                if math.hypot(*(p1 - pred)) <= 0.5 * move + 1e-12 and np.sign(_det(pm, p1)) == sgn:
                    ok = True
        except (SingularJacobianError, NewtonConvergenceError, MapEvaluationError, ZeroDivisionError):
            ok = False
        if not ok:
            dt *= 0.5
            wins = 0
            if dt < dt_min:
                path._dt = dt
                raise _Underflow(t)
            continue
        res = float(math.hypot(*(pm(p1) - q1)))
        # one more Newton step: near folds a small image residual is a large domain error
        try:
            val, J = pm.value_and_jacobian(p1)
            det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
            r = q1 - val
            p2 = p1 + np.array([J[1, 1] * r[0] - J[0, 1] * r[1], -J[1, 0] * r[0] + J[0, 0] * r[1]]) / det
            res2 = float(math.hypot(*(pm(p2) - q1)))
            if res2 <= res and np.sign(_det(pm, p2)) == sgn:
                p1, res = p2, res2
        except (MapEvaluationError, ZeroDivisionError):
            pass
        path.residual_max = max(path.residual_max, res)
        path.ts.append(t1)
        path.points.append(p1)
        t, p = t1, p1
        wins += 1
        if wins >= 4:
            dt = min(2 * dt, dt_max)
            wins = 0
    path._dt = dt


def continue_path(pm: PlaneMap, delta: TargetPath, p_start, t_start: float = 0.0, t_end: float = 1.0,
                  crossings: Sequence["CrossingRecord"] = (), merge_tol: float = 1e-2,
                  path_id: int = 0) -> PreimagePath:
    """Follow one preimage of delta from ``p_start``.

    If the step size underflows next to a known loss crossing the path is
    marked as having died there; anywhere else the stall is reported as an
    obstruction.
    """
    p_start = np.asarray(p_start, float)
    q0 = delta.at(t_start)
    if math.hypot(*(pm(p_start) - q0)) >= residual_tol(q0):
        p_start = newton_invert(pm, q0, p_start)
    path = PreimagePath(path_id, [t_start], [p_start])
    try:
        _advance(pm, delta, path, t_end)
    except _Underflow as u:
        for c in crossings:
            if c.direction == "loss" and abs(u.t - c.t) * delta.length < 1e-3 * (1 + delta.length) \
                    and math.hypot(*(path.point - c.fold_point)) < merge_tol:
                path.died_at = c.t
                path.ts.append(c.t)
                path.points.append(c.fold_point.copy())
                return path
        raise ContinuationObstruction(
            f"continuation stalled at t={u.t:.6g} near {np.round(path.point, 6).tolist()} "
            "away from known fold crossings (missing critical curve?)")
    return path


def _refine_fold_crossing(pm, a, d, guess, max_iter=40):
    """Point p on C with F(p) on the line a + s d."""
    n = np.array([-d[1], d[0]])
    p = np.asarray(guess, float).copy()
    for _ in range(max_iter):
        jet = pm.jet(p)
        g1 = jet.det
        g2 = float(n @ (jet.value - a))
        if abs(g1) < 1e-3 * trace_tol(jet.jacobian) and abs(g2) < 1e-13 * (1 + math.hypot(*a)):
            return p, jet
        M = np.array([jet.grad_det, n @ jet.jacobian])
        try:
            step = np.linalg.solve(M, [g1, g2])
        except np.linalg.LinAlgError:
            break
        p = p - step
    jet = pm.jet(p)
    if abs(jet.det) < trace_tol(jet.jacobian) and abs(float(n @ (jet.value - a))) < 1e-10 * (1 + math.hypot(*a)):
        return p, jet
    raise RouteError("fold crossing refinement failed (tangential or spurious crossing)")


def find_crossings(delta: TargetPath, image_curves: Sequence[Polyline], critical_curves: Sequence[CriticalCurve],
                   pm: PlaneMap, cusp_guard: float = 1e-3, transversality: float = 1e-3,
                   skip=frozenset(), check_cusps: bool = True) -> list[CrossingRecord]:
    """Crossings of delta with F(C), refined onto C and classified gain/loss.

    ``skip`` holds ``(curve, segment)`` pairs of image segments to ignore.
    """
    route = delta.polyline
    records = []
    for ci, (img, curve) in enumerate(zip(image_curves, critical_curves)):
        cpts = curve.points.points
        for c in curve.cusps if check_cusps else ():
            qc = pm(c.location)
            guard = _cusp_guard(img, c, cusp_guard)
            if distance_to_polyline(qc, route)[0] < guard:
                raise RouteError(f"route passes within {guard:.3g} of a cusp image")
        for cr in polyline_crossings(route, img):
            if (ci, cr.j) in skip:
                continue
            a = delta.vertices[cr.i]
            d = delta.vertices[cr.i + 1] - a
            seg_len = math.hypot(*d)
            d = d / seg_len
            j = cr.j
            guess = cpts[j] + cr.t * (cpts[(j + 1) % len(cpts)] - cpts[j])
            p_f, jet = _refine_fold_crossing(pm, a, d, guess)
            if math.hypot(*(p_f - guess)) > 3 * max(curve.step, 1e-6):
                raise RouteError("fold crossing refinement drifted off the traced segment")
            for c in curve.cusps:
                if math.hypot(*(p_f - c.location)) < cusp_guard * 10:
                    raise RouteError("crossing too close to a cusp")
            q_f = jet.value
            s_along = float((q_f - a) @ d)
            t_f = delta.knots[cr.i] + s_along / delta.length
            v = kernel_vector(jet.jacobian)
            g = jet.grad_det
            tau = np.array([-g[1], g[0]]) / math.hypot(*g)
            T = jet.jacobian @ tau
            T = T / math.hypot(*T)
            cross_d = T[0] * d[1] - T[1] * d[0]
            if abs(cross_d) < transversality:
                raise RouteError("route is tangent to F(C)")
            w = 0.5 * np.einsum("kij,i,j->k", jet.hessians, v, v)
            w_normal = T[0] * w[1] - T[1] * w[0]
            if abs(w_normal) < 1e-12:
                raise RouteError("fold degenerates (cusp-like) at the crossing")
            direction = "gain" if np.sign(cross_d) == np.sign(w_normal) else "loss"
            records.append(CrossingRecord(float(t_f), q_f, p_f, ci, direction, v, abs(w_normal) / abs(cross_d)))
    records.sort(key=lambda r: r.t)
    for r1, r2 in zip(records, records[1:]):
        if (r2.t - r1.t) * delta.length < cusp_guard:
            raise RouteError("two fold crossings nearly coincide (route through a double point)")
    delta.crossing_records = records
    return records


def _cusp_guard(img: Polyline, cusp, cusp_guard: float) -> float:
    pts = img.points
    seg = np.hypot(*np.diff(np.vstack([pts, pts[:1]]), axis=0).T)
    k = int(cusp.curve_index) % len(pts)
    idx = np.arange(k - 2, k + 3) % len(seg)
    return max(cusp_guard, 2 * float(seg[idx].max()))


def _fold_eps(rec: CrossingRecord, s: float, length: float) -> float:
    """Parameter offset at which the fold pair sits about s from p_f."""
    return rec.spread * s * s / length


def spawn_at_fold(pm: PlaneMap, p_f, delta: TargetPath, t_f: float, s: float,
                  record: Optional[CrossingRecord] = None, eps: Optional[float] = None,
                  ids=(0, 1), retries: int = 5) -> tuple[PreimagePath, PreimagePath]:
    """Two paths born at the fold point p_f, positioned on delta at t_f + eps.

    Seeds are p_f +- s v (v spanning ker DF(p_f)); each reaches delta along an
    auxiliary straight arc on which det DF keeps its sign.
    """
    p_f = np.asarray(p_f, float)
    jet = pm.jet(p_f)
    v = kernel_vector(jet.jacobian)
    if record is not None and record.direction != "gain":
        raise ValueError("paths are only born when crossing into the side with more preimages")
    last_error = None
    for attempt in range(retries):
        e = eps if eps is not None else (_fold_eps(record, s, delta.length) if record is not None else 1e-6)
        t1 = min(t_f + e, 1.0)
        target = delta.at(t1)
        born = []
        try:
            for sign, pid in zip((1.0, -1.0), ids):
                seed = p_f + sign * s * v
                q_seed = pm(seed)
                aux = TargetPath.straight(q_seed, target) if math.hypot(*(target - q_seed)) > 0 else None
                path = PreimagePath(pid, [0.0], [seed])
                if aux is not None:
                    _advance(pm, aux, path, 1.0, dt_max=0.05)
                end = path.point
                born.append(PreimagePath(pid, [t_f, t1], [p_f.copy(), end], born_at=t_f,
                                         residual_max=float(math.hypot(*(pm(end) - target)))))
            if math.hypot(*(born[0].point - born[1].point)) < 0.05 * s:
                raise RouteError("spawned paths converged to the same point")
            return born[0], born[1]
        except (_Underflow, RouteError, NewtonConvergenceError, SingularJacobianError) as exc:
            last_error = exc
            s *= 0.5
            if eps is not None:
                eps *= 0.25
    raise RouteError(f"could not spawn paths at fold {p_f.tolist()}: {last_error}")


def _guard_target(q, image_curves, guard):
    for img in image_curves:
        if distance_to_polyline(q, img)[0] < guard:
            raise TargetOnCriticalImage(f"target {np.asarray(q).tolist()} lies within {guard:g} of F(C)")


def all_preimages(pm: PlaneMap, q_target, base, route: Optional[TargetPath],
                  critical_curves: Sequence[CriticalCurve], image_curves: Optional[Sequence[Polyline]] = None,
                  spawn_offset: Optional[float] = None, guard: float = 1e-6,
                  base_provenance: str = "supplied", dt_max: float = 0.02, skip=frozenset(),
                  check_cusps: bool = True, tol_rel: float = 1e-9) -> PreimageSet:
    """All preimages of ``q_target`` from the complete preimage set of a base
    point, following ``route`` and accounting for fold births and deaths."""
    q_alpha, base_points = base
    q_alpha = np.asarray(q_alpha, float)
    q_target = np.asarray(q_target, float)
    if route is None:
        route = TargetPath.straight(q_alpha, q_target)
    if image_curves is None:
        image_curves = [image_of_curve(pm, c) for c in critical_curves]
    _guard_target(q_target, image_curves, guard * (1 + math.hypot(*q_target)))
    scale = max((float(np.ptp(c.points.points, axis=0).max()) for c in critical_curves), default=1.0)
    s = spawn_offset if spawn_offset is not None else 1e-3 * max(scale, 1e-2)
    records = find_crossings(route, image_curves, critical_curves, pm, skip=skip, check_cusps=check_cusps)
    ids = itertools.count()
    paths = [PreimagePath(next(ids), [0.0], [np.asarray(p, float)]) for p in base_points]
    for p in paths:
        r = math.hypot(*(pm(p.point) - q_alpha))
        if r >= residual_tol(q_alpha):
            raise ValueError(f"base point {p.point.tolist()} is not a preimage of q_alpha (residual {r:.3g})")
    L = route.length
    # fold pair offsets, shrunk until neighbouring events stay apart
    offsets = []
    for k, rec in enumerate(records):
        sk = s
        while True:
            eps = _fold_eps(rec, sk, L)
            lo = records[k - 1].t if k > 0 else 0.0
            hi = records[k + 1].t if k + 1 < len(records) else 1.0
            if rec.t - eps > lo + 0.25 * (rec.t - lo) and rec.t + eps < hi - 0.25 * (hi - rec.t):
                break
            sk *= 0.5
            if sk < 1e-9 * scale:
                raise RouteError("fold events too close together")
        offsets.append((sk, eps))

    def advance_all(t_stop):
        for path in paths:
            if path.alive and path.t < t_stop:
                try:
                    _advance(pm, route, path, t_stop, dt_max=dt_max, tol_rel=tol_rel)
                except _Underflow as u:
                    raise ContinuationObstruction(
                        f"path {path.id} stalled at t={u.t:.6g} near {np.round(path.point, 6).tolist()} "
                        "away from known fold crossings (missing critical curve?)") from None

    for rec, (sk, eps) in zip(records, offsets):
        advance_all(rec.t - eps)
        if rec.direction == "loss":
            alive = [p for p in paths if p.alive]
            dist = np.array([math.hypot(*(p.point - rec.fold_point)) for p in alive])
            order = np.argsort(dist)
            merge_tol = 10 * sk
            if len(alive) < 2 or dist[order[1]] > merge_tol:
                raise ContinuationObstruction(
                    f"no colliding pair at fold {rec.fold_point.tolist()} (t={rec.t:.6g}); "
                    "known critical set is inconsistent")
            if len(alive) > 2 and dist[order[2]] <= merge_tol:
                raise RouteError("ambiguous collision at fold")
            for k in order[:2]:
                p = alive[k]
                p.died_at = rec.t
                p.ts.append(rec.t)
                p.points.append(rec.fold_point.copy())
        else:
            a, b = spawn_at_fold(pm, rec.fold_point, route, rec.t, sk, record=rec, eps=eps,
                                 ids=(next(ids), next(ids)))
            paths.extend([a, b])
    advance_all(1.0)
    final = [p for p in paths if p.alive]
    pts = np.array([p.point for p in final]).reshape(-1, 2)
    dedup_tol = 1e-6 * max(scale, 1.0)
    if len(dedup_points(pts, dedup_tol)) != len(pts):
        raise RouteError("two continuation paths ended on the same preimage")
    gains = sum(r.direction == "gain" for r in records)
    expected = len(base_points) + 2 * gains - 2 * (len(records) - gains)
    assert len(pts) == expected, (len(pts), expected)
    res = np.array([math.hypot(*(pm(p) - q_target)) for p in pts])
    order = np.lexsort((pts[:, 1], pts[:, 0])) if len(pts) else np.arange(0)
    return PreimageSet(q_target, pts[order], res[order], "continuation", base_provenance, paths, records, route)


def seeds_at_infinity(pm: PlaneMap, q_alpha) -> list[np.ndarray]:
    """The n-th roots of q_alpha / c, polished by Newton."""
    hint = pm.infinity_hint
    if hint is None:
        raise ValueError(f"{pm.name} has no behaviour-at-infinity hint")
    q = complex(*np.asarray(q_alpha, float))
    n, c = hint.degree, complex(hint.coefficient)
    w = q / c
    r = abs(w) ** (1.0 / n)
    # dominance check along the seed circle
    th = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    z = r * np.exp(1j * th)
    F = pm.evaluate(z.real, z.imag)
    rem = np.abs(F[0] + 1j * F[1] - c * z ** n)
    if np.any(rem >= 0.5 * abs(c) * r ** n):
        raise ValueError("|q_alpha| too small: the leading term does not dominate on the seed circle")
    roots = [r * np.exp(1j * (np.angle(w) + 2 * np.pi * k) / n) for k in range(n)]
    out = []
    for z0 in roots:
        p = newton_invert(pm, q_alpha, (z0.real, z0.imag))
        out.append(p)
    pts = np.array(out)
    if len(dedup_points(pts, 1e-6 * r)) != n:
        raise ValueError("seeds merged; enlarge |q_alpha|")
    return out


def far_base(pm: PlaneMap, image_curves: Sequence[Polyline] = (), angle: float = 0.3) -> tuple[np.ndarray, list]:
    """A base point in the unbounded tile together with its preimages."""
    extent = max((float(np.abs(c.points).max()) for c in image_curves), default=1.0)
    R = 2.0 * extent + 1.0
    for _ in range(60):
        q = R * np.array([math.cos(angle), math.sin(angle)])
        try:
            return q, seeds_at_infinity(pm, q)
        except (ValueError, NewtonConvergenceError, SingularJacobianError):
            R *= 2.0
    raise ValueError("no base point found at infinity")


def solve_preimages(pm: PlaneMap, q_target, critical_curves: Sequence[CriticalCurve],
                    base=None, attempts: int = 12, seed: int = 0,
                    image_curves: Optional[Sequence[Polyline]] = None, tol_rel: float = 1e-9,
                    oracle_window=None) -> PreimageSet:
    """All preimages of a target with automatic base selection and rerouting.

    The base comes from the behaviour at infinity when the map has a hint,
    otherwise it must be supplied as ``(q_alpha, preimages)`` (or is produced
    by the brute-force oracle over ``oracle_window``, recorded as such).
    """
    q_target = np.asarray(q_target, float)
    if image_curves is None:
        image_curves = [image_of_curve(pm, c) for c in critical_curves]
    rng = np.random.default_rng(seed)
    provenance = "supplied"
    if base is None and pm.infinity_hint is None:
        from .checks import brute_force_preimages

        extent = max((float(np.abs(c.points).max()) for c in image_curves), default=1.0)
        q_alpha = np.array([1.5 * extent + 1.0, 0.37 * extent + 0.1])
        oracle = brute_force_preimages(pm, q_alpha, window=oracle_window)
        base = (q_alpha, list(oracle.points))
        provenance = "oracle"
    last = None
    for k in range(attempts):
        try:
            if base is None:
                q_alpha, pre = far_base(pm, image_curves, angle=0.3 + 2.399963 * k)
                b = (q_alpha, pre)
                prov = "infinity"
            else:
                b = base
                prov = provenance
            q_alpha = np.asarray(b[0], float)
            if k == 0 or base is None and k < attempts // 2:
                route = TargetPath.straight(q_alpha, q_target)
            else:
                mid = 0.5 * (q_alpha + q_target)
                d = q_target - q_alpha
                perp = np.array([-d[1], d[0]])
                mid = mid + perp * rng.uniform(-0.3, 0.3) + d * rng.uniform(-0.2, 0.2)
                route = TargetPath([q_alpha, mid, q_target])
            return all_preimages(pm, q_target, b, route, critical_curves, image_curves,
                                 base_provenance=prov, tol_rel=tol_rel)
        except (RouteError, ContinuationObstruction) as exc:
            log.debug("route attempt %d failed: %s", k, exc)
            last = exc
    raise last


def _more_side_sign(pm: PlaneMap, p, tangent) -> float:
    """+1 if the side of F(C) with more preimages lies left of ``tangent``."""
    jet = pm.jet(p)
    v = kernel_vector(jet.jacobian)
    w = 0.5 * np.einsum("kij,i,j->k", jet.hessians, v, v)
    return float(np.sign(tangent[0] * w[1] - tangent[1] * w[0]))


def _fold_arcs(pm, curve: CriticalCurve, img: Polyline, zones) -> list[np.ndarray]:
    """Vertex-index runs of a critical curve avoiding the discs ``zones``
    (cusp images with radii), i.e. fold arcs split at cusps."""
    n = len(curve.points.points)
    keep = np.ones(n, bool)
    for qc, g in zones:
        keep &= np.hypot(*(img.points - qc).T) > g
    if not curve.closed:
        runs, cur = [], []
        for k in range(n):
            if keep[k]:
                cur.append(k)
            elif cur:
                runs.append(np.array(cur))
                cur = []
        if cur:
            runs.append(np.array(cur))
        return [r for r in runs if len(r) >= 3]
    if keep.all():
        return [np.r_[np.arange(n), 0]]
    start = int(np.flatnonzero(~keep)[0])
    order = (np.arange(n) + start) % n
    runs, cur = [], []
    for k in order:
        if keep[k]:
            cur.append(k)
        elif cur:
            runs.append(np.array(cur))
            cur = []
    if cur:
        runs.append(np.array(cur))
    return [r for r in runs if len(r) >= 3]


def _offset_route(img_pts: np.ndarray, side: float, eta: float) -> np.ndarray:
    d = np.gradient(img_pts, axis=0)
    nrm = np.column_stack([-d[:, 1], d[:, 0]])
    nrm /= np.maximum(np.hypot(*nrm.T), 1e-300)[:, None]
    return img_pts - side * eta * nrm


def build_flower(pm: PlaneMap, critical_curves: Sequence[CriticalCurve], density: float = 400.0,
                 base=None, cusp_guard: float = 1e-3, failures: Optional[list] = None,
                 sources: Optional[list] = None, oracle_window=None) -> list[Polyline]:
    """Critical curves together with the noncritical preimages of their images.

    Each fold arc of F(C) (split at cusp images, where the preimage is
    singular) is shifted a hair towards its side with fewer preimages and
    inverted by continuation; ``density`` is the number of samples per arc.
    Arcs interrupted by other fold crossings come out open.  ``sources``
    receives the index of the critical curve behind each output polyline
    (-1 for the critical curves themselves).
    """
    out = [c.points for c in critical_curves]
    if sources is not None:
        sources.extend([-1] * len(out))
    if not critical_curves:
        return out
    images = [image_of_curve(pm, c) for c in critical_curves]
    img_scale = max(float(np.ptp(np.vstack([i.points for i in images]), axis=0).max()), 1e-6)
    eta = 1e-5 * img_scale
    if base is None:
        if pm.infinity_hint is not None:
            base = far_base(pm, images)
        else:
            from .checks import brute_force_preimages

            extent = max(float(np.abs(i.points).max()) for i in images)
            q_alpha = np.array([1.5 * extent + 1.0, 0.37 * extent + 0.1])
            base = (q_alpha, list(brute_force_preimages(pm, q_alpha, oracle_window).points))
    zones = [(pm(c.location), _cusp_guard(img, c, cusp_guard), ci)
             for ci, (curve, img) in enumerate(zip(critical_curves, images)) for c in curve.cusps]
    for ci, (curve, img) in enumerate(zip(critical_curves, images)):
        mine = [(q, (5 if cj == ci else 2) * g) for q, g, cj in zones]
        for run in _fold_arcs(pm, curve, img, mine):
            mid = run[len(run) // 2]
            pts = img.points[run]
            tangent = pts[min(len(run) // 2 + 1, len(run) - 1)] - pts[max(len(run) // 2 - 1, 0)]
            side = _more_side_sign(pm, curve.points.points[mid], tangent)
            route_pts = _offset_route(pts, side, eta)
            if len(route_pts) < 2:
                continue
            nseg = len(img.points) if curve.closed else len(img.points) - 1
            skip = {(ci, int(j) % nseg) for k in run for j in range(k - 2, k + 3)}
            closed_loop = curve.closed and len(run) == len(curve.points.points) + 1
            m = 0 if closed_loop else len(route_pts) // 2
            legs = [route_pts[m:]] if closed_loop else [route_pts[m:], route_pts[m::-1]]
            try:
                start = solve_preimages(pm, route_pts[m], critical_curves, base=base, image_curves=images)
                sets = []
                for leg in legs:
                    if len(leg) < 2:
                        sets.append(None)
                        continue
                    sets.append(all_preimages(pm, leg[-1], (leg[0], list(start.points)), TargetPath(leg),
                                              critical_curves, images, skip=skip, base_provenance="flower",
                                              dt_max=len(route_pts) / (len(leg) * density)))
            except (RouteError, ContinuationObstruction, TargetOnCriticalImage) as exc:
                log.info("flower arc on curve %d skipped: %s", ci, exc)
                if failures is not None:
                    failures.append({"curve": ci, "error": str(exc)})
                continue
            arcs = _stitch(sets[0].paths, True, eta * 100) if closed_loop else _join_legs(sets, len(start.points))
            out.extend(arcs)
            if sources is not None:
                sources.extend([ci] * len(arcs))
    return out


def _join_legs(sets, n_base: int) -> list[Polyline]:
    """Glue forward and backward continuations that share base paths."""
    fwd, bwd = sets
    out = []
    fpaths = fwd.paths if fwd is not None else []
    bpaths = bwd.paths if bwd is not None else []
    for k in range(n_base):
        a = np.array(bpaths[k].points)[::-1] if bpaths else np.zeros((0, 2))
        b = np.array(fpaths[k].points) if fpaths else np.zeros((0, 2))
        pts = np.vstack([a, b[1:] if len(a) else b])
        if len(pts) >= 2:
            out.append(Polyline(pts, closed=False))
    for p in list(fpaths[n_base:]) + list(bpaths[n_base:]):
        if len(p.points) >= 2:
            out.append(Polyline(np.array(p.points), closed=False))
    return out


def _stitch(paths: Sequence[PreimagePath], closed_loop: bool, tol: float) -> list[Polyline]:
    arcs = [np.array(p.points) for p in paths if len(p.points) >= 2]
    if not closed_loop:
        return [Polyline(a, closed=False) for a in arcs]
    # route returns to its start: chain paths whose end matches another start
    whole = [a for a, p in zip(arcs, paths) if p.born_at is None and p.died_at is None]
    rest = [a for a, p in zip(arcs, paths) if not (p.born_at is None and p.died_at is None)]
    out, used = [], [False] * len(whole)
    for i in range(len(whole)):
        if used[i]:
            continue
        chain = [whole[i]]
        used[i] = True
        while True:
            end = chain[-1][-1]
            nxt = next((k for k in range(len(whole)) if not used[k]
                        and math.hypot(*(whole[k][0] - end)) < tol), None)
            if nxt is None:
                break
            used[nxt] = True
            chain.append(whole[nxt])
        pts = np.vstack(chain)
        closed = math.hypot(*(pts[-1] - pts[0])) < tol
        out.append(Polyline(pts, closed=closed))
    out.extend(Polyline(a, closed=False) for a in rest)
    return out
