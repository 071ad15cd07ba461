"""Global compatibility checks (rotation-number identities over disks,
polydisks and annuli), tile census with parity validation, and a
brute-force preimage oracle independent of continuation."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import splev, splprep
from scipy.spatial import cKDTree

from .continuation import (ContinuationObstruction, PreimageSet, RouteError, TargetOnCriticalImage,
                           TargetPath, all_preimages, solve_preimages)
from .critical import CriticalCurve, Window, image_of_curve
from .geometry import (Polyline, UnderSampledError, contains, crossings, distance_to_polyline,
                       rotation_number, sample_circle, self_intersections)
from .mapdef import PlaneMap
from .newton import dedup_points, newton_many, residual_tol

log = logging.getLogger(__name__)

NOTE = "necessary, not sufficient: passing checks do not prove the critical set is complete"


class CheckInputError(ValueError):
    """Curves handed to a check violate its preconditions."""


class OracleError(RuntimeError):
    pass


@dataclass
class CheckReport:
    kind: str  # disk | polydisk | annulus | parity
    lhs: int
    rhs: int
    inputs_digest: str
    note: str = ""
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.lhs == self.rhs

    def to_json(self) -> dict:
        return {"kind": self.kind, "lhs": int(self.lhs), "rhs": int(self.rhs), "pass": self.passed,
                "inputs_digest": self.inputs_digest, "note": self.note, "details": self.details}

    def __str__(self):
        rel, verdict = ("=", "pass") if self.passed else ("!=", "FAIL")
        return f"{self.kind}: {self.lhs} {rel} {self.rhs} ({verdict})"


@dataclass
class TileSample:
    point: np.ndarray
    count: int
    method: str  # continuation | oracle
    tile: int = -1

    def to_json(self) -> dict:
        return {"point": self.point.tolist(), "count": self.count, "method": self.method, "tile": self.tile}


def digest(*curves) -> str:
    """Short content hash of the curves used by a check."""
    h = hashlib.sha1()
    for c in curves:
        pts = c.points.points if isinstance(c, CriticalCurve) else c.points
        h.update(np.ascontiguousarray(np.round(pts, 12)).tobytes())
    return f"{len(curves)} curves sha1:{h.hexdigest()[:12]}"


# -- oracle ---------------------------------------------------------------------

def preimage_radius(pm: PlaneMap, q) -> float:
    """Radius outside which no preimage of q can lie, from the leading term."""
    hint = pm.infinity_hint
    if hint is None:
        raise ValueError(f"{pm.name} has no behaviour-at-infinity hint; pass a window")
    n, c = hint.degree, abs(complex(hint.coefficient))
    qn = math.hypot(*np.asarray(q, float))
    th = np.linspace(0, 2 * np.pi, 256, endpoint=False)
    R = max((2 * qn / c) ** (1.0 / n), 1.0)
    for _ in range(80):
        ok = True
        for scale in (1.0, 1.5, 2.0, 4.0):
            z = R * scale * np.exp(1j * th)
            F = pm.evaluate(z.real, z.imag)
            rem = np.abs(F[0] + 1j * F[1] - hint.coefficient * z ** n)
            if np.any(rem >= 0.5 * c * (R * scale) ** n):
                ok = False
                break
        if ok and 0.5 * c * R ** n > qn:
            return R
        R *= 1.25
    raise ValueError("could not bound the preimages from the leading term")


def brute_force_preimages(pm: PlaneMap, q, window: Optional[Window] = None, grid_n: int = 32,
                          max_grid: int = 1024, tol: Optional[float] = None) -> PreimageSet:
    """Damped Newton from every node of a grid, doubling the grid until the
    count is unchanged twice in a row."""
    q = np.asarray(q, float)
    if window is None:
        window = Window.square(1.05 * preimage_radius(pm, q))
    window = Window(*window)
    scale = max(window.x1 - window.x0, window.y1 - window.y0)
    dedup_tol = 1e-6 * scale
    tol = residual_tol(q) if tol is None else tol
    history = []
    n = grid_n
    while n <= max_grid:
        xs = np.linspace(window.x0, window.x1, n)
        ys = np.linspace(window.y0, window.y1, n)
        X, Y = np.meshgrid(xs, ys)
        P, res, ok = newton_many(pm, q, np.column_stack([X.ravel(), Y.ravel()]), tol=tol)
        pts = dedup_points(P[ok], dedup_tol)
        history.append(len(pts))
        if len(history) >= 3 and history[-1] == history[-2] == history[-3]:
            # polish representatives once more so residuals meet the contract
            res = np.array([math.hypot(*(pm(p) - q)) for p in pts])
            order = np.lexsort((pts[:, 1], pts[:, 0])) if len(pts) else np.arange(0)
            out = PreimageSet(q, pts[order], res[order], "oracle", f"grid {n}")
            return out
        n *= 2
    raise OracleError(f"preimage count did not stabilize up to grid {max_grid}: {history}")


# -- helpers ----------------------------------------------------------------------

def _require_simple_ccw(curve: Polyline, name: str):
    if not curve.closed:
        raise CheckInputError(f"{name} must be closed")
    if self_intersections(curve):
        raise CheckInputError(f"{name} is not simple")
    if curve.signed_area() <= 0:
        raise CheckInputError(f"{name} must be positively oriented")


def _spline_loop(curve: Polyline):
    """Periodic interpolating spline through the vertices of a closed polyline."""
    pts = curve.points
    tck, _ = splprep([np.r_[pts[:, 0], pts[0, 0]], np.r_[pts[:, 1], pts[0, 1]]], s=0, per=True, quiet=2)

    def sample(n):
        u = np.arange(n) / n
        return Polyline(np.column_stack(splev(u, tck)), closed=True)

    return sample


def _rotation(pm: PlaneMap, curve: Polyline, attempts: int = 7) -> tuple[int, int]:
    """Rotation number of F(curve).

    An under-sampled image is retried on a spline through the vertices at
    doubling density: linear refinement would keep the corners of the
    polyline, and near strongly anisotropic DF a corner maps to a reversal.
    """
    try:
        return rotation_number(image_of_curve(pm, curve)), len(curve)
    except UnderSampledError:
        pass
    loop = _spline_loop(curve)
    n = 2 * len(curve)
    for _ in range(attempts):
        try:
            return rotation_number(image_of_curve(pm, loop(n))), n
        except UnderSampledError:
            n *= 2
    raise UnderSampledError(f"image still under-sampled with {n // 2} samples")


def _sign_det(pm: PlaneMap, p) -> int:
    return int(np.sign(pm.det(np.asarray(p, float))))


def _touches(curve: Polyline, critical: Sequence[CriticalCurve]) -> bool:
    for c in critical:
        if crossings(curve, c.points) or np.any(contains(curve, c.points.points)):
            return True
    return False


# -- checks -------------------------------------------------------------------------

def check_disk(pm: PlaneMap, gamma: Polyline, p_sample=None,
               critical_curves: Optional[Sequence[CriticalCurve]] = None) -> CheckReport:
    """r(F(gamma)) against sgn det DF at a point of the enclosed disk."""
    _require_simple_ccw(gamma, "gamma")
    if critical_curves is not None and _touches(gamma, critical_curves):
        raise CheckInputError("gamma meets or encloses a known critical curve")
    if p_sample is None:
        p_sample = _interior_point(gamma, [], [gamma])
    p_sample = np.asarray(p_sample, float)
    on_curve = distance_to_polyline(p_sample, gamma)[0] < 1e-9
    if not on_curve and not contains(gamma, p_sample[None])[0]:
        raise CheckInputError("p_sample must lie in the closed disk bounded by gamma")
    lhs, used = _rotation(pm, gamma)
    rhs = _sign_det(pm, p_sample)
    note = NOTE if lhs == rhs else "critical curve missing inside gamma"
    return CheckReport("disk", lhs, rhs, digest(gamma), note,
                       {"p_sample": p_sample.tolist(), "samples": used})


def _interior_point(gamma0: Polyline, holes: Sequence[Polyline], avoid: Sequence[Polyline], n: int = 48):
    """Valid point of the region nearest the centroid of gamma0."""
    pts = gamma0.points
    lo, hi = pts.min(0), pts.max(0)
    xs = np.linspace(lo[0], hi[0], n + 2)[1:-1]
    ys = np.linspace(lo[1], hi[1], n + 2)[1:-1]
    X, Y = np.meshgrid(xs, ys)
    cand = np.column_stack([X.ravel(), Y.ravel()])
    ok = contains(gamma0, cand)
    for h in holes:
        ok &= ~contains(h, cand)
    cand = cand[ok]
    if len(cand) == 0:
        raise CheckInputError("region has no interior sample points")
    guard = 1e-3 * float(np.ptp(pts, axis=0).max())
    dist = np.full(len(cand), np.inf)
    for c in list(avoid) + list(holes):
        dist = np.minimum(dist, distance_to_polyline(cand, c))
    cand = cand[dist > guard]
    if len(cand) == 0:
        raise CheckInputError("region is thinner than the guard distance")
    centroid = pts.mean(0)
    return cand[np.argmin(np.hypot(*(cand - centroid).T))]


def check_polydisk(pm: PlaneMap, gamma0: Polyline, holes: Sequence[Polyline],
                   critical_curves: Optional[Sequence[CriticalCurve]] = None,
                   p_sample=None) -> CheckReport:
    """r(F(gamma0)) = sum r(F(gamma_i)) - s (n - 1) on a disk with n holes."""
    _require_simple_ccw(gamma0, "gamma0")
    for i, h in enumerate(holes):
        _require_simple_ccw(h, f"hole {i}")
        if crossings(h, gamma0) or not np.all(contains(gamma0, h.points)):
            raise CheckInputError(f"hole {i} is not strictly inside gamma0")
    for i in range(len(holes)):
        for j in range(i + 1, len(holes)):
            a, b = holes[i], holes[j]
            if crossings(a, b) or contains(a, b.points[:1])[0] or contains(b, a.points[:1])[0]:
                raise CheckInputError(f"holes {i} and {j} overlap")
    if critical_curves is not None:
        for c in critical_curves:
            pts = c.points.points
            inside = contains(gamma0, pts)
            for h in holes:
                inside &= ~contains(h, pts)
            hits = any(crossings(c.points, g) for g in [gamma0, *holes])
            if inside.any() or hits:
                raise CheckInputError("a known critical curve meets the region between gamma0 and the holes")
    if p_sample is None:
        p_sample = _interior_point(gamma0, holes, [gamma0])
    s = _sign_det(pm, p_sample)
    lhs, used = _rotation(pm, gamma0)
    rs = [_rotation(pm, h)[0] for h in holes]
    n = len(holes)
    rhs = sum(rs) - s * (n - 1)
    note = NOTE if lhs == rhs else "critical curve missing in the region between gamma0 and the holes"
    return CheckReport("polydisk", lhs, rhs, digest(gamma0, *holes), note,
                       {"hole_rotations": rs, "s": s, "holes": n, "p_sample": np.asarray(p_sample).tolist()})


def annulus_offsets(curve: CriticalCurve, d_offset: float, others: Sequence[CriticalCurve] = (),
                    density: int = 8):
    """Inner and outer offsets of a closed critical curve, shrinking d until
    both are simple and clear of the critical curves.

    Offsets are taken along the normals of a periodic spline through the
    traced vertices, so they are smooth and can be resampled freely.
    """
    pts = curve.points.points
    tck, _ = splprep([np.r_[pts[:, 0], pts[0, 0]], np.r_[pts[:, 1], pts[0, 1]]], s=0, per=True, quiet=2)
    n = density * len(pts)
    u = np.arange(n) / n
    base = np.column_stack(splev(u, tck))
    der = np.column_stack(splev(u, tck, der=1))
    nrm = np.column_stack([-der[:, 1], der[:, 0]]) / np.hypot(*der.T)[:, None]
    ccw = curve.points.signed_area() > 0
    t0 = np.roll(base, -1, 0) - base
    d = d_offset
    for _ in range(12):
        left = Polyline(base + d * nrm, closed=True)
        right = Polyline(base - d * nrm, closed=True)
        g_in, g_out = (left, right) if ccw else (right, left)
        ok = True
        for g in (g_in, g_out):
            t1 = np.roll(g.points, -1, 0) - g.points
            if (np.any(np.einsum("ij,ij->i", t0, t1) <= 0) or self_intersections(g)
                    or any(crossings(g, c.points) for c in [curve, *others])
                    or distance_to_polyline(g.points, curve.points).min() < 0.5 * d):
                ok = False
                break
        if ok:
            return _ccw(g_in), _ccw(g_out), d
        d *= 0.5
    raise CheckInputError("no admissible offset distance")


def _ccw(curve: Polyline) -> Polyline:
    return curve if curve.signed_area() > 0 else curve.reversed()


def check_annulus(pm: PlaneMap, curve: CriticalCurve, d_offset: Optional[float] = None,
                  others: Sequence[CriticalCurve] = ()) -> CheckReport:
    """r(F(gamma_out)) = r(F(gamma_in)) + s_in k_in + s_out k_out around one critical curve."""
    if not curve.closed:
        raise CheckInputError("annulus check needs a closed critical curve")
    if any(c.effective_side is None for c in curve.cusps):
        raise CheckInputError("cusp effectiveness sides are missing")
    if d_offset is None:
        d_offset = 2.0 * curve.step if curve.step > 0 else 1e-2
    g_in, g_out, d = annulus_offsets(curve, d_offset, others)
    k_in, k_out = curve.cusp_sides()
    s_in = _sign_det(pm, g_in.points[0])
    s_out = -s_in
    r_in, _ = _rotation(pm, g_in)
    r_out, _ = _rotation(pm, g_out)
    rhs = r_in + s_in * k_in + s_out * k_out
    note = NOTE if r_out == rhs else "cusp or critical-curve count inconsistent around this curve"
    return CheckReport("annulus", r_out, rhs, digest(curve), note,
                       {"r_in": r_in, "k_in": k_in, "k_out": k_out, "s_in": s_in, "d_offset": d})


# -- nesting and the standard battery ---------------------------------------------

def nesting(curves: Sequence[CriticalCurve]) -> list[int]:
    """Parent index (smallest enclosing closed curve) of each closed curve, -1 at top."""
    closed = [i for i, c in enumerate(curves) if c.closed]
    area = {i: abs(curves[i].points.signed_area()) for i in closed}
    parent = []
    for i, c in enumerate(curves):
        best = -1
        if c.closed:
            probe = c.points.points[:1]
            for j in closed:
                if j != i and area[j] > area[i] and contains(curves[j].points, probe)[0]:
                    if best < 0 or area[j] < area[best]:
                        best = j
        parent.append(best)
    return parent


def standard_checks(pm: PlaneMap, curves: Sequence[CriticalCurve], annulus: bool = False,
                    d_offset: Optional[float] = None,
                    window: Optional[Window] = None) -> tuple[list[CheckReport], list[str]]:
    """One disk/polydisk check per region cut out by the closed critical
    curves (including the outer one) and optionally one annulus check per curve.

    Returns reports and notes on checks that could not be set up.
    """
    reports, skipped = [], []
    if any(not c.closed for c in curves):
        skipped.append("open (truncated) critical curves present: region checks skipped")
        closed = []
    else:
        closed = list(range(len(curves)))
    parent = nesting(curves)
    offsets = {}
    for i in closed:
        c = curves[i]
        d = d_offset if d_offset is not None else 2.0 * c.step
        try:
            others = [curves[j] for j in range(len(curves)) if j != i]
            offsets[i] = annulus_offsets(c, d, others)
        except CheckInputError as exc:
            skipped.append(f"curve {i}: {exc}")
    if len(offsets) == len(closed):
        for i in closed:
            children = [j for j in closed if parent[j] == i]
            g_in = offsets[i][0]
            try:
                if children:
                    reports.append(check_polydisk(pm, g_in, [offsets[j][1] for j in children]))
                else:
                    reports.append(check_disk(pm, g_in))
            except (CheckInputError, UnderSampledError) as exc:
                skipped.append(f"region inside curve {i}: {exc}")
        if not any(not c.closed for c in curves):
            top = [j for j in closed if parent[j] < 0]
            corners = []
            if window is not None:
                w = Window(*window)
                corners = [[w.x0, w.y0], [w.x1, w.y1]]
            allpts = np.vstack([curves[j].points.points for j in top] + [np.reshape(corners, (-1, 2))])
            if len(allpts) == 0:
                allpts = np.array([[-1.0, -1.0], [1.0, 1.0]])
            center = 0.5 * (allpts.min(0) + allpts.max(0))
            radius = 1.2 * float(np.hypot(*(allpts - center).T).max()) + 0.5
            big = sample_circle(center, radius, 2048)
            try:
                if top:
                    reports.append(check_polydisk(pm, big, [offsets[j][1] for j in top]))
                else:
                    reports.append(check_disk(pm, big, center))
            except (CheckInputError, UnderSampledError) as exc:
                skipped.append(f"outer region: {exc}")
    if annulus:
        for i in closed:
            others = [curves[j] for j in range(len(curves)) if j != i]
            try:
                reports.append(check_annulus(pm, curves[i], d_offset, others))
            except (CheckInputError, UnderSampledError) as exc:
                skipped.append(f"annulus around curve {i}: {exc}")
    return reports, skipped


# -- tile census --------------------------------------------------------------------

def _count_crossings(a, b, image_curves) -> int:
    seg = Polyline([a, b], closed=False)
    return sum(len(crossings(seg, img)) for img in image_curves)


def tile_census(pm: PlaneMap, image_curves: Sequence[Polyline], window: Window, samples_per_tile_goal: int = 4,
                critical_curves: Sequence[CriticalCurve] = (), seed: int = 0, grid: int = 12,
                oracle_window: Optional[Window] = None, base=None) -> tuple[list[TileSample], list[CheckReport]]:
    """Stratified samples of the image window with preimage counts, grouped
    into tiles of F(C); reports parity and adjacency (difference exactly 2)."""
    window = Window(*window)
    rng = np.random.default_rng(seed)
    scale = max(window.x1 - window.x0, window.y1 - window.y0)
    guard = 1e-3 * scale
    m = max(2, int(grid * math.sqrt(max(samples_per_tile_goal, 1) / 4)))
    xs = np.linspace(window.x0, window.x1, m + 1)
    ys = np.linspace(window.y0, window.y1, m + 1)
    pts = []
    for j in range(m):
        xr = range(m) if j % 2 == 0 else range(m - 1, -1, -1)  # serpentine keeps routes short
        for i in xr:
            for _ in range(20):
                p = np.array([rng.uniform(xs[i], xs[i + 1]), rng.uniform(ys[j], ys[j + 1])])
                if all(distance_to_polyline(p, img)[0] > guard for img in image_curves):
                    pts.append(p)
                    break
    samples: list[TileSample] = []
    prev = None
    for p in pts:
        count, method = None, "continuation"
        try:
            if prev is not None:
                ps = all_preimages(pm, p, (prev[0], list(prev[1])), TargetPath.straight(prev[0], p),
                                   critical_curves, image_curves)
            else:
                ps = solve_preimages(pm, p, critical_curves, base=base, image_curves=image_curves,
                                        oracle_window=oracle_window)
            count = len(ps)
            prev = (p, ps.points)
        except (RouteError, ContinuationObstruction, TargetOnCriticalImage, AssertionError):
            try:
                ps = solve_preimages(pm, p, critical_curves, base=base, image_curves=image_curves,
                                        oracle_window=oracle_window)
                count = len(ps)
                prev = (p, ps.points)
            except (RouteError, ContinuationObstruction, TargetOnCriticalImage, ValueError):
                ps = brute_force_preimages(pm, p, oracle_window)
                count, method = len(ps), "oracle"
                prev = (p, ps.points)
        samples.append(TileSample(p, count, method))
    # tiles: union of sample pairs joined by a segment that crosses no image curve
    parent = list(range(len(samples)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    P = np.array([s.point for s in samples]).reshape(-1, 2)
    pairs = set()
    if len(P) > 1:
        tree = cKDTree(P)
        k = min(9, len(P))
        _, nbr = tree.query(P, k=k)
        pairs = {(min(i, j), max(i, j)) for i in range(len(P)) for j in np.atleast_1d(nbr[i]) if i != j}
    ncross = {}
    for i, j in sorted(pairs):
        c = _count_crossings(P[i], P[j], image_curves)
        ncross[(i, j)] = c
        if c == 0:
            parent[find(i)] = find(j)
    roots = sorted({find(i) for i in range(len(samples))})
    label = {r: k for k, r in enumerate(roots)}
    for i, s in enumerate(samples):
        s.tile = label[find(i)]
    counts = [s.count for s in samples]
    parities = sorted({c % 2 for c in counts})
    parity = CheckReport("parity", len(parities), 1, digest(*image_curves),
                         NOTE if len(parities) == 1 else "preimage counts of mixed parity",
                         {"check": "parity", "counts": sorted(set(counts))})
    constancy_bad = sum(samples[i].count != samples[j].count for (i, j), c in ncross.items() if c == 0)
    adjacent = [(i, j) for (i, j), c in ncross.items() if c == 1]
    good = sum(abs(samples[i].count - samples[j].count) == 2 for i, j in adjacent)
    adjacency = CheckReport("parity", good - constancy_bad, len(adjacent), digest(*image_curves),
                            NOTE if good == len(adjacent) and not constancy_bad
                            else "adjacent tiles do not differ by two (or a tile is not constant)",
                            {"check": "adjacency", "pairs": len(adjacent), "differ_by_two": good,
                             "inconsistent_same_tile": constancy_bad, "tiles": len(roots)})
    return samples, [parity, adjacency]
