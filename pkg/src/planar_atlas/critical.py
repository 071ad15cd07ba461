"""Critical set of a plane map: seeding, tracing, fold tests and cusps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Polyline
from .mapdef import PlaneMap
from .newton import newton_many

log = logging.getLogger(__name__)

GRAD_TOL = 1e-6
ALIGN_TOL = 1e-3
LOC_TOL = 1e-8


class TracingError(RuntimeError):
    pass


class DegenerateCriticalPoint(TracingError):
    """grad det DF vanishes: the map is not excellent here."""


class StepUnderflow(TracingError):
    pass


class Window(NamedTuple):
    x0: float
    y0: float
    x1: float
    y1: float

    @classmethod
    def square(cls, r: float) -> "Window":
        return cls(-r, -r, r, r)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    def contains(self, p) -> bool:
        return self.x0 <= p[0] <= self.x1 and self.y0 <= p[1] <= self.y1


def trace_tol(jacobian) -> float:
    return 1e-9 * (1.0 + float(np.sum(np.asarray(jacobian) ** 2)))


def kernel_vector(J) -> np.ndarray:
    """Unit vector spanning ker J via the larger-norm row of J."""
    (a, b), (c, d) = J
    if a * a + b * b >= c * c + d * d:
        v = np.array([-b, a])
    else:
        v = np.array([-d, c])
    n = math.hypot(*v)
    if n == 0.0:
        raise DegenerateCriticalPoint("DF vanishes identically; kernel is two-dimensional")
    return v / n


@dataclass
class Cusp:
    location: np.ndarray
    curve_index: float
    kernel_dir: np.ndarray
    effective_side: Optional[str] = None  # "left" or "right" of curve travel
    local_counts: Optional[tuple] = None

    def to_json(self) -> dict:
        return {"location": list(map(float, self.location)), "curve_index": float(self.curve_index),
                "kernel_dir": list(map(float, self.kernel_dir)), "side": self.effective_side}


@dataclass
class CriticalCurve:
    points: Polyline
    cusps: list = field(default_factory=list)
    orientation: Optional[str] = None  # closed curves are stored counterclockwise
    det_side_left: int = 0
    truncated: bool = False
    step: float = 0.0

    @property
    def closed(self) -> bool:
        return self.points.closed

    def cusp_sides(self) -> tuple[int, int]:
        """Numbers of (inner, outer) effective cusps of a closed curve."""
        if not self.closed:
            raise ValueError("inner/outer cusps are defined for closed curves")
        inner_side = "left" if self.orientation == "positive" else "right"
        inner = sum(c.effective_side == inner_side for c in self.cusps)
        outer = sum(c.effective_side not in (None, inner_side) for c in self.cusps)
        return inner, outer

    def to_json(self) -> dict:
        return {"points": self.points.points.tolist(), "closed": self.closed,
                "orientation": self.orientation, "det_side_left": self.det_side_left,
                "truncated": self.truncated, "step": self.step,
                "cusps": len(self.cusps), "cusp_list": [c.to_json() for c in self.cusps]}

    @classmethod
    def from_json(cls, data) -> "CriticalCurve":
        cusps = [Cusp(np.array(c["location"]), c["curve_index"], np.array(c["kernel_dir"]), c["side"])
                 for c in data["cusp_list"]]
        return cls(Polyline(data["points"], data["closed"]), cusps, data["orientation"],
                   data["det_side_left"], data["truncated"], data["step"])


@dataclass(frozen=True)
class FoldStatus:
    is_critical: bool
    grad_norm: float
    kernel_alignment: float
    verdict: str  # regular | fold | cusp-candidate | degenerate


def scan_seeds(pm: PlaneMap, window: Window, grid_n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Adjacent grid nodes with opposite-sign det DF, in row-major order."""
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    xs = np.linspace(window.x0, window.x1, grid_n)
    ys = np.linspace(window.y0, window.y1, grid_n)
    X, Y = np.meshgrid(xs, ys)
    D = np.sign(pm.det_many(X, Y))
    out = []
    for i in range(grid_n):
        for j in range(grid_n):
            here = D[i, j]
            if j + 1 < grid_n and here * D[i, j + 1] < 0:
                out.append((np.array([xs[j], ys[i]]), np.array([xs[j + 1], ys[i]])))
            if i + 1 < grid_n and here * D[i + 1, j] < 0:
                out.append((np.array([xs[j], ys[i]]), np.array([xs[j], ys[i + 1]])))
    return out


def refine_critical_point(pm: PlaneMap, p_plus, p_minus, max_iter: int = 100) -> np.ndarray:
    """Root of det DF on the segment, by bisection followed by 1-D Newton."""
    a = np.asarray(p_plus, float)
    b = np.asarray(p_minus, float)
    da, db = pm.det(a), pm.det(b)
    if da * db >= 0:
        raise ValueError("det DF has the same sign at both endpoints")
    d = b - a
    lo, hi, flo = 0.0, 1.0, da
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        fm = pm.det(a + mid * d)
        if fm * flo > 0:
            lo, flo = mid, fm
        else:
            hi = mid
        if fm == 0.0:
            lo = hi = mid
            break
    t = 0.5 * (lo + hi)
    for _ in range(max_iter):
        p = a + t * d
        jet = pm.jet(p)
        if abs(jet.det) < trace_tol(jet.jacobian):
            return p
        slope = float(jet.grad_det @ d)
        t_new = t - jet.det / slope if slope != 0 else 0.5 * (lo + hi)
        if not lo - 1e-9 <= t_new <= hi + 1e-9:
            t_new = 0.5 * (lo + hi)
        f_new = pm.det(a + t_new * d)
        if f_new * flo > 0:
            lo, flo = t_new, f_new
        else:
            hi = t_new
        t = t_new
    raise TracingError("critical point refinement did not converge")


def _project(pm: PlaneMap, q, max_shift: float, max_iter: int = 30):
    """Newton on det DF along the line through ``q`` parallel to grad det DF(q)."""
    jet = pm.jet(q)
    g = jet.grad_det
    gn = math.hypot(*g)
    if gn <= GRAD_TOL:
        raise DegenerateCriticalPoint(f"grad det DF vanishes near {np.round(q, 6).tolist()}")
    u = g / gn
    sigma = 0.0
    for _ in range(max_iter):
        p = q + sigma * u
        jet = pm.jet(p)
        if abs(jet.det) < 1e-3 * trace_tol(jet.jacobian):
            return p, jet
        slope = float(jet.grad_det @ u)
        if slope == 0.0:
            break
        sigma -= jet.det / slope
        if abs(sigma) > max_shift:
            break
    if abs(jet.det) < trace_tol(jet.jacobian):
        return p, jet
    raise TracingError("corrector failed")


def _tangent(jet, previous=None) -> np.ndarray:
    g = jet.grad_det
    gn = math.hypot(*g)
    if gn <= GRAD_TOL:
        raise DegenerateCriticalPoint("grad det DF vanishes on the curve")
    t = np.array([-g[1], g[0]]) / gn
    if previous is not None and t @ previous < 0:
        t = -t
    return t


def _march(pm, p0, t0, h, window, h_min, max_steps):
    """Follow the level set from p0 along t0. Returns (points, closed, left_window)."""
    pts = [p0]
    p, t = p0, t0
    step = h
    travelled = 0.0
    successes = 0
    for _ in range(max_steps):
        q = p + step * t
        try:
            p1, jet1 = _project(pm, q, max_shift=step)
            t1 = _tangent(jet1, t)
            seg = math.hypot(*(p1 - p))
            if not (0.5 * step <= seg <= 1.5 * step) or t1 @ t < math.cos(0.6):
                raise TracingError("step rejected")
        except DegenerateCriticalPoint:
            raise
        except TracingError:
            step *= 0.5
            successes = 0
            if step < h_min:
                raise StepUnderflow(f"step underflow near {np.round(p, 6).tolist()}")
            continue
        if not window.contains(p1):
            return pts, False, True
        # closure: p0 falls between p and p1
        if travelled > 3 * h and len(pts) >= 5:
            d = p1 - p
            lam = float((p0 - p) @ d) / float(d @ d)
            perp = abs(d[0] * (p0 - p)[1] - d[1] * (p0 - p)[0]) / math.hypot(*d)
            if -0.25 <= lam <= 1.0 and perp < 0.5 * h and t1 @ t0 > 0:
                if math.hypot(*(p - p0)) < 0.25 * h:
                    pts.pop()
                return pts, True, False
        pts.append(p1)
        travelled += seg
        p, t = p1, t1
        successes += 1
        if step < h and successes >= 2:
            step = min(h, 2 * step)
            successes = 0
    raise TracingError(f"no closure after {max_steps} steps")


def trace_critical_curve(pm: PlaneMap, p0, h: float, window: Window, h_min: Optional[float] = None,
                         max_steps: Optional[int] = None) -> CriticalCurve:
    """Predictor-corrector tracing of the component of det DF = 0 through p0."""
    p0 = np.asarray(p0, float)
    jet0 = pm.jet(p0)
    if abs(jet0.det) >= trace_tol(jet0.jacobian):
        p0, jet0 = _project(pm, p0, max_shift=h)
    t0 = _tangent(jet0)
    h_min = h * 1e-4 if h_min is None else h_min
    if max_steps is None:
        max_steps = int(40 * (window.x1 - window.x0 + window.y1 - window.y0) / h) + 1000
    fwd, closed, out = _march(pm, p0, t0, h, window, h_min, max_steps)
    truncated = False
    if closed:
        pts = np.array(fwd)
    else:
        truncated = True
        back, _, _ = _march(pm, p0, -t0, h, window, h_min, max_steps)
        pts = np.array(back[::-1] + fwd[1:])
    poly = Polyline(_thin(pts, h, closed), closed=closed)
    orientation = None
    if closed:
        if poly.signed_area() < 0:
            poly = poly.reversed()
        orientation = "positive"
    curve = CriticalCurve(poly, [], orientation, 0, truncated, h)
    curve.det_side_left = _det_side_left(pm, curve, 0)
    return curve


def _thin(pts: np.ndarray, h: float, closed: bool) -> np.ndarray:
    """Drop points closer than h/4 to the previously kept one (halved steps
    can leave short gaps); every remaining gap stays below 2h."""
    keep = [0]
    for i in range(1, len(pts)):
        if math.hypot(*(pts[i] - pts[keep[-1]])) >= 0.25 * h:
            keep.append(i)
    last = len(pts) - 1
    if not closed and keep[-1] != last:
        if len(keep) > 1:
            keep[-1] = last
        else:
            keep.append(last)
    if closed and len(keep) > 3 and math.hypot(*(pts[keep[-1]] - pts[0])) < 0.25 * h:
        keep.pop()
    return pts[keep]


def _travel_tangent(curve: CriticalCurve, i: int) -> np.ndarray:
    pts = curve.points.points
    n = len(pts)
    if curve.closed:
        d = pts[(i + 1) % n] - pts[i - 1]
    else:
        d = pts[min(i + 1, n - 1)] - pts[max(i - 1, 0)]
    return d / math.hypot(*d)


def _det_side_left(pm, curve, i) -> int:
    p = curve.points.points[i]
    t = _travel_tangent(curve, i)
    left = np.array([-t[1], t[0]])
    return int(np.sign(pm.jet(p).grad_det @ left))


def fold_test(pm: PlaneMap, p, grad_tol: float = GRAD_TOL, align_tol: float = ALIGN_TOL) -> FoldStatus:
    jet = pm.jet(np.asarray(p, float))
    if abs(jet.det) >= trace_tol(jet.jacobian):
        return FoldStatus(False, float(math.hypot(*jet.grad_det)), float("nan"), "regular")
    g = jet.grad_det
    gn = float(math.hypot(*g))
    try:
        v = kernel_vector(jet.jacobian)
    except DegenerateCriticalPoint:
        return FoldStatus(True, gn, 0.0, "degenerate")
    align = float(g @ v)
    if gn <= grad_tol:
        verdict = "degenerate"
    elif abs(align) > align_tol:
        verdict = "fold"
    else:
        verdict = "cusp-candidate"
    return FoldStatus(True, gn, align, verdict)


def _alignment(pm, p, ref):
    jet = pm.jet(p)
    v = kernel_vector(jet.jacobian)
    if ref is not None and v @ ref < 0:
        v = -v
    return float(jet.grad_det @ v), v


def locate_cusps(pm: PlaneMap, curve: CriticalCurve, loc_tol: float = LOC_TOL) -> list[Cusp]:
    """One cusp per sign change of <grad det DF, ker DF> along the curve."""
    pts = curve.points.points
    n = len(pts)
    aligns = np.empty(n)
    kers = np.empty((n, 2))
    ref = None
    for i, p in enumerate(pts):
        aligns[i], kers[i] = _alignment(pm, p, ref)
        ref = kers[i]
    scale = np.abs(aligns).max() if n else 1.0
    zero = np.abs(aligns) <= 1e-13 * (1 + scale)
    signs = np.where(zero, 0, np.sign(aligns)).astype(int)
    nz = np.flatnonzero(signs)
    if len(nz) == 0:
        raise DegenerateCriticalPoint("kernel alignment vanishes along the whole curve")
    pairs = list(zip(nz[:-1], nz[1:]))
    if curve.closed:
        pairs.append((nz[-1], nz[0] + n))
    # closed curves carry a kernel sign flip across the seam if the total is odd
    seam_flip = curve.closed and kers[-1] @ kers[0] < 0
    cusps = []
    for j, k in pairs:
        sj = signs[j]
        sk = signs[k % n] * (-1 if (seam_flip and k >= n) else 1)
        if sj * sk > 0:
            continue
        if k - j == 1:
            cusps.append(_bisect_cusp(pm, curve, j, kers[j], aligns[j], loc_tol))
        elif k - j == 2:
            i = (j + 1) % n
            cusps.append(Cusp(pts[i].copy(), float(i), kers[i].copy()))
        else:
            raise DegenerateCriticalPoint(
                f"kernel alignment vanishes on a whole stretch of the curve near {pts[(j + 1) % n].tolist()}")
    return cusps


def _bisect_cusp(pm, curve, j, ker_j, align_j, loc_tol):
    pts = curve.points.points
    n = len(pts)
    a, b = pts[j], pts[(j + 1) % n]
    lo, hi = 0.0, 1.0
    seg = math.hypot(*(b - a))
    p_lo, p_hi = a, b
    ker = ker_j
    while math.hypot(*(p_hi - p_lo)) > loc_tol and hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        q = a + mid * (b - a)
        try:
            p, _ = _project(pm, q, max_shift=seg)
        except TracingError:
            p = q
        al, v = _alignment(pm, p, ker_j)
        if al * align_j > 0:
            lo, p_lo = mid, p
        else:
            hi, p_hi, ker = mid, p, v
    loc = 0.5 * (p_lo + p_hi)
    try:
        loc, _ = _project(pm, loc, max_shift=loc_tol * 10 + 1e-9)
    except TracingError:
        pass
    _, ker = _alignment(pm, loc, ker_j)
    return Cusp(loc, j + 0.5 * (lo + hi), ker)


def local_preimages(pm: PlaneMap, q, center, radius: float, n_start: int = 15) -> np.ndarray:
    """Preimages of q inside the disk of given radius, by multistart Newton."""
    c = np.asarray(center, float)
    g = np.linspace(-radius, radius, n_start)
    X, Y = np.meshgrid(g, g)
    inside = X ** 2 + Y ** 2 <= radius ** 2
    starts = c + np.column_stack([X[inside], Y[inside]])
    P, res, ok = newton_many(pm, q, starts, tol=1e-12 * (1 + np.hypot(*q)))
    P = P[ok]
    P = P[np.hypot(*(P - c).T) < radius]
    sep = 1e-3 * radius
    reps: list[np.ndarray] = []
    for p in P:
        if all(math.hypot(*(p - r)) > sep for r in reps):
            reps.append(p)
    return np.array(reps).reshape(-1, 2)


def cusp_effective_side(pm: PlaneMap, cusp: Cusp, curve: CriticalCurve,
                        eps_list=(1e-4, 1e-5, 1e-6, 1e-7)) -> str:
    """Side of the curve (left/right of travel) carrying the noncritical
    preimage branch of the image curve near the cusp.

    A probe just off the cusp on one side maps into the image wedge and has
    three local preimages; the two besides the probe itself sit on the
    effective side.
    """
    jet = pm.jet(cusp.location)
    g = jet.grad_det
    t = np.array([-g[1], g[0]]) / math.hypot(*g)
    i = int(cusp.curve_index) % len(curve.points)
    if t @ _travel_tangent(curve, i) < 0:
        t = -t
    left = np.array([-t[1], t[0]])
    det_left = int(np.sign(g @ left))
    scale = max(curve.step, 1e-3) * 10
    for eps in eps_list:
        e = eps * scale
        radius = 30.0 * math.sqrt(e * scale) + 10 * e
        found = {}
        for side, sgn in (("left", 1.0), ("right", -1.0)):
            probe = cusp.location + sgn * e * left
            found[side] = (probe, local_preimages(pm, pm(probe), cusp.location, radius))
        counts = {k: len(v[1]) for k, v in found.items()}
        if sorted(counts.values()) != [1, 3]:
            log.debug("ambiguous local counts %s at eps=%g", counts, e)
            continue
        wedge = "left" if counts["left"] == 3 else "right"
        probe, pre = found[wedge]
        extra = pre[np.argsort(np.hypot(*(pre - probe).T))[1:]]
        signs = {int(np.sign(pm.det(p))) for p in extra}
        if len(signs) != 1 or 0 in signs:
            continue
        cusp.local_counts = (counts["left"], counts["right"])
        return "left" if signs.pop() == det_left else "right"
    raise TracingError(f"could not determine effective side of cusp at {cusp.location.tolist()}")


def image_of_curve(pm: PlaneMap, curve) -> Polyline:
    poly = curve.points if isinstance(curve, CriticalCurve) else curve
    return Polyline(pm.image(poly.points), poly.closed)


def _near_existing(tree_pts, p, dist):
    if tree_pts is None:
        return False
    d, _ = tree_pts.query(p)
    return d < dist


def find_critical_curves(pm: PlaneMap, window: Window, grid_n: int = 64, h: Optional[float] = None,
                         with_cusps: bool = True) -> list[CriticalCurve]:
    """Scan, refine, trace and deduplicate all critical components seen in the window."""
    if h is None:
        h = min(window.x1 - window.x0, window.y1 - window.y0) / (4 * grid_n)
    curves: list[CriticalCurve] = []
    tree = None
    for p_plus, p_minus in scan_seeds(pm, window, grid_n):
        try:
            p = refine_critical_point(pm, p_plus, p_minus)
        except (ValueError, TracingError):
            continue
        if _near_existing(tree, p, 2 * h):
            continue
        curve = trace_critical_curve(pm, p, h, window)
        curves.append(curve)
        allpts = np.vstack([c.points.points for c in curves])
        tree = cKDTree(allpts)
    if with_cusps:
        for curve in curves:
            curve.cusps = locate_cusps(pm, curve)
            for cusp in curve.cusps:
                cusp.effective_side = cusp_effective_side(pm, cusp, curve)
    return curves
