"""Discrete planar geometry: argument accumulation, winding and rotation
numbers, polyline intersections, offsets and circle sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

# consecutive vectors must subtend less than this unsigned angle
MAX_TURN = math.pi - 0.1
MIN_NORM = 1e-14


class UnderSampledError(ValueError):
    """Consecutive samples turn too sharply to track the argument reliably."""


class GeometryError(ValueError):
    pass


class Polyline:
    """Ordered vertices, optionally closed (closure implicit, not stored)."""

    __slots__ = ("points", "closed")

    def __init__(self, points, closed: bool = False):
        pts = np.array(points, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(pts)):
            raise GeometryError("polyline vertices must be finite")
        if len(pts) > 1:
            keep = np.ones(len(pts), bool)
            last = pts[0]
            for i in range(1, len(pts)):
                if np.hypot(*(pts[i] - last)) <= 1e-12:
                    keep[i] = False
                else:
                    last = pts[i]
            pts = pts[keep]
            if closed and len(pts) > 1 and np.hypot(*(pts[-1] - pts[0])) <= 1e-12:
                pts = pts[:-1]
        if len(pts) < 2:
            raise GeometryError("a polyline needs at least two distinct points")
        self.points = pts
        self.closed = bool(closed)

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f"Polyline(<{len(self.points)} points>, closed={self.closed})"

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        a = self.points
        if self.closed:
            return a, np.roll(a, -1, axis=0)
        return a[:-1], a[1:]

    def reversed(self) -> "Polyline":
        return Polyline(self.points[::-1], self.closed)

    def length(self) -> float:
        a, b = self.segments()
        return float(np.sum(np.hypot(*(b - a).T)))

    def signed_area(self) -> float:
        x, y = self.points.T
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def to_json(self) -> dict:
        return {"points": self.points.tolist(), "closed": self.closed}

    @classmethod
    def from_json(cls, data) -> "Polyline":
        return cls(data["points"], data["closed"])


@dataclass(frozen=True)
class SweepResult:
    total_angle: float
    turns: float


def angle_sweep(vectors) -> SweepResult:
    """Accumulated signed angle along a sequence of nonzero vectors."""
    v = np.asarray(vectors, dtype=float).reshape(-1, 2)
    norms = np.hypot(v[:, 0], v[:, 1])
    if np.any(norms <= MIN_NORM):
        raise GeometryError(f"zero vector at index {int(np.argmax(norms <= MIN_NORM))}")
    a, b = v[:-1], v[1:]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = np.einsum("ij,ij->i", a, b)
    steps = np.arctan2(cross, dot)
    bad = np.abs(steps) >= MAX_TURN
    if np.any(bad):
        i = int(np.argmax(bad))
        raise UnderSampledError(f"turn of {abs(steps[i]):.3f} rad between samples {i} and {i + 1}; refine")
    total = float(np.sum(steps))
    return SweepResult(total, total / (2 * math.pi))


def _integer_turns(sweep: SweepResult) -> int:
    k = round(sweep.turns)
    if abs(sweep.turns - k) >= 0.05:
        raise UnderSampledError(f"closed sweep gave {sweep.turns:.4f} turns")
    return int(k)


def point_segment_distance(p, a, b) -> np.ndarray:
    """Distance from point(s) ``p`` (k,2) to each segment (n,2)-(n,2); shape (k, n)."""
    p = np.asarray(p, float).reshape(-1, 1, 2)
    d = b - a
    L2 = np.einsum("ij,ij->i", d, d)
    t = np.einsum("kij,ij->ki", p - a, d) / np.where(L2 > 0, L2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * d
    return np.hypot(*(p - proj).transpose(2, 0, 1))


def distance_to_polyline(points, curve: Polyline, chunk: int = 256) -> np.ndarray:
    pts = np.asarray(points, float).reshape(-1, 2)
    a, b = curve.segments()
    if len(pts) * len(a) <= 200_000:
        out = np.empty(len(pts))
        for s in range(0, len(pts), chunk):
            out[s:s + chunk] = point_segment_distance(pts[s:s + chunk], a, b).min(axis=1)
        return out
    # prune with a tree on midpoints: the nearest midpoint bounds the answer
    mid = 0.5 * (a + b)
    half = 0.5 * float(np.hypot(*(b - a).T).max())
    tree = cKDTree(mid)
    r0, _ = tree.query(pts)
    cand = tree.query_ball_point(pts, r0 + 2 * half + 1e-12)
    lens = np.fromiter((len(c) for c in cand), int, len(pts))
    ii = np.repeat(np.arange(len(pts)), lens)
    jj = np.fromiter((j for c in cand for j in c), int, int(lens.sum()))
    d = b[jj] - a[jj]
    L2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", pts[ii] - a[jj], d) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    dist = np.hypot(*(pts[ii] - a[jj] - t[:, None] * d).T)
    out = np.full(len(pts), np.inf)
    np.minimum.at(out, ii, dist)
    return out


def winding_number(curve: Polyline, p) -> int:
    if not curve.closed:
        raise GeometryError("winding number needs a closed curve")
    p = np.asarray(p, float)
    if distance_to_polyline(p, curve)[0] <= 1e-9:
        raise GeometryError("point lies on the curve")
    v = curve.points - p
    return _integer_turns(angle_sweep(np.vstack([v, v[:1]])))


def contains(curve: Polyline, points) -> np.ndarray:
    """Vectorized nonzero-winding point-in-polygon test."""
    pts = np.asarray(points, float).reshape(-1, 2)
    out = np.zeros(len(pts), bool)
    lo, hi = curve.points.min(axis=0), curve.points.max(axis=0)
    inbox = np.flatnonzero(np.all((pts >= lo) & (pts <= hi), axis=1))
    if len(inbox) == 0:
        return out
    a, b = curve.segments()
    for s in range(0, len(inbox), 512):
        idx = inbox[s:s + 512]
        px = pts[idx, 0][:, None]
        py = pts[idx, 1][:, None]
        is_left = (b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (px - a[:, 0]) * (b[:, 1] - a[:, 1])
        up = (a[:, 1] <= py) & (b[:, 1] > py) & (is_left > 0)
        down = (a[:, 1] > py) & (b[:, 1] <= py) & (is_left < 0)
        out[idx] = (up.sum(axis=1) - down.sum(axis=1)) != 0
    return out


def rotation_number(curve: Polyline) -> int:
    """Winding number of the secant-tangent sequence around the origin."""
    if not curve.closed:
        raise GeometryError("rotation number needs a closed curve")
    if len(curve) < 8:
        raise GeometryError("rotation number needs at least 8 samples")
    a, b = curve.segments()
    t = b - a
    return _integer_turns(angle_sweep(np.vstack([t, t[:1]])))


class SegmentCrossing(NamedTuple):
    point: np.ndarray
    i: int
    j: int
    s: float  # parameter along segment i
    t: float  # parameter along segment j
    degenerate: bool


def _candidate_pairs(a1, b1, a2, b2):
    m1 = 0.5 * (a1 + b1)
    m2 = 0.5 * (a2 + b2)
    r1 = 0.5 * np.hypot(*(b1 - a1).T)
    r2 = 0.5 * np.hypot(*(b2 - a2).T)
    radius = float(r1.max() + r2.max()) * 1.0001 + 1e-12
    t1, t2 = cKDTree(m1), cKDTree(m2)
    pairs = t1.query_ball_tree(t2, radius)
    ii = np.fromiter((i for i, js in enumerate(pairs) for _ in js), dtype=int)
    jj = np.fromiter((j for js in pairs for j in js), dtype=int)
    return ii, jj


def _intersect(a1, b1, a2, b2, ii, jj, parallel_tol=1e-12):
    p, r = a1[ii], b1[ii] - a1[ii]
    q, s = a2[jj], b2[jj] - a2[jj]
    denom = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    qp = q - p
    scale = np.hypot(*r.T) * np.hypot(*s.T)
    degenerate = np.abs(denom) <= parallel_tol * scale
    safe = np.where(degenerate, 1.0, denom)
    u = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / safe
    v = (qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]) / safe
    hit = ~degenerate & (u >= 0) & (u < 1) & (v >= 0) & (v < 1)
    # collinear overlaps
    coll = degenerate & (np.abs(qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]) <= parallel_tol * scale + 1e-18)
    if np.any(coll):
        rr = np.einsum("ij,ij->i", r, r)
        t0 = np.einsum("ij,ij->i", qp, r) / np.where(rr > 0, rr, 1)
        t1 = t0 + np.einsum("ij,ij->i", s, r) / np.where(rr > 0, rr, 1)
        lo, hi = np.minimum(t0, t1), np.maximum(t0, t1)
        coll &= (hi >= 0) & (lo <= 1)
        u = np.where(coll, np.clip(lo, 0, 1), u)
        v = np.where(coll, 0.0, v)
    keep = hit | coll
    pts = p + u[:, None] * r
    return [SegmentCrossing(pts[k], int(ii[k]), int(jj[k]), float(u[k]), float(v[k]), bool(coll[k]))
            for k in np.flatnonzero(keep)]


def crossings(first: Polyline, second: Polyline) -> list[SegmentCrossing]:
    """All crossings between segments of two polylines, ordered along ``first``."""
    a1, b1 = first.segments()
    a2, b2 = second.segments()
    ii, jj = _candidate_pairs(a1, b1, a2, b2)
    out = _intersect(a1, b1, a2, b2, ii, jj)
    return sorted(out, key=lambda c: (c.i, c.s))


def self_intersections(curve: Polyline) -> list[SegmentCrossing]:
    """Crossings between non-adjacent segments, each reported once (i < j)."""
    a, b = curve.segments()
    n = len(a)
    ii, jj = _candidate_pairs(a, b, a, b)
    sel = jj > ii + 1
    if curve.closed:
        sel &= ~((ii == 0) & (jj == n - 1))
    ii, jj = ii[sel], jj[sel]
    out = _intersect(a, b, a, b, ii, jj)
    return sorted(out, key=lambda c: (c.i, c.s))


def is_simple(curve: Polyline) -> bool:
    return not self_intersections(curve)


def _vertex_normals(pts: np.ndarray, closed: bool) -> np.ndarray:
    if closed:
        prev, nxt = np.roll(pts, 1, axis=0), np.roll(pts, -1, axis=0)
    else:
        prev = np.vstack([pts[:1], pts[:-1]])
        nxt = np.vstack([pts[1:], pts[-1:]])
    t = nxt - prev
    t /= np.hypot(*t.T)[:, None]
    return np.column_stack([-t[:, 1], t[:, 0]])  # left normal


def offset_curve(curve: Polyline, distance: float, side: str = "left", smooth: int = 1) -> Polyline:
    """Displace a curve along its vertex normals.

    ``side`` is ``left``/``right`` of the direction of travel, or, for closed
    curves, ``outer``/``inner`` with respect to the enclosed region.
    """
    if distance <= 0:
        raise GeometryError("offset distance must be positive")
    if side in ("outer", "inner"):
        if not curve.closed:
            raise GeometryError("outer/inner offsets need a closed curve")
        ccw = curve.signed_area() > 0
        side = "right" if (side == "outer") == ccw else "left"
    if side not in ("left", "right"):
        raise GeometryError(f"unknown side {side!r}")
    normals = _vertex_normals(curve.points, curve.closed)
    for _ in range(smooth):
        if curve.closed:
            normals = normals + 0.5 * (np.roll(normals, 1, 0) + np.roll(normals, -1, 0))
        else:
            normals[1:-1] = normals[1:-1] + 0.5 * (normals[:-2] + normals[2:])
        normals /= np.hypot(*normals.T)[:, None]
    sign = 1.0 if side == "left" else -1.0
    moved = curve.points + sign * distance * normals
    a, b = curve.segments()
    ma, mb = (moved, np.roll(moved, -1, 0)) if curve.closed else (moved[:-1], moved[1:])
    if np.any(np.einsum("ij,ij->i", b - a, mb - ma) <= 0):
        raise GeometryError(f"offset at distance {distance} folds back on itself; use a smaller distance")
    out = Polyline(moved, curve.closed)
    if self_intersections(out):
        raise GeometryError(f"offset at distance {distance} self-intersects; use a smaller distance")
    return out


def sample_circle(center, radius: float, n: int) -> Polyline:
    if radius <= 0:
        raise GeometryError("radius must be positive")
    if n < 4:
        raise GeometryError("need at least 4 samples")
    c = np.asarray(center, float)
    th = 2 * np.pi * np.arange(n) / n
    pts = c + radius * np.column_stack([np.cos(th), np.sin(th)])
    return Polyline(np.round(pts, 15), closed=True)


def resample_closed(curve: Polyline, factor: int = 2) -> Polyline:
    """Insert ``factor - 1`` midpoints per segment (used by refinement checks)."""
    a, b = curve.segments()
    parts = [a + (b - a) * (k / factor) for k in range(factor)]
    pts = np.stack(parts, axis=1).reshape(-1, 2)
    if not curve.closed:
        pts = np.vstack([pts, curve.points[-1:]])
    return Polyline(pts, curve.closed)
