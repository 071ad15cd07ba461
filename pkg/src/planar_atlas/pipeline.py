"""End-to-end analysis: trace, cusps, images, flower, preimages, checks."""

from __future__ import annotations

import datetime
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .checks import NOTE, brute_force_preimages, standard_checks
from .continuation import build_flower, solve_preimages
from .critical import ALIGN_TOL, GRAD_TOL, LOC_TOL, TracingError, Window, find_critical_curves, image_of_curve
from .mapdef import BUILTIN_SOURCES, PlaneMap, builtin_map, parse_map
from .report import AnalysisReport

log = logging.getLogger(__name__)

DEFAULT_WINDOWS = {"F0": 3.0, "F1": 2.0, "F2": 3.0, "F3": 10.0}
DEFAULT_GRIDS = {"F3": 96}


@dataclass
class PipelineConfig:
    map: str = "builtin:F0"  # builtin:<tag> or expression text
    mode: str = "z"  # z | xy
    window: Optional[tuple] = None
    grid: Optional[int] = None
    step: Optional[float] = None
    tol: float = 1e-9
    targets: list = field(default_factory=lambda: [(0.0, 0.0)])
    flower: bool = False
    checks: bool = True
    annulus: bool = False
    seed_base: Optional[tuple] = None
    base_preimages: Optional[list] = None

    def __post_init__(self):
        if self.mode not in ("z", "xy"):
            raise ValueError("mode must be 'z' or 'xy'")
        if self.window is not None:
            w = Window(*map(float, self.window))
            if not (w.x1 > w.x0 and w.y1 > w.y0):
                raise ValueError("window must satisfy x0 < x1 and y0 < y1")
            self.window = tuple(w)
        if self.grid is not None and self.grid < 4:
            raise ValueError("grid must be at least 4")
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if (self.seed_base is None) != (self.base_preimages is None):
            raise ValueError("seed_base and base_preimages go together")


def load_map(spec: str, mode: str = "z") -> PlaneMap:
    if spec.startswith("builtin:"):
        return builtin_map(spec.split(":", 1)[1])
    return parse_map(spec, "complex-z" if mode == "z" else "real-xy")


def map_from_descriptor(desc: dict) -> PlaneMap:
    """Rebuild the map recorded in a report."""
    name, source = desc["name"], desc["source"]
    if name in BUILTIN_SOURCES and BUILTIN_SOURCES[name][0] == source:
        return builtin_map(name)
    return parse_map(source, desc["mode"], name=name)


def resolve(config: PipelineConfig, pm: PlaneMap) -> tuple[Window, int, float]:
    tag = pm.name if pm.name in BUILTIN_SOURCES else None
    if config.window is not None:
        window = Window(*config.window)
    else:
        window = Window.square(DEFAULT_WINDOWS.get(tag, 4.0))
    grid = config.grid or DEFAULT_GRIDS.get(tag, 64)
    step = config.step or min(window.x1 - window.x0, window.y1 - window.y0) / (4 * grid)
    return window, grid, step


def _image_window(images, window: Window) -> list:
    if not images:
        return list(window)
    pts = np.vstack([im.points for im in images])
    lo, hi = pts.min(0), pts.max(0)
    pad = 0.05 * float(max(hi - lo)) + 1e-9
    return [float(lo[0] - pad), float(lo[1] - pad), float(hi[0] + pad), float(hi[1] + pad)]


def run_pipeline(config: PipelineConfig, pm: Optional[PlaneMap] = None) -> AnalysisReport:
    """Run every stage, recording failures per stage and carrying on where sound."""
    pm = pm or load_map(config.map, config.mode)
    window, grid, step = resolve(config, pm)
    errors, skipped = [], []
    curves = []
    try:
        curves = find_critical_curves(pm, window, grid, h=step)
    except TracingError as exc:
        errors.append({"stage": "trace", "message": str(exc)})
    images = [image_of_curve(pm, c) for c in curves]
    scale = max(window.x1 - window.x0, window.y1 - window.y0)

    base = None
    if config.seed_base is not None:
        base = (np.asarray(config.seed_base, float), [np.asarray(p, float) for p in config.base_preimages])

    flower = None
    if config.flower:
        failures = []
        try:
            flower = [p.to_json() for p in build_flower(pm, curves, base=base, failures=failures,
                                                        oracle_window=window)]
        except Exception as exc:  # recorded, later stages still run
            errors.append({"stage": "flower", "message": f"{type(exc).__name__}: {exc}"})
        for f in failures:
            skipped.append(f"flower arc on curve {f['curve']}: {f['error']}")

    preimages = []
    for q in config.targets:
        try:
            if curves or base is not None:
                ps = solve_preimages(pm, q, curves, base=base, image_curves=images, tol_rel=config.tol,
                                     oracle_window=window)
            elif pm.infinity_hint is not None:
                ps = solve_preimages(pm, q, curves, tol_rel=config.tol)
            else:
                ps = brute_force_preimages(pm, q, window)
            preimages.append(ps.to_json())
        except Exception as exc:
            errors.append({"stage": "preimages", "message": f"target {list(q)}: {type(exc).__name__}: {exc}"})

    checks = []
    if config.checks:
        try:
            reports, notes = standard_checks(pm, curves, annulus=config.annulus, window=window)
            checks = [r.to_json() for r in reports]
            skipped.extend(notes)
        except Exception as exc:
            errors.append({"stage": "checks", "message": f"{type(exc).__name__}: {exc}"})

    data = {
        "tool": {"name": "planar-atlas", "version": __version__},
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "map": pm.describe(),
        "settings": {"window": list(window), "grid": grid, "step": step, "tol": config.tol,
                     "targets": [list(map(float, q)) for q in config.targets], "flower": config.flower,
                     "checks": config.checks, "annulus": config.annulus,
                     "seed_base": None if config.seed_base is None else list(map(float, config.seed_base)),
                     "base_preimages": None if config.base_preimages is None
                     else [list(map(float, p)) for p in config.base_preimages]},
        "tolerances": {"newton": config.tol, "trace": 1e-9, "gradient": GRAD_TOL, "alignment": ALIGN_TOL,
                       "cusp_location": LOC_TOL, "cusp_guard": 1e-3, "dedup": 1e-6 * scale},
        "curves": len(curves),
        "cusps": sum(len(c.cusps) for c in curves),
        "critical_curves": [c.to_json() for c in curves],
        "image_curves": [im.to_json() for im in images],
        "image_window": _image_window(images, window),
        "flower": flower,
        "preimages": preimages,
        "checks": checks,
        "skipped": skipped,
        "errors": errors,
        "note": NOTE,
    }
    return AnalysisReport(data).validate()
