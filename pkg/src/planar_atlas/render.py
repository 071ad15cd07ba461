"""Deterministic SVG figures from analysis reports."""

from __future__ import annotations

from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .geometry import Polyline, UnderSampledError, rotation_number, sample_circle
from .report import AnalysisReport

FIGURES = ("critical", "image", "flower", "paths", "circles")
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]
SIZE = 640


class RenderError(ValueError):
    pass


def _fmt(v: float) -> str:
    s = f"{v:.6g}"
    return "0" if s == "-0" else s


class _Canvas:
    """y-up world coordinates mapped onto a fixed SVG viewBox."""

    def __init__(self, window: Sequence[float], title: str):
        x0, y0, x1, y1 = map(float, window)
        self.window = (x0, y0, x1, y1)
        self.scale = max(x1 - x0, y1 - y0)
        self.title = title
        self.items: list[str] = []

    def xy(self, p) -> str:
        return f"{_fmt(p[0])},{_fmt(-p[1])}"

    def axes(self):
        x0, y0, x1, y1 = self.window
        style = f'stroke="#999" stroke-width="{_fmt(0.002 * self.scale)}"'
        if x0 <= 0 <= x1:
            self.items.append(f'<line x1="0" y1="{_fmt(-y0)}" x2="0" y2="{_fmt(-y1)}" {style}/>')
        if y0 <= 0 <= y1:
            self.items.append(f'<line x1="{_fmt(x0)}" y1="0" x2="{_fmt(x1)}" y2="0" {style}/>')

    def polyline(self, pts, closed: bool, color: str, width: float = 0.003, cls: str = "curve"):
        pts = np.asarray(pts, float)
        if len(pts) < 2:
            return
        d = "M" + " L".join(self.xy(p) for p in pts) + (" Z" if closed else "")
        self.items.append(f'<path class="{cls}" d="{d}" fill="none" stroke="{color}" '
                          f'stroke-width="{_fmt(width * self.scale)}"/>')

    def marker(self, p, label: str, color: str = "#000"):
        r = _fmt(0.006 * self.scale)
        self.items.append(f'<circle class="cusp" cx="{_fmt(p[0])}" cy="{_fmt(-p[1])}" r="{r}" fill="{color}"/>')
        self.text((p[0] + 0.01 * self.scale, p[1] + 0.01 * self.scale), label)

    def text(self, p, label: str):
        fs = _fmt(0.025 * self.scale)
        self.items.append(f'<text x="{_fmt(p[0])}" y="{_fmt(-p[1])}" font-size="{fs}" '
                          f'font-family="sans-serif">{escape(label)}</text>')

    def svg(self) -> str:
        x0, y0, x1, y1 = self.window
        vb = f"{_fmt(x0)} {_fmt(-y1)} {_fmt(x1 - x0)} {_fmt(y1 - y0)}"
        h = int(round(SIZE * (y1 - y0) / (x1 - x0)))
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{h}" viewBox="{vb}">\n'
                f"<title>{escape(self.title)}</title>\n")
        return head + "\n".join(self.items) + "\n</svg>\n"


def _critical(report, canvas):
    for i, c in enumerate(report["critical_curves"]):
        canvas.polyline(c["points"], c["closed"], PALETTE[i % len(PALETTE)])
    k = 0
    for c in report["critical_curves"]:
        for cusp in c["cusp_list"]:
            k += 1
            canvas.marker(cusp["location"], f"c{k}")


def _image(report, canvas):
    from .pipeline import map_from_descriptor

    pm = None
    for i, c in enumerate(report["image_curves"]):
        canvas.polyline(c["points"], c["closed"], PALETTE[i % len(PALETTE)])
    k = 0
    for c in report["critical_curves"]:
        for cusp in c["cusp_list"]:
            pm = pm or map_from_descriptor(report["map"])
            k += 1
            canvas.marker(pm(np.array(cusp["location"])), f"c{k}")


def render_svg(report: AnalysisReport, figure: str, radii: Optional[Sequence[float]] = None) -> str:
    """Standalone SVG of one layer of a report.

    Domain figures use the analysis window as viewBox; image figures use the
    recorded image window.
    """
    if figure not in FIGURES:
        raise RenderError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    name = report["map"]["name"]
    if figure == "critical":
        canvas = _Canvas(report["settings"]["window"], f"{name}: critical curves")
        canvas.axes()
        _critical(report, canvas)
    elif figure == "image":
        canvas = _Canvas(report["image_window"], f"{name}: images of the critical curves")
        canvas.axes()
        _image(report, canvas)
    elif figure == "flower":
        if report["flower"] is None:
            raise RenderError("report has no flower layer (run with the flower stage enabled)")
        canvas = _Canvas(report["settings"]["window"], f"{name}: flower")
        canvas.axes()
        ncrit = len(report["critical_curves"])
        for i, c in enumerate(report["flower"]):
            canvas.polyline(c["points"], c["closed"], "#d62728" if i < ncrit else "#1f77b4",
                            0.004 if i < ncrit else 0.002)
    elif figure == "paths":
        if not report["preimages"]:
            raise RenderError("report has no preimage layer")
        canvas = _Canvas(report["settings"]["window"], f"{name}: preimage paths")
        canvas.axes()
        for c in report["critical_curves"]:
            canvas.polyline(c["points"], c["closed"], "#bbbbbb")
        for ps in report["preimages"]:
            for path in ps["paths"]:
                canvas.polyline(path["points"], False, PALETTE[path["id"] % len(PALETTE)], 0.002, "path")
            for j, p in enumerate(ps["points"]):
                canvas.marker(p, f"p{j + 1}", "#000")
    else:
        from .pipeline import map_from_descriptor

        radii = list(radii or (0.1, 1.0, 10.0))
        pm = map_from_descriptor(report["map"])
        images, labels = [], []
        for r in radii:
            img = Polyline(pm.image(sample_circle((0.0, 0.0), r, 2048).points), closed=True)
            try:
                rot = str(rotation_number(img))
            except UnderSampledError:
                rot = "?"
            images.append(img)
            labels.append(f"r={_fmt(r)}: rotation {rot}")
        pts = np.vstack([im.points for im in images])
        lo, hi = pts.min(0), pts.max(0)
        pad = 0.05 * float(max(hi - lo))
        canvas = _Canvas([lo[0] - pad, lo[1] - pad, hi[0] + pad, hi[1] + pad], f"{name}: images of circles")
        canvas.axes()
        for i, (img, lab) in enumerate(zip(images, labels)):
            canvas.polyline(img.points, True, PALETTE[i % len(PALETTE)])
            top = img.points[np.argmax(img.points[:, 1])]
            canvas.text(top, lab)
    return canvas.svg()
