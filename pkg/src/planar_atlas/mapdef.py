"""Plane maps with exact first and second derivatives.

A :class:`PlaneMap` is built from an expression (see :mod:`planar_atlas.expr`),
differentiated symbolically and compiled into scalar and vectorized
evaluators.  Built-in maps ``F0`` .. ``F3`` are provided by :func:`builtin_map`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import sympy as sp

from .expr import BinOp, Call, Neg, Node, Num, Pow, Var, free_variables, parse_expression, to_source


class MapEvaluationError(ArithmeticError):
    """Evaluation produced a non-finite value (pole or overflow)."""


@dataclass(frozen=True)
class InfinityHint:
    """``F(z) ~ coefficient * z**degree`` for large ``|z|``."""

    degree: int
    coefficient: complex = 1.0

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be a positive integer")


@dataclass(frozen=True)
class Jet2:
    value: np.ndarray
    jacobian: np.ndarray
    hessians: np.ndarray  # hessians[k] is the Hessian of component k

    @property
    def det(self) -> float:
        J = self.jacobian
        return float(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])

    @property
    def grad_det(self) -> np.ndarray:
        # Jacobi's formula: d(det J) = tr(adj(J) dJ)
        (a, b), (c, d) = self.jacobian
        H1, H2 = self.hessians
        gx = H1[0, 0] * d + a * H2[1, 0] - H1[1, 0] * c - b * H2[0, 0]
        gy = H1[0, 1] * d + a * H2[1, 1] - H1[1, 1] * c - b * H2[0, 1]
        return np.array([gx, gy])


_X, _Y = sp.symbols("x y", real=True)


def _to_sympy(node: Node, complex_mode: bool):
    if isinstance(node, Num):
        return sp.Rational(node.text) if "e" not in node.text.lower() else sp.nsimplify(float(node.text), rational=True)
    if isinstance(node, Var):
        if node.name == "x":
            return _X
        if node.name == "y":
            return _Y
        if not complex_mode:
            raise ValueError(f"variable {node.name!r} is only available in complex-z mode")
        return _X + sp.I * _Y if node.name == "z" else _X - sp.I * _Y
    if isinstance(node, Neg):
        return -_to_sympy(node.operand, complex_mode)
    if isinstance(node, Pow):
        return _to_sympy(node.base, complex_mode) ** node.exponent
    if isinstance(node, Call):
        return getattr(sp, node.func)(_to_sympy(node.arg, complex_mode))
    if isinstance(node, BinOp):
        left = _to_sympy(node.left, complex_mode)
        right = _to_sympy(node.right, complex_mode)
        return {"+": left + right, "-": left - right, "*": left * right, "/": left / right}[node.op]
    raise TypeError(node)


def _infer_infinity_hint(node: Node) -> Optional[InfinityHint]:
    """Dominant monomial of a polynomial in z and zbar, if it is a pure z**n."""
    if free_variables(node) - {"z", "zbar"}:
        return None
    Z, W = sp.symbols("Z W")

    def conv(n):
        if isinstance(n, Num):
            return _to_sympy(n, True)
        if isinstance(n, Var):
            return Z if n.name == "z" else W
        if isinstance(n, Neg):
            return -conv(n.operand)
        if isinstance(n, Pow):
            return conv(n.base) ** n.exponent
        if isinstance(n, BinOp):
            l, r = conv(n.left), conv(n.right)
            return {"+": l + r, "-": l - r, "*": l * r, "/": l / r}[n.op]
        raise ValueError("not polynomial")

    try:
        poly = sp.Poly(sp.expand(conv(node)), Z, W)
    except (ValueError, sp.PolynomialError):
        return None
    terms = poly.terms()
    if not terms:
        return None
    top = max(i + j for (i, j), _ in terms)
    leading = [(m, c) for m, c in terms if sum(m) == top]
    if top < 1 or len(leading) != 1 or leading[0][0] != (top, 0):
        return None
    return InfinityHint(top, complex(leading[0][1]))


class PlaneMap:
    """A smooth map of the plane with closed-form F, DF and D^2F.

    Instances are immutable; all evaluation methods are pure.
    """

    def __init__(self, name: str, source: str, mode: str, components, *,
                 infinity_hint: Optional[InfinityHint] = None,
                 derivative_method: str = "symbolic",
                 tree: Optional[Node] = None):
        self.name = name
        self.source = source
        self.mode = mode
        self.infinity_hint = infinity_hint
        self.derivative_method = derivative_method
        self.tree = tree
        self._compile(components)

    def _compile(self, components):
        f1, f2 = components
        self.components = (f1, f2)
        jac = [sp.diff(f, v) for f in (f1, f2) for v in (_X, _Y)]
        hess = [sp.diff(f, a, b) for f in (f1, f2) for a, b in ((_X, _X), (_X, _Y), (_Y, _Y))]
        args = [_X, _Y]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            self._f_s = sp.lambdify(args, [f1, f2], modules="math", cse=True)
            self._fj_s = sp.lambdify(args, [f1, f2] + jac, modules="math", cse=True)
            self._jet_s = sp.lambdify(args, [f1, f2] + jac + hess, modules="math", cse=True)
            self._f_v = sp.lambdify(args, [f1, f2], modules="numpy", cse=True)
            self._fj_v = sp.lambdify(args, [f1, f2] + jac, modules="numpy", cse=True)
            self._jet_v = sp.lambdify(args, [f1, f2] + jac + hess, modules="numpy", cse=True)

    def __repr__(self):
        return f"PlaneMap({self.name!r}, {self.source!r}, mode={self.mode!r})"

    # scalar evaluation -------------------------------------------------
    def _scalar(self, fn, p):
        x, y = float(p[0]), float(p[1])
        try:
            out = fn(x, y)
        except (ZeroDivisionError, OverflowError, ValueError) as exc:
            raise MapEvaluationError(f"{self.name}: evaluation failed at ({x}, {y}): {exc}") from exc
        out = np.array(out, dtype=float)
        if not np.all(np.isfinite(out)):
            raise MapEvaluationError(f"{self.name}: non-finite value at ({x}, {y})")
        return out

    def __call__(self, p) -> np.ndarray:
        return self._scalar(self._f_s, p)

    def value_and_jacobian(self, p):
        out = self._scalar(self._fj_s, p)
        return out[:2], out[2:].reshape(2, 2)

    def jacobian(self, p) -> np.ndarray:
        return self.value_and_jacobian(p)[1]

    def jet(self, p) -> Jet2:
        out = self._scalar(self._jet_s, p)
        h = out[6:]
        hess = np.array([[[h[0], h[1]], [h[1], h[2]]], [[h[3], h[4]], [h[4], h[5]]]])
        return Jet2(out[:2], out[2:6].reshape(2, 2), hess)

    def det(self, p) -> float:
        J = self.jacobian(p)
        return float(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])

    def grad_det(self, p) -> np.ndarray:
        return self.jet(p).grad_det

    # vectorized evaluation ----------------------------------------------
    def _vector(self, fn, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        with np.errstate(all="ignore"):
            out = fn(x, y)
        return np.stack([np.broadcast_to(np.asarray(o, dtype=float), x.shape) for o in out])

    def evaluate(self, x, y) -> np.ndarray:
        """F on arrays; returns shape ``(2, *x.shape)``."""
        return self._vector(self._f_v, x, y)

    def evaluate_with_jacobian(self, x, y):
        out = self._vector(self._fj_v, x, y)
        return out[:2], out[2:]

    def det_many(self, x, y) -> np.ndarray:
        out = self._vector(self._fj_v, x, y)
        return out[2] * out[5] - out[3] * out[4]

    def image(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return self.evaluate(pts[:, 0], pts[:, 1]).T

    def describe(self) -> dict:
        hint = None
        if self.infinity_hint is not None:
            c = complex(self.infinity_hint.coefficient)
            hint = {"degree": self.infinity_hint.degree, "coefficient": [c.real, c.imag]}
        return {"name": self.name, "source": self.source, "mode": self.mode,
                "derivatives": self.derivative_method, "infinity_hint": hint}


class BlackBoxMap(PlaneMap):
    """Externally supplied callable; derivatives by central differences (flagged)."""

    def __init__(self, name: str, func: Callable, h1: float = 1e-6, h2: float = 1e-4,
                 infinity_hint: Optional[InfinityHint] = None):
        self.name = name
        self.source = "<callable>"
        self.mode = "black-box"
        self.infinity_hint = infinity_hint
        self.derivative_method = "finite-difference"
        self.tree = None
        self._func = func
        self._h1, self._h2 = h1, h2

    def __call__(self, p):
        out = np.asarray(self._func(float(p[0]), float(p[1])), dtype=float)
        if not np.all(np.isfinite(out)):
            raise MapEvaluationError(f"{self.name}: non-finite value at {tuple(p)}")
        return out

    def _fd_jac(self, p, h):
        p = np.asarray(p, dtype=float)
        e = np.eye(2) * h
        return np.column_stack([(self(p + e[k]) - self(p - e[k])) / (2 * h) for k in range(2)])

    def value_and_jacobian(self, p):
        return self(p), self._fd_jac(p, self._h1)

    def jet(self, p):
        p = np.asarray(p, dtype=float)
        h = self._h2
        e = np.eye(2) * h
        cols = [(self._fd_jac(p + e[k], self._h1) - self._fd_jac(p - e[k], self._h1)) / (2 * h) for k in range(2)]
        # cols[k][i, j] = d2 F_i / dx_j dx_k
        hess = np.array([[[cols[k][i, j] for k in range(2)] for j in range(2)] for i in range(2)])
        hess = 0.5 * (hess + hess.transpose(0, 2, 1))
        return Jet2(self(p), self._fd_jac(p, self._h1), hess)

    def _vector(self, fn, x, y):
        raise NotImplementedError

    def evaluate(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        out = np.empty((2,) + x.shape)
        for idx in np.ndindex(x.shape):
            out[(slice(None),) + idx] = self._func(float(x[idx]), float(y[idx]))
        return out

    def evaluate_with_jacobian(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        val = np.empty((2,) + x.shape)
        jac = np.empty((4,) + x.shape)
        for idx in np.ndindex(x.shape):
            v, J = self.value_and_jacobian((x[idx], y[idx]))
            val[(slice(None),) + idx] = v
            jac[(slice(None),) + idx] = J.ravel()
        return val, jac

    def det_many(self, x, y):
        _, jac = self.evaluate_with_jacobian(x, y)
        return jac[0] * jac[3] - jac[1] * jac[2]


def parse_map(source: str, mode: str = "complex-z", name: Optional[str] = None,
              infinity_hint: Optional[InfinityHint] = None) -> PlaneMap:
    """Build a :class:`PlaneMap` from expression text.

    In ``complex-z`` mode the source is expanded into real and imaginary
    parts; an infinity hint is inferred for complex polynomials whose unique
    top-degree monomial is a pure power of ``z``.
    """
    tree = parse_expression(source, mode)
    if mode == "real-xy":
        bad = free_variables(tree) & {"z", "zbar"}
        if bad:
            raise ValueError(f"variables {sorted(bad)} require complex-z mode")
        components = (sp.expand(_to_sympy(tree.first, False)), sp.expand(_to_sympy(tree.second, False)))
    else:
        expr = sp.expand_complex(sp.expand(_to_sympy(tree, True)))
        components = (sp.expand(sp.re(expr)), sp.expand(sp.im(expr)))
        if infinity_hint is None:
            infinity_hint = _infer_infinity_hint(tree)
    pm = PlaneMap(name or source, source, mode, components, infinity_hint=infinity_hint, tree=tree)
    if infinity_hint is not None:
        validate_infinity_hint(pm)
    return pm


def pretty(pm: PlaneMap) -> str:
    """Canonical source text of a parsed map."""
    return to_source(pm.tree)


def validate_infinity_hint(pm: PlaneMap, radius: float = 1e6, rays: int = 16, tol: float = 1e-3) -> float:
    """Check ``|F(z) - c z^n| / |z|^n`` is small along ``rays`` directions at ``radius``."""
    hint = pm.infinity_hint
    theta = 2 * np.pi * (np.arange(rays) + 0.25) / rays
    z = radius * np.exp(1j * theta)
    worst = 0.0
    for zk in z:
        fz = pm((zk.real, zk.imag))
        dominant = hint.coefficient * zk ** hint.degree
        worst = max(worst, abs(complex(*fz) - dominant) / abs(zk) ** hint.degree)
    if worst > tol:
        raise ValueError(f"infinity hint z^{hint.degree} does not dominate {pm.name} (relative error {worst:.3g})")
    return worst


BUILTIN_SOURCES = {
    "F0": ("z^3 + 2.5*zbar^2 + z", "complex-z", InfinityHint(3, 1.0)),
    "F1": ("z^7 + zbar^4 + z", "complex-z", InfinityHint(7, 1.0)),
    "F2": ("(x, y^3/3 + (x^2 - 1)*y)", "real-xy", None),
    "F3": ("(x^2 - y^2 + 20*sin(x), 2*x*y + 20*cos(y))", "real-xy", InfinityHint(2, 1.0)),
}


def builtin_map(tag: str) -> PlaneMap:
    if tag not in BUILTIN_SOURCES:
        raise KeyError(f"unknown builtin map {tag!r}; expected one of {sorted(BUILTIN_SOURCES)}")
    source, mode, hint = BUILTIN_SOURCES[tag]
    pm = parse_map(source, mode, name=tag, infinity_hint=hint)
    return pm


def eval_jet(pm: PlaneMap, p) -> Jet2:
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("point must be finite")
    return pm.jet(p)
