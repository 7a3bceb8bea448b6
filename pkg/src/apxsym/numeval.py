"""Floating-point evaluation of symbolic expressions.

The evaluator walks a sympy tree once with numpy arrays, so a single call
evaluates an expression at every sample or grid point.  Two special kernels
are implemented here directly: the Gauss hypergeometric function and the
imaginary error function.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef

__all__ = [
    "DomainError",
    "UnsupportedRegionError",
    "EvalContext",
    "evaluate",
    "eval_expr",
    "hyp2f1",
    "hyp2f1_series",
    "erfi",
    "grid_emit",
    "grid_values",
    "svg_heatmap",
    "threads",
]

MAX_TERMS = 100_000
SERIES_TOL = 1e-16
ERFI_MAX_ARG = 12.0
TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


class DomainError(ValueError):
    """An argument left the domain of a kernel (log of a negative, ...)."""


class UnsupportedRegionError(DomainError):
    """The requested argument lies outside the implemented region."""


# ---------------------------------------------------------------------------
# special kernels
# ---------------------------------------------------------------------------

def _kahan_series(a, b, c, z):
    """Sum 2F1 term by term; returns (sum, converged mask)."""
    term = np.ones_like(z)
    total = np.ones_like(z)
    comp = np.zeros_like(z)
    small_prev = np.zeros(z.shape, dtype=bool)
    done = np.zeros(z.shape, dtype=bool)
    for k in range(MAX_TERMS):
        term = term * ((a + k) * (b + k)) / ((c + k) * (k + 1.0)) * z
        y = np.where(done, 0.0, term) - comp
        s = total + y
        comp = (s - total) - y
        total = s
        small = np.abs(term) <= SERIES_TOL * np.abs(total)
        done = done | (small & small_prev) | (term == 0.0)
        small_prev = small
        if done.all():
            break
    return total, done


def _bad_c(c):
    return (c <= 0) & (np.floor(c) == c)


def _hyp2f1_masked(a, b, c, z):
    """Vectorised 2F1 returning (value, ok mask) instead of raising."""
    a, b, c, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c, z)))
    a, b, c, z = (np.array(v, dtype=float) for v in (a, b, c, z))
    out = np.full(z.shape, np.nan)
    ok = ~_bad_c(c) & np.isfinite(z)
    direct = ok & (np.abs(z) <= 0.5)
    pfaff = ok & (z < -0.5)
    if direct.any():
        val, conv = _kahan_series(a[direct], b[direct], c[direct], z[direct])
        out[direct] = np.where(conv, val, np.nan)
    if pfaff.any():
        zp = z[pfaff]
        w = zp / (zp - 1.0)
        val, conv = _kahan_series(a[pfaff], c[pfaff] - b[pfaff], c[pfaff], w)
        val = (1.0 - zp) ** (-a[pfaff]) * val
        out[pfaff] = np.where(conv, val, np.nan)
    return out, np.isfinite(out)


def hyp2f1_series(a, b, c, z):
    """Plain Maclaurin summation of 2F1, valid for |z| < 1."""
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) >= 1):
        raise UnsupportedRegionError("power series of 2F1 needs |z| < 1")
    a, b, c, z = (np.array(v, dtype=float) for v in np.broadcast_arrays(a, b, c, z))
    val, conv = _kahan_series(a, b, c, z)
    if not conv.all():
        raise UnsupportedRegionError(f"2F1 series did not converge in {MAX_TERMS} terms")
    return val if val.ndim else float(val)


def hyp2f1(a, b, c, z):
    """Gauss hypergeometric function for real arguments.

    Uses the power series for ``|z| <= 0.5`` and the Pfaff transformation
    ``(1-z)**(-a) * 2F1(a, c-b; c; z/(z-1))`` for ``z < -0.5``.  Anything
    else raises :class:`UnsupportedRegionError`.
    """
    scalar = all(np.ndim(v) == 0 for v in (a, b, c, z))
    if np.any(_bad_c(np.asarray(c, dtype=float))):
        raise DomainError("2F1 undefined for non-positive integer c")
    zz = np.asarray(z, dtype=float)
    if np.any((zz > 0.5) | ~np.isfinite(zz)):
        raise UnsupportedRegionError("2F1 is implemented for z <= 0.5 only")
    val, ok = _hyp2f1_masked(a, b, c, z)
    if not ok.all():
        raise UnsupportedRegionError(f"2F1 series did not converge in {MAX_TERMS} terms")
    return float(val) if scalar else val


def _erfi_masked(x):
    x = np.array(x, dtype=float)
    ok = np.abs(x) <= ERFI_MAX_ARG
    xs = np.where(ok, x, 0.0)
    x2 = xs * xs
    power = xs.copy()           # x^(2k+1)/k!
    total = xs.copy()
    comp = np.zeros_like(xs)
    k = 0
    while True:
        k += 1
        power = power * x2 / k
        term = power / (2 * k + 1)
        y = term - comp
        s = total + y
        comp = (s - total) - y
        total = s
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
        if k > MAX_TERMS:
            break
    out = np.where(ok, TWO_OVER_SQRT_PI * total, np.nan)
    return out, ok


def erfi(x):
    """Imaginary error function via its Maclaurin series, ``|x| <= 12``."""
    val, ok = _erfi_masked(x)
    if not ok.all():
        raise DomainError(f"erfi argument beyond |x| <= {ERFI_MAX_ARG} would overflow")
    return float(val) if np.ndim(x) == 0 else val


# ---------------------------------------------------------------------------
# tree evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalContext:
    """Bindings for every free atom plus domain guards.

    ``guards`` are expressions that must evaluate strictly positive;
    ``policy`` is ``"error"`` (raise on any failure) or ``"skip"`` (mark the
    failing samples as NaN).
    """

    bindings: Mapping = field(default_factory=dict)
    guards: Sequence[sp.Expr] = ()
    policy: str = "error"

    def lookup(self, sym):
        if sym in self.bindings:
            return self.bindings[sym]
        name = getattr(sym, "name", None)
        if name in self.bindings:
            return self.bindings[name]
        raise KeyError(f"unbound symbol {sym}")


_UNARY = {
    sp.exp: np.exp,
    sp.sin: np.sin,
    sp.cos: np.cos,
    sp.tan: np.tan,
    sp.sinh: np.sinh,
    sp.cosh: np.cosh,
    sp.tanh: np.tanh,
}


_NODE_TYPES = (AppliedUndef, sp.Derivative, sp.Subs)


class _Walker:
    def __init__(self, ctx: EvalContext, shape):
        self.ctx = ctx
        self.shape = shape
        self.bad = np.zeros(shape, dtype=bool)
        self.maxmag = np.zeros(shape)
        self.memo: dict = {}

    def _flag(self, mask):
        self.bad |= np.broadcast_to(mask, self.shape)

    def run(self, e):
        hit = self.memo.get(e)
        if hit is not None:
            return hit
        with np.errstate(all="ignore"):
            val = self._node(e)
        val = np.broadcast_to(np.asarray(val, dtype=float), self.shape)
        finite = np.isfinite(val)
        self._flag(~finite)
        self.maxmag = np.maximum(self.maxmag, np.where(finite, np.abs(val), 0.0))
        self.memo[e] = val
        return val

    def _node(self, e):
        if e.is_Number or e.is_NumberSymbol:
            if e.is_real is False:
                raise DomainError(f"non-real constant {e}")
            return float(e)
        if e.is_Symbol:
            try:
                return np.asarray(self.ctx.lookup(e), dtype=float)
            except KeyError:
                raise KeyError(f"unbound symbol {e}") from None
        if e.is_Add:
            out = 0.0
            for a in e.args:
                out = out + self.run(a)
            return out
        if e.is_Mul:
            out = 1.0
            for a in e.args:
                out = out * self.run(a)
            return out
        if e.is_Pow:
            base = self.run(e.base)
            ex = e.exp
            if ex.is_Integer:
                n = int(ex)
                if n < 0:
                    self._flag(base == 0.0)
                return base ** float(n)
            if ex.is_Rational:
                self._flag(base < 0)
                if ex < 0:
                    self._flag(base == 0.0)
                return np.abs(base) ** float(ex)
            power = self.run(ex)
            self._flag(base <= 0)
            return np.abs(base) ** power
        if isinstance(e, _NODE_TYPES):
            if e in self.ctx.bindings:
                return np.asarray(self.ctx.bindings[e], dtype=float)
            raise KeyError(f"unbound function node {e}")
        func = e.func
        if func in _UNARY:
            return _UNARY[func](self.run(e.args[0]))
        if func is sp.log:
            arg = self.run(e.args[0])
            self._flag(arg <= 0)
            return np.log(np.abs(arg))
        if func is sp.hyper:
            if len(e.ap) != 2 or len(e.bq) != 1:
                raise NotImplementedError("only 2F1 is supported")
            a, b = (self.run(v) for v in e.ap)
            c = self.run(e.bq[0])
            z = self.run(e.argument)
            val, ok = _hyp2f1_masked(a, b, c, z)
            self._flag(~ok)
            return val
        if func is sp.erfi:
            val, ok = _erfi_masked(self.run(e.args[0]))
            self._flag(~ok)
            return val
        raise NotImplementedError(f"cannot evaluate {func} numerically")


def _shape_of(ctx: EvalContext):
    shapes = [np.shape(v) for v in ctx.bindings.values()]
    return np.broadcast_shapes(*shapes) if shapes else ()


def evaluate(e, ctx: EvalContext, track: bool = False):
    """Evaluate ``e`` for all bindings at once.

    Returns the value array (or float); with ``track=True`` returns
    ``(value, max_intermediate_magnitude, bad_mask)``.
    """
    e = sp.sympify(e)
    shape = _shape_of(ctx)
    walker = _Walker(ctx, shape)
    val = np.array(walker.run(e), dtype=float)
    for g in ctx.guards:
        walker._flag(~(walker.run(sp.sympify(g)) > 0))
    bad = walker.bad
    if ctx.policy == "error" and bad.any():
        idx = np.argwhere(np.atleast_1d(bad))[0]
        raise DomainError(f"domain violation evaluating expression at sample {tuple(idx)}")
    val = np.where(bad, np.nan, val)
    if track:
        return (val if shape else float(val)), walker.maxmag, bad
    return val if shape else float(val)


def eval_expr(e, ctx: EvalContext) -> float:
    """Scalar IEEE-double evaluation."""
    out = evaluate(e, ctx)
    return float(out)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def threads() -> int:
    """Worker count, capped by the APXSYM_THREADS environment variable."""
    raw = os.environ.get("APXSYM_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))


def grid_values(exprs, variables, ranges, steps, ctx: EvalContext):
    """Evaluate expressions on a tensor grid; returns (axes, [arrays]).

    Rows of the first axis are split into chunks evaluated concurrently
    and reassembled in index order, so results do not depend on the
    worker count."""
    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(ranges, steps)]
    mesh = np.meshgrid(*axes, indexing="ij")
    shape = mesh[0].shape
    n_workers = min(threads(), shape[0])
    bounds = np.linspace(0, shape[0], n_workers + 1).astype(int)

    def chunk(lo, hi):
        bindings = dict(ctx.bindings)
        for v, m in zip(variables, mesh):
            bindings[v] = m[lo:hi]
        sub = EvalContext(bindings, ctx.guards, ctx.policy)
        return [np.asarray(evaluate(e, sub), dtype=float) * np.ones(mesh[0][lo:hi].shape) for e in exprs]

    spans = list(zip(bounds[:-1], bounds[1:]))
    if n_workers == 1:
        parts = [chunk(lo, hi) for lo, hi in spans]
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(lambda b: chunk(*b), spans))
    values = [np.concatenate([p[i] for p in parts], axis=0) for i in range(len(exprs))]
    return axes, values


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def grid_emit(exprs, variables, ranges, steps, ctx: EvalContext, names=None) -> str:
    """CSV text: header ``t,x,u`` (one extra column per extra expression),
    rows ordered over the first variable, then the second."""
    exprs = list(exprs)
    if names is None:
        names = ["u"] + [f"e{i}" for i in range(1, len(exprs))]
    axes, values = grid_values(exprs, variables, ranges, steps, ctx)
    header = ",".join([str(v) for v in variables] + list(names))
    lines = [header]
    for i, tv in enumerate(axes[0]):
        for j, xv in enumerate(axes[1]):
            row = [_fmt(tv), _fmt(xv)] + [_fmt(col[i, j]) for col in values]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def svg_heatmap(values: np.ndarray, width: int = 600, height: int = 360) -> str:
    """Row-major rectangles coloured on a linear blue-to-red ramp."""
    values = np.asarray(values, dtype=float)
    nr, nc = values.shape
    lo, hi = np.nanmin(values), np.nanmax(values)
    span = hi - lo if hi > lo else 1.0
    cw, ch = width / nc, height / nr
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    for i in range(nr):
        for j in range(nc):
            s = (values[i, j] - lo) / span
            if not np.isfinite(s):
                s = 0.0
            r, b = int(255 * s), int(255 * (1 - s))
            parts.append(
                f'<rect x="{j * cw:.3f}" y="{(nr - 1 - i) * ch:.3f}" width="{cw:.3f}" '
                f'height="{ch:.3f}" fill="rgb({r},0,{b})"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
