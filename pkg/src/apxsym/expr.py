"""Expression kernel.

Expressions are immutable sympy trees.  This module fixes the canonical
form used throughout the package, the differentiation/substitution entry
points, zero testing (symbolic first, seeded numeric sampling second), and
the deterministic text printer that the problem DSL shares.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef

from . import numeval

__all__ = [
    "Expr",
    "NotAnAtomError",
    "InconclusiveError",
    "Verdict",
    "ZeroTest",
    "Sampler",
    "hyp2f1",
    "erfi",
    "normalize",
    "differentiate",
    "substitute",
    "is_zero",
    "to_text",
    "has_unknown_functions",
    "function_nodes",
    "fprime",
]

Expr = sp.Expr
erfi = sp.erfi

DEFAULT_TOL = 1e-9
DEFAULT_SAMPLES = 25
DEFAULT_DOMAIN = (Fraction(1, 2), Fraction(2))
EXCLUSION_TOL = 1e-2
# cap on operation count for the fraction-clearing zero proof
RATIONAL_PROOF_OPS = 4000


class NotAnAtomError(TypeError):
    pass


class InconclusiveError(RuntimeError):
    """Numeric zero testing could not collect enough valid samples."""


def hyp2f1(a, b, c, z):
    return sp.hyper([a, b], [c], z)


def fprime(func, arg, n: int = 1):
    """``n``-th derivative of a one-argument unknown function at ``arg``."""
    if isinstance(arg, sp.Symbol):
        return sp.Derivative(func(arg), (arg, n))
    xi = sp.Dummy("xi")
    return sp.Subs(sp.Derivative(func(xi), (xi, n)), xi, arg)


# ---------------------------------------------------------------------------
# canonical form
# ---------------------------------------------------------------------------

def _canon_exp_arg(a):
    a = sp.expand(a, power_exp=False, log=False)
    if a.is_polynomial() and not a.has(sp.Function):
        return a
    return sp.cancel(sp.together(a))


def _pass(e):
    e = sp.expand(e, power_exp=False, power_base=False, log=False)
    if e.has(sp.exp):
        e = sp.powsimp(e, combine="exp", deep=True)
        e = e.replace(lambda n: n.func is sp.exp, lambda n: sp.exp(_canon_exp_arg(n.args[0])))
        e = sp.expand(e, power_exp=False, power_base=False, log=False)
    if e.has(sp.log):
        e = e.replace(
            lambda n: n.func is sp.log and n.args[0].func is sp.exp,
            lambda n: n.args[0].args[0],
        )
    return e


def normalize(e) -> sp.Expr:
    """Canonical form: expanded sums of products, exponentials merged with
    their arguments in rational normal form, ``log(exp(a)) -> a``."""
    e = sp.sympify(e)
    for _ in range(6):
        nxt = _pass(e)
        if nxt == e:
            return nxt
        e = nxt
    return e


def differentiate(e, v) -> sp.Expr:
    """Partial derivative treating every other atom as a constant."""
    if not isinstance(v, sp.Symbol):
        raise NotAnAtomError(f"cannot differentiate with respect to non-atom {v}")
    return sp.diff(sp.sympify(e), v)


def substitute(e, bindings: Mapping) -> sp.Expr:
    """Simultaneous replacement of atoms or unknown-function applications."""
    e = sp.sympify(e)
    atoms = {k: sp.sympify(v) for k, v in bindings.items() if isinstance(k, sp.Symbol)}
    calls = {k: sp.sympify(v) for k, v in bindings.items() if not isinstance(k, sp.Symbol)}
    for k in calls:
        if not isinstance(k, AppliedUndef):
            raise NotAnAtomError(f"binding key {k} is neither an atom nor an unknown function")
    if calls:
        e = e.subs(calls, simultaneous=True)
        e = e.replace(lambda n: isinstance(n, sp.Derivative), lambda n: n.doit())
    if atoms:
        e = e.xreplace(atoms)
    return normalize(e)


def has_unknown_functions(e) -> bool:
    return bool(sp.sympify(e).atoms(AppliedUndef))


def function_nodes(e) -> list:
    """Outermost unknown-function applications, derivatives and Subs nodes."""
    out: list = []
    seen = set()
    stack = [sp.sympify(e)]
    while stack:
        n = stack.pop()
        if isinstance(n, (AppliedUndef, sp.Derivative, sp.Subs)):
            if n not in seen:
                seen.add(n)
                out.append(n)
            continue
        stack.extend(n.args)
    return sorted(out, key=sp.default_sort_key)


# ---------------------------------------------------------------------------
# zero testing
# ---------------------------------------------------------------------------

class Verdict(str, enum.Enum):
    PROVED_ZERO = "proved-zero"
    PROVED_NONZERO = "proved-nonzero"
    NUMERICALLY_ZERO = "numerically-zero"
    NUMERICALLY_NONZERO = "numerically-nonzero"

    @property
    def zero(self) -> bool:
        return self in (Verdict.PROVED_ZERO, Verdict.NUMERICALLY_ZERO)


@dataclass
class ZeroTest:
    verdict: Verdict
    samples: int = 0
    tolerance: float = DEFAULT_TOL
    residual: float = 0.0
    witness: dict | None = None

    @property
    def zero(self) -> bool:
        return self.verdict.zero


@dataclass
class Sampler:
    """Seeded generator of dyadic-rational sample points.

    ``domains`` maps symbol names to open intervals; ``guards`` must
    evaluate strictly positive and ``exclusions`` must stay away from zero.
    ``derived`` maps unknown-function nodes to closed forms that are
    evaluated at each point and bound in place of the node.
    """

    domains: Mapping[str, tuple] = field(default_factory=dict)
    guards: Sequence = ()
    exclusions: Sequence = ()
    default: tuple = DEFAULT_DOMAIN
    seed: int = 0
    max_rounds: int = 60
    derived: Mapping = field(default_factory=dict)

    def interval(self, name: str):
        return self.domains.get(name, self.default)

    def draw(self, symbols, n: int, rng) -> dict:
        out = {}
        for s in symbols:
            lo, hi = (float(v) for v in self.interval(s.name))
            m = rng.integers(1, 1024, size=n)
            out[s] = lo + (hi - lo) * m / 1024.0
        return out

    def points(self, e, n: int, extra_symbols=()):
        """Return (bindings arrays, values, maxmag) at ``n`` admissible points."""
        e = sp.sympify(e)
        pieces = [e, *map(sp.sympify, self.guards), *map(sp.sympify, self.exclusions)]
        pieces += [sp.sympify(v) for v in self.derived.values()]
        syms = set(extra_symbols)
        for p in pieces:
            syms |= {s for s in p.free_symbols if s not in self.derived}
        syms = sorted(syms, key=lambda s: s.name)
        rng = np.random.default_rng(self.seed)
        have = {s: np.empty(0) for s in syms}
        vals = np.empty(0)
        mags = np.empty(0)
        for _ in range(self.max_rounds):
            need = n - len(vals)
            if need <= 0:
                break
            batch = max(need * 2, 8)
            pts = self.draw(syms, batch, rng)
            if self.derived:
                base = numeval.EvalContext(pts, policy="skip")
                pts = dict(pts)
                for node, form in self.derived.items():
                    pts[node] = numeval.evaluate(form, base)
            ctx = numeval.EvalContext(pts, tuple(self.guards), policy="skip")
            val, mag, bad = numeval.evaluate(e, ctx, track=True)
            val = np.broadcast_to(val, (batch,))
            mag = np.broadcast_to(mag, (batch,))
            bad = np.broadcast_to(bad, (batch,)).copy()
            for ex in self.exclusions:
                xv = numeval.evaluate(ex, numeval.EvalContext(pts, policy="skip"))
                bad |= ~(np.abs(np.broadcast_to(xv, (batch,))) > EXCLUSION_TOL)
            keep = np.flatnonzero(~bad)[:need]
            for s in syms:
                have[s] = np.concatenate([have[s], np.broadcast_to(pts[s], (batch,))[keep]])
            vals = np.concatenate([vals, val[keep]])
            mags = np.concatenate([mags, mag[keep]])
        if len(vals) < n:
            raise InconclusiveError(
                f"only {len(vals)} of {n} sample points were inside the evaluation domain"
            )
        return have, vals, mags


def _radicand(b):
    """Split ``b = c * B`` with ``c > 0`` rational and ``B`` a canonical
    quotient of expanded primitive polynomials; ``(c*B)**r = c**r * B**r``."""
    n, d = sp.fraction(sp.together(b))
    cn, pn = sp.expand(n).as_content_primitive()
    cd, pd = sp.expand(d).as_content_primitive()
    c = cn / cd
    if c < 0:
        c, pn = -c, -pn
    return c, pn / pd


class _ExpRational:
    """Rewrite an expression as a rational function of fresh symbols.

    Exponentials become integer powers of ``Z_l = exp(B_l / L_l)`` where
    the ``B_l`` form a basis (over the rationals) of all exponent arguments;
    every other transcendental node becomes an opaque symbol.  A rational
    function that vanishes as such vanishes for every value of the symbols,
    so a zero numerator is a proof.
    """

    def __init__(self):
        self.opaque: dict = {}
        self.args: list = []
        self.roots: dict = {}  # (base, q) -> (symbol, scanned base)

    def _atom(self, n):
        if n not in self.opaque:
            self.opaque[n] = sp.Dummy(f"a{len(self.opaque)}")
        return self.opaque[n]

    def scan(self, e):
        if e.is_Atom:
            return e
        if e.is_Add or e.is_Mul:
            return e.func(*[self.scan(a) for a in e.args])
        if e.is_Pow:
            if e.exp.is_Integer:
                return self.scan(e.base) ** e.exp
            if e.base.func is sp.exp:
                return self.scan(sp.exp(e.base.args[0] * e.exp))
            if e.exp.is_Rational:
                content, base = _radicand(e.base)
                if base == 1:
                    return content**e.exp
                key = (base, e.exp.q)
                if key not in self.roots:
                    self.roots[key] = (sp.Dummy(f"r{len(self.roots)}"), self.scan(base))
                return content**e.exp * self.roots[key][0] ** e.exp.p
            return self._atom(e)
        if e.func is sp.exp:
            key = ("exp", len(self.args))
            self.args.append(e.args[0])
            return self._atom(key)
        return self._atom(e)

    def exp_basis(self) -> dict:
        """Map each exponential placeholder to a product of basis powers."""
        if not self.args:
            return {}
        def canon(n):
            c, b = _radicand(n.base)
            return c**n.exp * b**n.exp

        args = [
            a.replace(lambda n: n.is_Pow and n.exp.is_Rational and not n.exp.is_Integer, canon)
            for a in self.args
        ]
        fracs = [sp.fraction(sp.together(a)) for a in args]
        lcm = sp.S.One
        for _, d in fracs:
            lcm = sp.lcm(lcm, d)
        nums = [sp.expand(n * sp.cancel(lcm / d)) for n, d in fracs]
        dicts = [n.as_coefficients_dict() for n in nums]
        monos = sorted({m for d in dicts for m in d}, key=sp.default_sort_key)
        mat = sp.Matrix([[d.get(m, 0) for d in dicts] for m in monos])
        red, pivots = mat.rref()
        # column j of the reduced matrix expresses argument j over the pivots
        coeffs = [[red[i, j] for i in range(len(pivots))] for j in range(len(nums))]
        scale = []
        for l in range(len(pivots)):
            den = sp.S.One
            for c in coeffs:
                den = sp.ilcm(den, sp.Rational(c[l]).q)
            scale.append(den)
        z = [sp.Dummy(f"z{l}") for l in range(len(pivots))]
        out = {}
        for j, c in enumerate(coeffs):
            out[self.opaque[("exp", j)]] = sp.Mul(*[z[l] ** (c[l] * scale[l]) for l in range(len(z))])
        return out


def _exp_rational_numerator(e):
    """Expanded numerator of the exponential-rational form, or None when
    the expression is over budget."""
    if sp.count_ops(e) > RATIONAL_PROOF_OPS:
        return None
    conv = _ExpRational()
    r = conv.scan(e)
    try:
        r = r.xreplace(conv.exp_basis())
    except (ValueError, TypeError, sp.PolynomialError):
        return None
    num = sp.expand(sp.fraction(sp.together(r))[0])
    # reduce by root relations r^q = base (valid for the principal branch)
    for (_, q), (sym, base) in conv.roots.items():
        if num == 0 or not num.has(sym):
            continue
        poly = sp.Poly(num, sym)
        red = sp.Add(*[c * sym ** (m % q) * base ** (m // q) for (m,), c in poly.terms()])
        num = sp.expand(sp.fraction(sp.together(red))[0])
    return num


def _exp_rationally_zero(e) -> bool:
    return _exp_rational_numerator(e) == 0


def _symbolic_verdict(e):
    """PROVED_ZERO / PROVED_NONZERO, or None with the best canonical form."""
    if e == 0:
        return Verdict.PROVED_ZERO, e
    num = _exp_rational_numerator(e)
    if num == 0:
        return Verdict.PROVED_ZERO, e
    if num is not None and num.is_Number:
        return Verdict.PROVED_NONZERO, e
    if num is None:
        # too large for the rational proof; the expanded form is cheaper
        # than normalize for the numeric stage
        return None, e
    n = normalize(e)
    if n == 0 or _exp_rationally_zero(n):
        return Verdict.PROVED_ZERO, n
    if n.is_Number:
        return Verdict.PROVED_NONZERO, n
    return None, n


def is_zero(
    e,
    strategy: str = "auto",
    samples: int = DEFAULT_SAMPLES,
    tol: float = DEFAULT_TOL,
    sampler: Sampler | None = None,
) -> ZeroTest:
    """Decide whether ``e`` vanishes identically.

    ``strategy`` is ``"symbolic"``, ``"numeric"`` or ``"auto"`` (symbolic,
    then numeric sampling when the canonical form is not the zero atom).
    """
    e = sp.sympify(e)
    if strategy in ("symbolic", "auto"):
        verdict, n = _symbolic_verdict(e)
        if verdict is Verdict.PROVED_ZERO:
            return ZeroTest(verdict, tolerance=tol)
        if verdict is Verdict.PROVED_NONZERO:
            res = float(abs(n)) if n.is_Number else 0.0
            return ZeroTest(verdict, tolerance=tol, residual=res, witness={})
        e = n
        if strategy == "symbolic":
            if has_unknown_functions(n):
                raise InconclusiveError("expression with unknown functions did not reduce to zero")
            raise InconclusiveError("canonical form is nonzero; a numeric test is required")
    elif strategy != "numeric":
        raise ValueError(f"unknown strategy {strategy!r}")
    sampler = sampler or Sampler()
    missing = [n for n in function_nodes(e) if n not in sampler.derived]
    if missing:
        raise InconclusiveError(f"cannot sample unknown function {missing[0]}")
    pts, vals, mags = sampler.points(e, samples)
    bound = tol * (1.0 + mags)
    ok = np.abs(vals) < bound
    worst = int(np.argmax(np.abs(vals) / bound))
    residual = float(np.max(np.abs(vals))) if len(vals) else 0.0
    if ok.all():
        return ZeroTest(Verdict.NUMERICALLY_ZERO, samples, tol, residual)
    witness = {s.name: float(v[worst]) for s, v in pts.items() if isinstance(s, sp.Symbol)}
    return ZeroTest(Verdict.NUMERICALLY_NONZERO, samples, tol, float(abs(vals[worst])), witness)


# ---------------------------------------------------------------------------
# printer
# ---------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 10, 20, 25, 30, 100


def _prec(e) -> int:
    if e.is_Add:
        return _PREC_ADD
    if e.is_Mul:
        c, _ = e.as_coeff_Mul()
        return _PREC_NEG if c.is_negative else _PREC_MUL
    if e.is_Rational and not e.is_Integer:
        return _PREC_MUL
    if e.is_Number and e.is_negative:
        return _PREC_NEG
    if e.is_Pow:
        if e.exp == sp.S.Half:
            return _PREC_ATOM
        if e.exp.is_negative:
            return _PREC_MUL
        return _PREC_POW
    return _PREC_ATOM


def _paren(e, level: int) -> str:
    s = to_text(e)
    return f"({s})" if _prec(e) < level else s


def _number(e) -> str:
    if e.is_Integer:
        return str(int(e))
    if e.is_Rational:
        return f"{e.p}/{e.q}"
    if e is sp.pi:
        return "pi"
    if e is sp.E:
        return "exp(1)"
    if e.is_Float:
        return repr(float(e))
    raise ValueError(f"cannot print number {e!r}")


def _mul_text(e) -> str:
    c, rest = e.as_coeff_Mul()
    sign = ""
    if c.is_negative:
        sign, c = "-", -c
    num, den = [], []
    if c.is_Rational:
        if c.p != 1:
            num.append(str(c.p))
        if c.q != 1:
            den.append(str(c.q))
    elif c != 1:
        num.append(_paren(c, _PREC_POW))
    for f in sp.Mul.make_args(rest):
        if f == 1:
            continue
        if f.is_Pow and f.exp.is_negative:
            inv = sp.Pow(f.base, -f.exp)
            den.append(_paren(inv, _PREC_POW if len(den) else _PREC_MUL))
        else:
            num.append(_paren(f, _PREC_MUL + 1 if f.is_Mul else _PREC_MUL))
    top = "*".join(num) if num else "1"
    if not den:
        return sign + top
    bottom = den[0] if len(den) == 1 and _is_simple(den[0]) else "(" + "*".join(den) + ")"
    return f"{sign}{top}/{bottom}"


def _is_simple(s: str) -> bool:
    depth = 0
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif depth == 0 and ch in "+-*/ ":
            return False
    return True


def to_text(e) -> str:
    """Deterministic DSL rendering; reparses to a structurally equal tree."""
    e = sp.sympify(e)
    if e.is_Number or e.is_NumberSymbol:
        return _number(e)
    if e.is_Symbol:
        return e.name
    if e.is_Add:
        terms = e.as_ordered_terms()
        out = to_text(terms[0])
        for t in terms[1:]:
            c, _ = t.as_coeff_Mul()
            if c.is_negative:
                out += " - " + _paren(-t, _PREC_MUL)
            else:
                out += " + " + _paren(t, _PREC_ADD + 1)
        return out
    if e.is_Mul:
        return _mul_text(e)
    if e.is_Pow:
        if e.exp == sp.S.Half:
            return f"sqrt({to_text(e.base)})"
        if e.exp.is_negative:
            return _mul_text(sp.Mul(sp.S.One, e, evaluate=False))
        ex = e.exp
        ex_s = to_text(ex) if ex.is_Integer or ex.is_Symbol else f"({to_text(ex)})"
        return f"{_paren(e.base, _PREC_POW + 1)}^{ex_s}"
    if isinstance(e, sp.hyper):
        a, b = e.ap
        (c,) = e.bq
        return f"hyp2f1({to_text(a)}, {to_text(b)}, {to_text(c)}, {to_text(e.argument)})"
    if isinstance(e, sp.Subs):
        d = e.expr
        if isinstance(d, sp.Derivative) and isinstance(d.expr, AppliedUndef) and len(d.expr.args) == 1:
            order = sum(n for _, n in d.variable_count)
            return f"{d.expr.func.__name__}{chr(39) * order}({to_text(e.point[0])})"
        raise ValueError(f"cannot print {e}")
    if isinstance(e, sp.Derivative):
        f = e.expr
        if isinstance(f, AppliedUndef) and len(f.args) == 1 and f.args[0].is_Symbol:
            order = sum(n for _, n in e.variable_count)
            return f"{f.func.__name__}{chr(39) * order}({to_text(f.args[0])})"
        wrt = []
        for v, n in e.variable_count:
            wrt.extend([to_text(v)] * int(n))
        return f"diff({to_text(f)}, {', '.join(wrt)})"
    if isinstance(e, (sp.Function, AppliedUndef)):
        name = "erfi" if e.func is sp.erfi else e.func.__name__
        return f"{name}({', '.join(to_text(a) for a in e.args)})"
    raise ValueError(f"cannot print {type(e).__name__}: {e}")
