"""Perturbative machinery: ε-expansion, grading, the recursion operator R
and the lift of seed generators to their tilde components."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import sympy as sp
from sympy.core.function import AppliedUndef

from .expr import function_nodes, normalize
from .jet import Generator, JetCoordinate, JetSpace

__all__ = [
    "GradedExpr",
    "DegreeOverflowError",
    "expand_dependent",
    "grade",
    "recursion_apply",
    "lift_generator",
    "seed_template",
    "substitute_seeds",
    "SEED_FAMILY",
]

SEED_FAMILY = re.compile(r"^(xi|eta)(\d+)([A-Za-z][A-Za-z0-9]*)$")


class DegreeOverflowError(ValueError):
    """An ε power above the truncation order survived expansion."""


@dataclass(frozen=True)
class GradedExpr:
    """Coefficients ``[e0, ..., ep]`` of an expression truncated at ε^p."""

    coeffs: tuple

    def __init__(self, coeffs: Sequence):
        object.__setattr__(self, "coeffs", tuple(sp.sympify(c) for c in coeffs))

    @property
    def p(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, k: int):
        return self.coeffs[k]

    def __len__(self) -> int:
        return len(self.coeffs)

    def __iter__(self):
        return iter(self.coeffs)

    def _coerce(self, other) -> "GradedExpr":
        if isinstance(other, GradedExpr):
            if other.p != self.p:
                raise ValueError("graded expressions of different order")
            return other
        return GradedExpr([sp.sympify(other)] + [sp.S.Zero] * self.p)

    def __add__(self, other):
        other = self._coerce(other)
        return GradedExpr([a + b for a, b in zip(self.coeffs, other.coeffs)])

    __radd__ = __add__

    def __neg__(self):
        return GradedExpr([-a for a in self.coeffs])

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        n = len(self.coeffs)
        out = []
        for k in range(n):
            acc = sp.S.Zero
            for j in range(k + 1):
                a, b = self.coeffs[j], other.coeffs[k - j]
                if a != 0 and b != 0:
                    acc += a * b
            out.append(acc)
        return GradedExpr(out)

    __rmul__ = __mul__

    def map(self, f: Callable) -> "GradedExpr":
        return GradedExpr([f(c) for c in self.coeffs])

    def normalized(self) -> "GradedExpr":
        return self.map(normalize)

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def reassemble(self, eps) -> sp.Expr:
        eps = sp.sympify(eps)
        return sp.Add(*[c * eps**k for k, c in enumerate(self.coeffs)])


def expand_dependent(e, space: JetSpace, p: int | None = None) -> sp.Expr:
    """Replace every unexpanded coordinate ``u_sigma`` by
    ``sum_k eps^k u(k)_sigma`` and truncate past ``eps^p`` (Taylor in ε)."""
    p = space.p if p is None else p
    eps = space.epsilon
    e = sp.sympify(e)
    rep = {}
    for s, c in space.coords_in(e):
        if c.k is None:
            rep[s] = sp.Add(*[eps**k * space.symbol(c.at_order(k)) for k in range(p + 1)])
    f = e.xreplace(rep)
    out = []
    term = f
    for k in range(p + 1):
        out.append(term.subs(eps, 0) / math.factorial(k))
        term = sp.diff(term, eps)
    return normalize(sp.Add(*[c * eps**k for k, c in enumerate(out)]))


def grade(e, p: int, eps="eps", strict: bool = False) -> GradedExpr:
    """Split a polynomial in ε into its coefficients up to ``eps^p``.

    Higher powers are discarded; with ``strict=True`` they raise
    ``DegreeOverflowError`` instead.
    """
    eps = sp.Symbol(eps) if isinstance(eps, str) else eps
    out = [sp.S.Zero] * (p + 1)
    for term in sp.Add.make_args(sp.expand(sp.sympify(e))):
        coeff, n = term.as_coeff_exponent(eps)
        if coeff.has(eps) or not (n.is_Integer and n >= 0):
            raise ValueError(f"term {term} is not polynomial in {eps}")
        n = int(n)
        if n > p:
            if strict:
                raise DegreeOverflowError(f"term of degree {n} exceeds order {p}: {term}")
            continue
        out[n] += coeff
    return GradedExpr([normalize(c) for c in out])


def _shift_node(node, p: int):
    """f_(k) -> f_(k+1) for seed-family applications and their derivatives."""
    inner = node.expr if isinstance(node, sp.Derivative) else node
    if not isinstance(inner, AppliedUndef):
        return sp.S.Zero
    m = SEED_FAMILY.match(inner.func.__name__)
    if not m:
        return sp.S.Zero
    kind, k, tail = m.groups()
    if int(k) + 1 > p:
        return sp.S.Zero
    nxt = sp.Function(f"{kind}{int(k) + 1}{tail}")(*inner.args)
    if isinstance(node, sp.Derivative):
        return sp.Derivative(nxt, *node.variable_count)
    return nxt


def recursion_apply(f, k: int, space: JetSpace) -> sp.Expr:
    """The recursion operator R on an expression over x and u(0..k).

    R[u(j)] = (j+1) u(j+1); R on a seed-family function shifts its order
    index and adds the u(1)-gradient term; R annihilates x and parameters.
    """
    f = sp.sympify(f)
    out = sp.S.Zero
    for s, c in space.coords_in(f):
        if c.k is None or c.k >= space.p:
            continue
        out += sp.diff(f, s) * (c.k + 1) * space.symbol(c.at_order(c.k + 1))
    nodes = [n for n in function_nodes(f) if not isinstance(n, sp.Subs)]
    if nodes:
        dummies = {n: sp.Dummy(f"r{i}") for i, n in enumerate(nodes)}
        g = f.xreplace(dummies)
        for n, d in dummies.items():
            shifted = _shift_node(n, space.p)
            if shifted != 0:
                out += sp.diff(g, d).xreplace({dv: node for node, dv in dummies.items()}) * shifted
    return normalize(out)


def seed_template(space: JetSpace):
    """Generic seed functions ``xi{k}{var}(x, u0)`` and ``eta{k}{dep}(x, u0)``."""
    args = (*space.x, *(space.coord(a, 0) for a in range(len(space.deps))))
    xi = [[sp.Function(f"xi{k}{v}")(*args) for k in range(space.p + 1)] for v in space.indep]
    eta = [[sp.Function(f"eta{k}{d}")(*args) for k in range(space.p + 1)] for d in space.deps]
    return xi, eta


def _lift_component(seed0, space: JetSpace) -> list:
    tilde = [normalize(seed0)]
    for k in range(space.p):
        tilde.append(normalize(recursion_apply(tilde[k], k, space) / (k + 1)))
    return tilde


def _family_bindings(g: Generator, space: JetSpace) -> dict:
    out = {}
    for i, v in enumerate(space.indep):
        for k, s in enumerate(g.xi[i]):
            out[f"xi{k}{v}"] = sp.sympify(s)
    for a, d in enumerate(space.deps):
        for k, s in enumerate(g.eta[a]):
            out[f"eta{k}{d}"] = sp.sympify(s)
    return out


def substitute_seeds(e, seeds: Mapping[str, sp.Expr]) -> sp.Expr:
    """Replace seed-family functions (and their derivatives) by closed forms.

    ``seeds`` maps family names such as ``xi0x`` to expressions in the
    same arguments as the template.
    """
    e = sp.sympify(e)
    rep = {}
    for n in function_nodes(e):
        inner = n.expr if isinstance(n, sp.Derivative) else n
        if not isinstance(inner, AppliedUndef):
            continue
        name = inner.func.__name__
        if name not in seeds:
            continue
        val = sp.sympify(seeds[name])
        if isinstance(n, sp.Derivative):
            val = sp.diff(val, *n.variable_count)
        rep[n] = val
    return e.xreplace(rep) if rep else e


def lift_generator(g: Generator, p: int | None = None) -> Generator:
    """Populate the tilde components of ``g``.

    The lift is computed once on generic seed functions and the concrete
    seeds are substituted afterwards, so R only ever acts on the generic
    families.
    """
    space = g.space
    if p is not None and p != space.p:
        space = type(space)(space.indep, space.deps, p, space.eps)
    xi_t, eta_t = seed_template(space)
    seeds = _family_bindings(g, space)

    def lift(col):
        return [normalize(substitute_seeds(c, seeds)) for c in _lift_component(col[0], space)]

    out = Generator(space, [list(c) for c in g.xi], [list(c) for c in g.eta])
    out.xi_tilde = [lift(col) for col in xi_t]
    out.eta_tilde = [lift(col) for col in eta_t]
    return out
