"""Jet-space bookkeeping, total derivatives and generator prolongation.

Coordinates are plain sympy symbols with structured names:
``u`` / ``u_tx`` for the unexpanded dependent variable and its derivatives,
``u0`` / ``u1_xx`` for the ε-graded components.  Derivative letters follow
the declared order of the independent variables, which therefore must be
single letters.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import sympy as sp

from .expr import normalize

__all__ = [
    "JetCoordinate",
    "JetSpace",
    "Generator",
    "total_derivative",
    "prolong",
    "multi_indices",
]


@dataclass(frozen=True, order=True)
class JetCoordinate:
    """Dependent index ``alpha``, ε-order ``k`` (``None`` when unexpanded)
    and multi-index ``sigma``."""

    alpha: int
    k: int | None
    sigma: tuple[int, ...]

    @property
    def order(self) -> int:
        return sum(self.sigma)

    def bump(self, i: int, by: int = 1) -> "JetCoordinate":
        s = list(self.sigma)
        s[i] += by
        return JetCoordinate(self.alpha, self.k, tuple(s))

    def at_order(self, k: int | None) -> "JetCoordinate":
        return JetCoordinate(self.alpha, k, self.sigma)


def multi_indices(n: int, order: int) -> list[tuple[int, ...]]:
    """All multi-indices of length ``n`` and total ``order``, lexicographic."""
    if n == 1:
        return [(order,)]
    out = []
    for first in range(order, -1, -1):
        for rest in multi_indices(n - 1, order - first):
            out.append((first, *rest))
    return out


@dataclass(frozen=True)
class JetSpace:
    indep: tuple[str, ...]
    deps: tuple[str, ...]
    p: int = 1
    eps: str = "eps"

    def __post_init__(self):
        for v in self.indep:
            if len(v) != 1:
                raise ValueError(f"independent variable {v!r} must be a single letter")

    @cached_property
    def x(self) -> tuple[sp.Symbol, ...]:
        return tuple(sp.Symbol(v) for v in self.indep)

    @cached_property
    def epsilon(self) -> sp.Symbol:
        return sp.Symbol(self.eps)

    @cached_property
    def _pattern(self):
        deps = "|".join(sorted((re.escape(d) for d in self.deps), key=len, reverse=True))
        letters = "".join(re.escape(v) for v in self.indep)
        return re.compile(rf"^({deps})(\d*)(?:_([{letters}]+))?$")

    def name(self, c: JetCoordinate) -> str:
        base = self.deps[c.alpha] + ("" if c.k is None else str(c.k))
        letters = "".join(v * n for v, n in zip(self.indep, c.sigma))
        return f"{base}_{letters}" if letters else base

    def symbol(self, c: JetCoordinate) -> sp.Symbol:
        return sp.Symbol(self.name(c))

    def coord(self, alpha: int | str, k: int | None = None, sigma=None) -> sp.Symbol:
        if isinstance(alpha, str):
            alpha = self.deps.index(alpha)
        if sigma is None:
            sigma = (0,) * len(self.indep)
        elif isinstance(sigma, str):
            sigma = tuple(sigma.count(v) for v in self.indep)
        return self.symbol(JetCoordinate(alpha, k, tuple(sigma)))

    def decode(self, sym) -> JetCoordinate | None:
        if not isinstance(sym, sp.Symbol):
            return None
        m = self._pattern.match(sym.name)
        if not m:
            return None
        dep, k, letters = m.groups()
        if k and (len(k) > 1 and k[0] == "0"):
            return None
        kk = int(k) if k else None
        if kk is not None and kk > self.p:
            return None
        letters = letters or ""
        sigma = tuple(letters.count(v) for v in self.indep)
        c = JetCoordinate(self.deps.index(dep), kk, sigma)
        # reject non-canonical spellings such as u_xt
        return c if self.name(c) == sym.name else None

    def coords_in(self, e) -> list[tuple[sp.Symbol, JetCoordinate]]:
        out = []
        for s in sp.sympify(e).free_symbols:
            c = self.decode(s)
            if c is not None:
                out.append((s, c))
        return sorted(out, key=lambda sc: sc[1])

    def is_jet(self, sym) -> bool:
        return self.decode(sym) is not None


def total_derivative(e, i: int, space: JetSpace) -> sp.Expr:
    """D/Dx_i: explicit partial plus the chain rule through every jet
    coordinate present in ``e`` (expanded or not)."""
    e = sp.sympify(e)
    out = sp.diff(e, space.x[i])
    for s, c in space.coords_in(e):
        out += sp.diff(e, s) * space.symbol(c.bump(i))
    return out


@dataclass
class Generator:
    """Approximate generator given by its ε-graded seed components.

    ``xi[i]`` and ``eta[alpha]`` are lists ``[seed_0, ..., seed_p]`` of
    expressions in the independent variables and the order-0 coordinates.
    The lifted (tilde) components are filled by ``approx.lift_generator``.
    """

    space: JetSpace
    xi: list[list[sp.Expr]]
    eta: list[list[sp.Expr]]
    xi_tilde: list[list[sp.Expr]] | None = None
    eta_tilde: list[list[sp.Expr]] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def zero(cls, space: JetSpace) -> "Generator":
        z = [sp.S.Zero] * (space.p + 1)
        return cls(space, [list(z) for _ in space.indep], [list(z) for _ in space.deps])

    def graded_xi(self, i: int):
        from .approx import GradedExpr

        return GradedExpr(self._lifted().xi_tilde[i])

    def graded_eta(self, alpha: int):
        from .approx import GradedExpr

        return GradedExpr(self._lifted().eta_tilde[alpha])

    def _lifted(self) -> "Generator":
        if self.xi_tilde is None or self.eta_tilde is None:
            from .approx import lift_generator

            lifted = lift_generator(self, self.space.p)
            self.xi_tilde, self.eta_tilde = lifted.xi_tilde, lifted.eta_tilde
        return self

    def coefficient(self, alpha: int, sigma: Sequence[int]):
        """Graded prolongation coefficient eta_{alpha, sigma} (cached)."""
        sigma = tuple(sigma)
        key = (alpha, sigma)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if sum(sigma) == 0:
            out = self.graded_eta(alpha)
        else:
            out = _prolong_step(self, alpha, sigma)
        self._cache[key] = out
        return out


def _graded_dependent(space: JetSpace, c: JetCoordinate):
    from .approx import GradedExpr

    return GradedExpr([space.symbol(c.at_order(k)) for k in range(space.p + 1)])


def _prolong_step(g: Generator, alpha: int, sigma: tuple[int, ...]):
    space = g.space
    # peel the last nonzero slot so every coefficient has one canonical path
    i = max(j for j, n in enumerate(sigma) if n)
    parent = list(sigma)
    parent[i] -= 1
    prev = g.coefficient(alpha, tuple(parent))
    out = prev.map(lambda e: total_derivative(e, i, space))
    for j in range(len(space.indep)):
        dxi = g.graded_xi(j).map(lambda e: total_derivative(e, i, space))
        if dxi.is_zero():
            continue
        c = JetCoordinate(alpha, None, tuple(parent)).bump(j)
        out = out - dxi * _graded_dependent(space, c)
    return out.map(normalize)


def prolong(g: Generator, order: int, space: JetSpace | None = None) -> dict:
    """All coefficients eta_{alpha, sigma} with 1 <= |sigma| <= order."""
    if order < 1:
        raise ValueError("prolongation order must be at least 1")
    space = space or g.space
    out = {}
    for alpha in range(len(space.deps)):
        for r in range(1, order + 1):
            for sigma in multi_indices(len(space.indep), r):
                out[(alpha, sigma)] = g.coefficient(alpha, sigma)
    return out


def coordinates(space: JetSpace, order: int, k: int | None) -> Iterable[sp.Symbol]:
    for alpha in range(len(space.deps)):
        for r in range(order + 1):
            for sigma in multi_indices(len(space.indep), r):
                yield space.symbol(JetCoordinate(alpha, k, sigma))
