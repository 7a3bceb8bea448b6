"""Invariance condition, restriction to the manifold M and extraction of the
determining equations."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import sympy as sp

from .approx import GradedExpr, expand_dependent, grade, seed_template, substitute_seeds
from .expr import normalize, to_text
from .jet import Generator, JetCoordinate, JetSpace, multi_indices, total_derivative

__all__ = [
    "Problem",
    "Rule",
    "SubstitutionSet",
    "DeterminingEquation",
    "DeterminingSystem",
    "DegenerateAnsatzError",
    "CyclicRulesError",
    "NonPolynomialError",
    "invariance_condition",
    "manifold_substitutions",
    "extract_determining",
    "find_gauge",
    "generic_generator",
    "restricted_condition",
    "derive_determining",
]

MODES = ("lie", "q-conditional")


class DegenerateAnsatzError(ValueError):
    pass


class CyclicRulesError(ValueError):
    pass


class NonPolynomialError(ValueError):
    pass


@dataclass(frozen=True)
class Problem:
    """The part of a problem the symmetry machinery needs: the jet space and
    the equations ``Delta = 0`` over unexpanded coordinates."""

    space: JetSpace
    equations: tuple

    @property
    def order(self) -> int:
        r = 0
        for e in self.equations:
            for _, c in self.space.coords_in(e):
                r = max(r, c.order)
        return r


def _as_problem(spec) -> Problem:
    if isinstance(spec, Problem):
        return spec
    return spec.problem()


# ---------------------------------------------------------------------------
# invariance condition
# ---------------------------------------------------------------------------

def _graded_partial(delta, sym, space: JetSpace) -> GradedExpr:
    d = sp.diff(delta, sym)
    if d == 0:
        return GradedExpr([0] * (space.p + 1))
    return grade(expand_dependent(d, space), space.p, space.epsilon)


def invariance_condition(spec, g: Generator, equation: int = 0) -> GradedExpr:
    """Graded Xi^(r)(Delta) before restriction."""
    prob = _as_problem(spec)
    space = prob.space
    delta = sp.sympify(prob.equations[equation])
    out = GradedExpr([0] * (space.p + 1))
    for i, x in enumerate(space.x):
        part = _graded_partial(delta, x, space)
        if not part.is_zero():
            out = out + g.graded_xi(i) * part
    for s, c in space.coords_in(delta):
        if c.k is not None:
            raise ValueError(f"equation must be written in unexpanded coordinates, found {s}")
        part = _graded_partial(delta, s, space)
        if part.is_zero():
            continue
        out = out + g.coefficient(c.alpha, c.sigma) * part
    return out.normalized()


# ---------------------------------------------------------------------------
# manifold
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Rule:
    lhs: sp.Symbol
    rhs: sp.Expr
    source: str


@dataclass
class SubstitutionSet:
    """Ordered, closed rewrite rules defining M."""

    mode: str
    rules: list[Rule] = field(default_factory=list)
    gauge: int | None = None

    @property
    def mapping(self) -> dict:
        return {r.lhs: r.rhs for r in self.rules}

    def lhs(self) -> list[sp.Symbol]:
        return [r.lhs for r in self.rules]

    def apply(self, e) -> sp.Expr:
        e = sp.sympify(e)
        m = self.mapping
        for _ in range(len(m) + 1):
            if not (e.free_symbols & m.keys()):
                return normalize(e)
            e = e.xreplace(m)
        raise CyclicRulesError("substitution did not reach a fixed point")

    def _add(self, lhs, rhs, source):
        rhs = self.apply(rhs)
        if lhs in rhs.free_symbols:
            raise CyclicRulesError(f"rule for {lhs} refers to itself")
        self.rules.append(Rule(lhs, rhs, source))
        self._close()

    def _close(self):
        m = self.mapping
        for _ in range(len(m) + 1):
            changed = False
            for i, r in enumerate(self.rules):
                if r.rhs.free_symbols & m.keys():
                    new = normalize(r.rhs.xreplace(m))
                    if r.lhs in new.free_symbols:
                        raise CyclicRulesError(f"rule for {r.lhs} refers to itself")
                    self.rules[i] = Rule(r.lhs, new, r.source)
                    changed = True
            if not changed:
                return
            m = self.mapping
        raise CyclicRulesError("rule set is cyclic")

    def to_text(self) -> list[str]:
        return [f"{r.lhs} -> {to_text(r.rhs)}    # {r.source}" for r in self.rules]


def _rank(c: JetCoordinate):
    return (c.order, tuple(reversed(c.sigma)))


def _solve_for(e, sym) -> sp.Expr:
    a = normalize(sp.diff(e, sym))
    if a == 0 or sym in a.free_symbols:
        raise DegenerateAnsatzError(f"cannot solve linearly for {sym}")
    b = normalize(e - a * sym)
    return -b / a


def find_gauge(g: Generator) -> int:
    """Index i with xi_i lifted to (1, 0, ..., 0) and xi_j = 0 for j < i."""
    space = g.space
    unit = [sp.S.One] + [sp.S.Zero] * space.p
    for i in range(len(space.indep)):
        col = [normalize(c) for c in g.graded_xi(i)]
        if col == unit:
            return i
        if any(c != 0 for c in col):
            break
    raise DegenerateAnsatzError("generator is not in a normalized gauge for q-conditional mode")


def _graded_q(g: Generator, alpha: int) -> GradedExpr:
    space = g.space
    out = -g.graded_eta(alpha)
    for i in range(len(space.indep)):
        xi = g.graded_xi(i)
        if xi.is_zero():
            continue
        c = JetCoordinate(alpha, None, tuple(int(j == i) for j in range(len(space.indep))))
        dep = GradedExpr([space.symbol(c.at_order(k)) for k in range(space.p + 1)])
        out = out + xi * dep
    return out.normalized()


def manifold_substitutions(spec, g: Generator, mode: str = "q-conditional") -> SubstitutionSet:
    """Rewrite rules for M: each graded equation solved for its leading
    coordinate, plus (q-conditional) the graded invariant surface condition
    and its differential consequences up to order r - 1."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    prob = _as_problem(spec)
    space = prob.space
    r = prob.order
    n = len(space.indep)
    graded = [grade(expand_dependent(e, space), space.p, space.epsilon) for e in prob.equations]
    subs = SubstitutionSet(mode)
    if mode == "q-conditional":
        subs.gauge = find_gauge(g)
        qs = [_graded_q(g, a) for a in range(len(space.deps))]
    i = subs.gauge
    for k in range(space.p + 1):
        if mode == "q-conditional":
            for a in range(len(space.deps)):
                lead = JetCoordinate(a, k, tuple(int(j == i) for j in range(n)))
                lhs = space.symbol(lead)
                q = qs[a][k]
                if normalize(sp.diff(q, lhs)) != 1:
                    raise DegenerateAnsatzError(f"invariant surface condition is not unit in {lhs}")
                base_rhs = subs.apply(lhs - q)
                subs._add(lhs, base_rhs, f"Q order {k}")
                extra = []
                for order in range(1, r):
                    extra.extend(multi_indices(n, order))
                # derivatives free of x_i first so later ones can reuse them
                extra.sort(key=lambda s: (sum(s), s[i]))
                for s in extra:
                    target = lead
                    for j, m in enumerate(s):
                        target = target.bump(j, m)
                    tsym = space.symbol(target)
                    if tsym in subs.mapping:
                        continue
                    j = max(jj for jj, m in enumerate(s) if m)
                    prev = target.bump(j, -1)
                    prev_rhs = subs.mapping[space.symbol(prev)]
                    subs._add(tsym, total_derivative(prev_rhs, j, space), f"d^{sum(s)}Q order {k}")
        for eq_index, gr in enumerate(graded):
            e = subs.apply(gr[k])
            cands = [c for s, c in space.coords_in(e) if c.k == k and c.order > 0]
            if not cands:
                if e != 0:
                    raise DegenerateAnsatzError(f"equation {eq_index} at order {k} has no leading coordinate")
                continue
            lead = max(cands, key=_rank)
            lhs = space.symbol(lead)
            subs._add(lhs, _solve_for(e, lhs), f"equation {eq_index} order {k}")
    return subs


# ---------------------------------------------------------------------------
# determining equations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeterminingEquation:
    expr: sp.Expr
    order: int
    monomial: tuple  # ((name, power), ...)

    def monomial_text(self) -> str:
        if not self.monomial:
            return "1"
        return "*".join(n if p == 1 else f"{n}^{p}" for n, p in self.monomial)


@dataclass
class DeterminingSystem:
    equations: list[DeterminingEquation]
    mode: str

    def __len__(self) -> int:
        return len(self.equations)

    def substitute(self, seeds) -> list[sp.Expr]:
        return [normalize(substitute_seeds(d.expr, seeds)) for d in self.equations]

    def to_json(self) -> list[dict]:
        return [
            {"order": d.order, "monomial": d.monomial_text(), "equation": to_text(d.expr)}
            for d in self.equations
        ]

    def to_dsl(self) -> str:
        lines = [f"# determining equations ({self.mode} mode)"]
        for n, d in enumerate(self.equations, 1):
            lines.append(f"# eps^{d.order}, monomial {d.monomial_text()}")
            lines.append(f"equation d{n}: {to_text(d.expr)} = 0;")
        return "\n".join(lines) + "\n"

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _clear_denominators(e) -> sp.Expr:
    terms = sp.Add.make_args(sp.expand(e))
    dens = {sp.fraction(t)[1] for t in terms}
    dens.discard(sp.S.One)
    if not dens:
        return e
    l = sp.S.One
    for d in dens:
        l = sp.lcm(l, d)
    return sp.expand(e * l)


def _split_monomial(term, collect: set):
    mono: dict = {}
    coeff = []
    for f in sp.Mul.make_args(term):
        base, ex = f.as_base_exp()
        if base in collect:
            if not (ex.is_Integer and ex > 0):
                raise NonPolynomialError(f"non-polynomial dependence on {base}")
            mono[base.name] = mono.get(base.name, 0) + int(ex)
            continue
        if f.free_symbols & collect:
            raise NonPolynomialError(f"jet coordinate inside {f}")
        coeff.append(f)
    return tuple(sorted(mono.items())), sp.Mul(*coeff)


def extract_determining(cond: GradedExpr, subs: SubstitutionSet, space: JetSpace) -> DeterminingSystem:
    """Restrict, clear denominators and collect coefficients of monomials in
    the surviving jet coordinates (all but the order-0 undifferentiated
    variables, which appear inside the infinitesimals)."""
    eqs = []
    for k, e in enumerate(cond):
        e = _clear_denominators(subs.apply(e))
        collect = {
            s for s, c in space.coords_in(e) if not (c.k == 0 and c.order == 0)
        }
        buckets: dict = {}
        for term in sp.Add.make_args(e):
            mono, coeff = _split_monomial(term, collect)
            buckets.setdefault(mono, []).append(coeff)
        for mono in sorted(buckets, key=lambda m: (sum(p for _, p in m), m)):
            expr = normalize(sp.Add(*buckets[mono]))
            if expr != 0:
                eqs.append(DeterminingEquation(expr, k, mono))
    return DeterminingSystem(eqs, subs.mode)


# ---------------------------------------------------------------------------
# generic restricted conditions (cached)
# ---------------------------------------------------------------------------

def generic_generator(space: JetSpace, mode: str, gauge: int = 0) -> Generator:
    xi, eta = seed_template(space)
    if mode == "q-conditional":
        for j in range(gauge):
            xi[j] = [sp.S.Zero] * (space.p + 1)
        xi[gauge] = [sp.S.One] + [sp.S.Zero] * space.p
    return Generator(space, xi, eta)


@lru_cache(maxsize=32)
def _restricted(prob: Problem, mode: str, gauge: int):
    g = generic_generator(prob.space, mode, gauge)
    subs = manifold_substitutions(prob, g, mode)
    conds = [invariance_condition(prob, g, i) for i in range(len(prob.equations))]
    restricted = [c.map(subs.apply) for c in conds]
    return g, subs, conds, restricted


def restricted_condition(spec, mode: str = "q-conditional", gauge: int = 0):
    """(generic generator, rules, raw conditions, restricted conditions)."""
    return _restricted(_as_problem(spec), mode, gauge)


def derive_determining(spec, mode: str = "lie", gauge: int = 0) -> DeterminingSystem:
    prob = _as_problem(spec)
    g, subs, conds, _ = restricted_condition(prob, mode, gauge)
    eqs = []
    for c in conds:
        eqs.extend(extract_determining(c, subs, prob.space).equations)
    return DeterminingSystem(eqs, mode)
