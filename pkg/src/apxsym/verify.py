"""Verification of generators, invariant-surface representations and
closed-form solutions against the problem equation."""
from __future__ import annotations

import json
import math
import random
import re
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import sympy as sp

from . import numeval
from .approx import substitute_seeds
from .detsys import _graded_q, derive_determining, find_gauge, restricted_condition
from .expr import (
    DEFAULT_SAMPLES,
    DEFAULT_TOL,
    InconclusiveError,
    Sampler,
    Verdict,
    ZeroTest,
    function_nodes,
    is_zero,
    normalize,
)
from .jet import Generator
from .parse import GeneratorDecl, ProblemSpec, Representation, Solution

__all__ = [
    "OrderVerdict",
    "VerificationReport",
    "build_generator",
    "check_symmetry",
    "check_determining",
    "check_isc",
    "verify_solution",
    "epsilon_convergence",
    "ConvergenceTable",
    "figure_grid",
    "figure_report",
    "mutations",
    "SCHEMA",
]

SCHEMA = 1
# symbolic proofs are only attempted below this operation count
SYMBOLIC_BUDGET = 2500


@dataclass
class OrderVerdict:
    label: str
    verdict: str
    residual: float = 0.0
    samples: int = 0
    tolerance: float = DEFAULT_TOL
    witness: dict | None = None

    @property
    def zero(self) -> bool:
        return Verdict(self.verdict).zero

    def to_json(self) -> dict:
        out = {
            "label": self.label,
            "verdict": self.verdict,
            "residual": self.residual,
            "samples": self.samples,
            "tolerance": self.tolerance,
        }
        if self.witness is not None:
            out["witness"] = dict(sorted(self.witness.items()))
        return out


@dataclass
class VerificationReport:
    kind: str
    target: str
    verdicts: list = field(default_factory=list)
    mode: str | None = None
    samples: int = DEFAULT_SAMPLES
    tolerance: float = DEFAULT_TOL
    seed: int = 0
    expect: str = "pass"
    elapsed: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.verdicts) and all(v.zero for v in self.verdicts)

    @property
    def as_expected(self) -> bool:
        return self.passed == (self.expect == "pass")

    def verdict(self, label: str) -> OrderVerdict:
        for v in self.verdicts:
            if v.label == label:
                return v
        raise KeyError(label)

    def to_json(self, timing: bool = False) -> dict:
        out = {
            "schema": SCHEMA,
            "kind": self.kind,
            "target": self.target,
            "mode": self.mode,
            "passed": self.passed,
            "expect": self.expect,
            "samples": self.samples,
            "tolerance": self.tolerance,
            "seed": self.seed,
            "verdicts": [v.to_json() for v in self.verdicts],
            "notes": list(self.notes),
        }
        # wall-clock time would break byte-identical reruns
        if timing:
            out["elapsed"] = round(self.elapsed, 3)
        return out

    def dumps(self, timing: bool = False) -> str:
        return json.dumps(self.to_json(timing), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _lookup(table: dict, item, what: str):
    if isinstance(item, str):
        if item not in table:
            raise KeyError(f"unknown {what} {item!r}")
        return table[item]
    return item


def _elimination(spec: ProblemSpec, case: str | None) -> dict:
    c = spec.case_of(case)
    return c.elimination() if c is not None else {}


def _sampler(spec: ProblemSpec, case: str | None, own, seed: int, derived=None) -> Sampler:
    domains = {str(k): v for k, v in spec.domains.items()}
    requires, excludes = [], []
    c = spec.case_of(case)
    for g in ([c.guards] if c is not None else []) + ([own] if own is not None else []):
        domains.update({str(k): v for k, v in g.domains.items()})
        requires += list(g.requires)
        excludes += list(g.excludes)
    return Sampler(domains, tuple(requires), tuple(excludes), seed=seed, derived=dict(derived or {}))


def _verdict(label: str, zt: ZeroTest, sampler: Sampler, e) -> OrderVerdict:
    witness = zt.witness
    if not zt.zero and not witness:
        # proved nonzero: still record a concrete admissible point
        try:
            pts, _, _ = sampler.points(e, 1)
            witness = {s.name: float(v[0]) for s, v in pts.items() if isinstance(s, sp.Symbol)}
        except InconclusiveError:
            witness = {}
    return OrderVerdict(label, zt.verdict.value, zt.residual, zt.samples, zt.tolerance, witness)


def _zero(e, strategy: str, samples: int, tol: float, sampler: Sampler) -> ZeroTest:
    if strategy == "auto":
        n = sp.sympify(e)
        if sp.count_ops(n) <= SYMBOLIC_BUDGET:
            return is_zero(n, "auto", samples, tol, sampler)
        return is_zero(n, "numeric", samples, tol, sampler)
    return is_zero(e, strategy, samples, tol, sampler)


def build_generator(spec: ProblemSpec, decl: GeneratorDecl) -> Generator:
    """Concrete generator from a fixture declaration, case constraint applied."""
    space = spec.space()
    elim = _elimination(spec, decl.case)
    zero = (sp.S.Zero,) * (space.p + 1)

    def col(table, name):
        return [normalize(sp.sympify(c).xreplace(elim)) for c in table.get(name, zero)]

    return Generator(
        space,
        [col(decl.xi, v) for v in space.indep],
        [col(decl.eta, d) for d in space.deps],
    )


def _seed_map(spec: ProblemSpec, g: Generator) -> dict:
    space = spec.space()
    out = {}
    for i, v in enumerate(space.indep):
        for k, s in enumerate(g.xi[i]):
            out[f"xi{k}{v}"] = s
    for a, d in enumerate(space.deps):
        for k, s in enumerate(g.eta[a]):
            out[f"eta{k}{d}"] = s
    return out


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def check_symmetry(
    spec: ProblemSpec,
    g: str | GeneratorDecl,
    mode: str = "q-conditional",
    *,
    strategy: str = "auto",
    samples: int = 100,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> VerificationReport:
    """Test the restricted invariance condition of a fixture generator at
    every ε-order.

    The restriction to the manifold is computed once for generic seed
    functions; the concrete seeds enter either by substitution (symbolic
    route) or as per-sample bindings of the seed-function nodes (numeric
    route).
    """
    t0 = time.perf_counter()
    decl = _lookup(spec.generators, g, "generator")
    gen = build_generator(spec, decl)
    gauge = find_gauge(gen) if mode == "q-conditional" else 0
    _, _, _, restricted = restricted_condition(spec.problem(), mode, gauge)
    seeds = _seed_map(spec, gen)
    elim = _elimination(spec, decl.case)
    report = VerificationReport(
        "check-symmetry", decl.name, mode=mode, samples=samples, tolerance=tol, seed=seed, expect=decl.expect
    )
    for eq_index, cond in enumerate(restricted):
        for k, c in enumerate(cond):
            label = f"e{k}" if len(restricted) == 1 else f"eq{eq_index}.e{k}"
            derived = dict(elim)
            for node in function_nodes(c):
                derived[node] = substitute_seeds(node, seeds)
            sampler = _sampler(spec, decl.case, decl.guards, seed, derived)
            zt = None
            if strategy in ("auto", "symbolic"):
                concrete = substitute_seeds(c, seeds).xreplace(elim)
                if strategy == "symbolic" or sp.count_ops(concrete) <= SYMBOLIC_BUDGET:
                    zt = is_zero(concrete, strategy, samples, tol, replace(sampler, derived=dict(elim)))
            if zt is None:
                zt = is_zero(c, "numeric", samples, tol, sampler)
            report.verdicts.append(_verdict(label, zt, sampler, c))
    report.elapsed = time.perf_counter() - t0
    return report


def check_determining(
    spec: ProblemSpec,
    g: str | GeneratorDecl,
    mode: str = "lie",
    *,
    samples: int = DEFAULT_SAMPLES,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> VerificationReport:
    """Substitute a generator into every determining equation."""
    t0 = time.perf_counter()
    decl = _lookup(spec.generators, g, "generator")
    gen = build_generator(spec, decl)
    gauge = find_gauge(gen) if mode == "q-conditional" else 0
    system = derive_determining(spec.problem(), mode, gauge)
    seeds = _seed_map(spec, gen)
    elim = _elimination(spec, decl.case)
    sampler = _sampler(spec, decl.case, decl.guards, seed, elim)
    report = VerificationReport(
        "check-determining", decl.name, mode=mode, samples=samples, tolerance=tol, seed=seed, expect=decl.expect
    )
    for n, e in enumerate(system.substitute(seeds), 1):
        e = e.xreplace(elim)
        zt = _zero(e, "auto", samples, tol, sampler)
        report.verdicts.append(_verdict(f"d{n}", zt, sampler, e))
    report.elapsed = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------
# invariant surface representations
# ---------------------------------------------------------------------------

def _probe_functions(spec: ProblemSpec) -> dict:
    """Concrete stand-ins for the opaque profile functions."""
    w = sp.Dummy("w")
    out = {}
    for i, name in enumerate(spec.funcs):
        f = sp.Function(name)
        out[f] = sp.Lambda(w, sp.exp(w / (3 + i)) + sp.sin((i + 1) * w) / 2 + 2)
    return out


def check_isc(
    spec: ProblemSpec,
    g: str | GeneratorDecl,
    rep: str | Representation,
    *,
    samples: int = DEFAULT_SAMPLES,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> VerificationReport:
    """Graded invariant surface condition evaluated on a representation
    whose profile functions stay opaque."""
    t0 = time.perf_counter()
    rep = _lookup(spec.representations, rep, "representation")
    decl = _lookup(spec.generators, g if g is not None else rep.of, "generator")
    space = spec.space()
    gen = build_generator(spec, decl)
    comps = {}
    for a, d in enumerate(space.deps):
        for k in range(space.p + 1):
            name = f"{d}{k}"
            if name not in rep.components:
                raise KeyError(f"representation {rep.name} lacks component {name}")
            comps[(a, k)] = sp.sympify(rep.components[name])
    report = VerificationReport("check-isc", rep.name, samples=samples, tolerance=tol, seed=seed, expect="pass")
    for a in range(len(space.deps)):
        q = _graded_q(gen, a)
        for k, qk in enumerate(q):
            rep_map = {}
            for s, c in space.coords_in(qk):
                if c.k is None:
                    continue
                e = comps[(c.alpha, c.k)]
                for i, n in enumerate(c.sigma):
                    if n:
                        e = sp.diff(e, space.x[i], n)
                rep_map[s] = e
            e = qk.xreplace(rep_map).doit()
            label = f"e{k}" if len(space.deps) == 1 else f"{space.deps[a]}.e{k}"
            sampler = _sampler(spec, decl.case, decl.guards, seed, _elimination(spec, decl.case))
            try:
                zt = is_zero(e, "symbolic", samples, tol)
            except InconclusiveError:
                zt = None
            if zt is not None and zt.zero:
                report.verdicts.append(OrderVerdict(label, zt.verdict.value, tolerance=tol))
                continue
            # not proved: probe with concrete profiles to obtain a witness
            probe = normalize(e).subs(_probe_functions(spec)).doit()
            zt = is_zero(probe, "numeric", samples, tol, sampler)
            report.verdicts.append(_verdict(label, zt, sampler, probe))
            report.notes.append(f"{label}: not reduced symbolically; probed with concrete profiles")
    report.elapsed = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------
# closed-form solutions
# ---------------------------------------------------------------------------

def _plug(spec: ProblemSpec, comps: dict, elim: dict, eps_value=None):
    """The equation with u replaced by its truncated expansion.

    Returns (full residual in ε, list of ε-coefficients, unperturbed
    residual of the leading component)."""
    space = spec.space()
    eps = space.epsilon
    prob = spec.problem()
    out_full, out_coeffs, out_unpert = [], [], []
    for delta in prob.equations:
        rep_full, rep_lead = {}, {}
        for s, c in space.coords_in(delta):
            if c.k is not None:
                raise ValueError("equations must be written in the unexpanded variable")
            dep = space.deps[c.alpha]
            u = sum(eps**k * comps[f"{dep}{k}"] for k in range(space.p + 1))
            lead = comps[f"{dep}0"]
            for i, n in enumerate(c.sigma):
                if n:
                    u = sp.diff(u, space.x[i], n)
                    lead = sp.diff(lead, space.x[i], n)
            rep_full[s], rep_lead[s] = u, lead
        full = delta.xreplace(rep_full).xreplace(elim)
        coeffs = []
        term = full
        for k in range(space.p + 1):
            coeffs.append(term.subs(eps, 0) / math.factorial(k))
            term = sp.diff(term, eps)
        out_full.append(full)
        out_coeffs.append(coeffs)
        out_unpert.append(delta.subs(eps, 0).xreplace(rep_lead).xreplace(elim))
    return out_full, out_coeffs, out_unpert


def _solution_components(spec: ProblemSpec, sol: Solution) -> dict:
    space = spec.space()
    comps = {}
    for d in space.deps:
        for k in range(space.p + 1):
            name = f"{d}{k}"
            if name not in sol.components:
                raise KeyError(f"solution {sol.name} lacks component {name}")
            comps[name] = sp.sympify(sol.components[name])
    return comps


def verify_solution(
    spec: ProblemSpec,
    sol: str | Solution,
    *,
    strategy: str = "auto",
    samples: int = 100,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> VerificationReport:
    """Residual coefficients e0..ep of the equation on a closed-form
    solution, under the case constraint.  The report also carries the
    unperturbed check: e0 equals the ε = 0 equation applied to u0."""
    t0 = time.perf_counter()
    sol = _lookup(spec.solutions, sol, "solution")
    comps = _solution_components(spec, sol)
    if any(function_nodes(c) for c in comps.values()):
        raise ValueError(f"solution {sol.name} is not in closed form")
    elim = _elimination(spec, sol.case)
    _, coeffs, unpert = _plug(spec, comps, elim)
    sampler = _sampler(spec, sol.case, sol.guards, seed)
    report = VerificationReport(
        "verify-solution", sol.name, samples=samples, tolerance=tol, seed=seed, expect=sol.expect
    )
    many = len(coeffs) > 1
    for j, cs in enumerate(coeffs):
        pre = f"eq{j}." if many else ""
        for k, c in enumerate(cs):
            zt = _zero(c, strategy, samples, tol, sampler)
            report.verdicts.append(_verdict(f"{pre}e{k}", zt, sampler, c))
        diff = cs[0] - unpert[j]
        zt = _zero(diff, strategy, samples, tol, sampler)
        report.verdicts.append(_verdict(f"{pre}e0-unperturbed", zt, sampler, diff))
    report.elapsed = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------
# figures and convergence
# ---------------------------------------------------------------------------

def _figure_values(spec: ProblemSpec, fig, overrides=None) -> dict:
    sol = spec.solutions[fig.solution]
    vals = {sp.Symbol(n): sp.sympify(e) for n, e in fig.values}
    for n, e in (overrides or {}).items():
        vals[sp.Symbol(n)] = sp.sympify(e)
    for s, e in _elimination(spec, sol.case).items():
        if s not in vals:
            vals[s] = sp.sympify(e).xreplace(vals)
    return {s: float(v) for s, v in vals.items()}


def _grid_spec(spec: ProblemSpec, fig, steps=None):
    by_var = {v: (float(lo), float(hi), int(n)) for v, lo, hi, n in fig.grids}
    variables, ranges, counts = [], [], []
    for v in spec.indep:
        lo, hi, n = by_var.get(v, (*map(float, spec.domains.get(v, (0, 1))), 11))
        variables.append(sp.Symbol(v))
        ranges.append((lo, hi))
        counts.append(n if steps is None else steps)
    return variables, ranges, counts


def figure_grid(spec: ProblemSpec, fig: str, steps=None):
    """Grid of u = u0 + eps*u1 for a figure's caption parameters.

    Returns (axes, values) with values indexed [t, x]."""
    fig = spec.figures[fig]
    sol = spec.solutions[fig.solution]
    comps = _solution_components(spec, sol)
    space = spec.space()
    d = space.deps[0]
    u = sum(space.epsilon**k * comps[f"{d}{k}"] for k in range(space.p + 1))
    values = _figure_values(spec, fig)
    variables, ranges, counts = _grid_spec(spec, fig, steps)
    ctx = numeval.EvalContext(values)
    axes, (grid,) = numeval.grid_values([u], variables, ranges, counts, ctx)
    return axes, grid


def figure_csv(spec: ProblemSpec, fig: str, steps=None) -> str:
    fig_ = spec.figures[fig]
    sol = spec.solutions[fig_.solution]
    comps = _solution_components(spec, sol)
    space = spec.space()
    d = space.deps[0]
    u = sum(space.epsilon**k * comps[f"{d}{k}"] for k in range(space.p + 1))
    variables, ranges, counts = _grid_spec(spec, fig_, steps)
    ctx = numeval.EvalContext(_figure_values(spec, fig_))
    return numeval.grid_emit([u], variables, ranges, counts, ctx)


@dataclass
class FigureSummary:
    name: str
    finite: bool
    variation_start: float
    variation_end: float
    caption: dict

    @property
    def damped(self) -> bool:
        return self.variation_end < self.variation_start


def figure_report(spec: ProblemSpec, fig: str) -> FigureSummary:
    """Finiteness, spatial variation at the first and last time, and the
    caption parameters recomputed from the case constraint."""
    _, grid = figure_grid(spec, fig)
    f = spec.figures[fig]
    values = _figure_values(spec, f)
    caption = {n: values[sp.Symbol(n)] for n, _ in f.captions}
    return FigureSummary(
        fig,
        bool(np.isfinite(grid).all()),
        float(np.ptp(grid[0])),
        float(np.ptp(grid[-1])),
        caption,
    )


@dataclass
class ConvergenceTable:
    solution: str
    eps: list
    residuals: list
    scaled_zero: float | None = None

    @property
    def ratios(self) -> list:
        return [a / b if b else math.inf for a, b in zip(self.residuals, self.residuals[1:])]

    @property
    def orders(self) -> list:
        out = []
        for (e1, e2), r in zip(zip(self.eps, self.eps[1:]), self.ratios):
            out.append(math.log(r) / math.log(e1 / e2) if r > 0 and math.isfinite(r) else math.nan)
        return out

    @property
    def constant(self) -> float:
        """Largest residual/eps^2 over the table."""
        return max(r / e**2 for r, e in zip(self.residuals, self.eps) if e)

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "kind": "convergence",
            "target": self.solution,
            "eps": self.eps,
            "residuals": self.residuals,
            "ratios": self.ratios,
            "orders": self.orders,
            "constant": self.constant,
            "scaled_zero": self.scaled_zero,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def epsilon_convergence(
    spec: ProblemSpec,
    fig: str,
    eps_list: Sequence[float] | None = None,
    steps=None,
) -> ConvergenceTable:
    """Max over the figure grid of the untruncated residual for each ε."""
    f = spec.figures[fig]
    sol = spec.solutions[f.solution]
    comps = _solution_components(spec, sol)
    space = spec.space()
    full, _, _ = _plug(spec, comps, {})
    values = _figure_values(spec, f)
    if eps_list is None:
        e = values[space.epsilon]
        eps_list = [e, e / 2]
    variables, ranges, counts = _grid_spec(spec, f, steps)
    residuals = []
    for e in eps_list:
        vals = dict(values)
        vals[space.epsilon] = float(e)
        ctx = numeval.EvalContext(vals)
        _, grids = numeval.grid_values(full, variables, ranges, counts, ctx)
        residuals.append(float(max(np.max(np.abs(g)) for g in grids)))
    # ε = 0 leaves the unperturbed residual of u0, which must vanish
    vals = dict(values)
    vals[space.epsilon] = 0.0
    axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(ranges, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    for v, m in zip(variables, mesh):
        vals[v] = m
    scaled = 0.0
    for e in full:
        val, mag, _ = numeval.evaluate(e, numeval.EvalContext(vals), track=True)
        scaled = max(scaled, float(np.max(np.abs(val) / (1.0 + mag))))
    return ConvergenceTable(sol.name, [float(e) for e in eps_list], residuals, scaled)


# ---------------------------------------------------------------------------
# mutations
# ---------------------------------------------------------------------------

_CONSTANT = re.compile(r"^k\d+$")


def _components(decl: GeneratorDecl):
    for kind, table in (("xi", decl.xi), ("eta", decl.eta)):
        for var, seeds in sorted(table.items()):
            for k, e in enumerate(seeds):
                yield kind, var, k, sp.sympify(e)


def mutations(spec: ProblemSpec, seed: int = 0, n: int = 10) -> list[GeneratorDecl]:
    """Seeded single-constant perturbations κ -> κ + 1 of fixture generators.

    Only constants shared by at least two seed components are perturbed,
    and only in one of them; a constant that occurs in a single component
    parametrizes a genuine symmetry and would survive the shift.
    """
    rng = random.Random(seed)
    pool = []
    for name in sorted(spec.generators):
        decl = spec.generators[name]
        if decl.expect != "pass":
            continue
        comps = list(_components(decl))
        where = {}
        for kind, var, k, e in comps:
            for s in e.free_symbols:
                if _CONSTANT.match(s.name):
                    where.setdefault(s, []).append((kind, var, k))
        for s in sorted(where, key=lambda s: s.name):
            if len(where[s]) >= 2:
                pool.extend((name, s, loc) for loc in where[s])
    if n > len(pool):
        raise ValueError(f"only {len(pool)} distinct mutations are available")
    out = []
    for name, s, (kind, var, k) in rng.sample(pool, n):
        decl = spec.generators[name]
        table = {v: list(t) for v, t in getattr(decl, kind).items()}
        table[var][k] = sp.sympify(table[var][k]).xreplace({s: s + 1})
        mutated = replace(
            decl,
            name=f"{name}:{s.name}+1@{kind}[{var}]{k}",
            expect="fail",
            **{kind: {v: tuple(t) for v, t in table.items()}},
        )
        out.append(mutated)
    return out
