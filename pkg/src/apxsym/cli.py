"""Command-line front end.

Exit codes: 0 when every check passes, 1 when a verification fails (the
report is still written), 2 on parse or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from . import numeval
from .detsys import CyclicRulesError, DegenerateAnsatzError, NonPolynomialError, derive_determining
from .expr import DEFAULT_TOL, InconclusiveError
from .parse import DSLSyntaxError, ProblemSpec, UndeclaredSymbolError, parse_problem
from .verify import (
    check_determining,
    check_isc,
    check_symmetry,
    epsilon_convergence,
    figure_csv,
    figure_grid,
    verify_solution,
)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
MODES = ("lie", "q-conditional")


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    path: str
    target: str | None = None
    mode: str = "q-conditional"
    order: int | None = None
    tol: float = DEFAULT_TOL
    samples: int = 100
    seed: int = 0
    json: str | None = None
    csv: str | None = None
    svg: str | None = None

    def __post_init__(self):
        if self.tol <= 0:
            raise ConfigError("tolerance must be positive")
        if self.order is not None and self.order < 0:
            raise ConfigError("order must be non-negative")
        if self.samples < 1:
            raise ConfigError("sample count must be positive")


def resolve_input(path: str) -> str:
    """Read a problem file, falling back to the bundled fixtures by name."""
    p = Path(path)
    if p.exists():
        return p.read_text()
    root = resources.files("apxsym") / "fixtures"
    for name in (path, f"{path}.apx"):
        cand = root / name
        if cand.is_file():
            return cand.read_text()
    raise ConfigError(f"no such problem file or bundled fixture: {path}")


def _load(cfg: RunConfig) -> ProblemSpec:
    spec = parse_problem(resolve_input(cfg.path))
    if cfg.order is not None and cfg.order != spec.order:
        if cfg.command != "derive-determining":
            raise ConfigError(f"fixture declares order {spec.order}; --order {cfg.order} only applies to derive-determining")
        spec = replace(spec, order=cfg.order, generators={}, representations={}, solutions={}, figures={})
    return spec


def _require(cfg: RunConfig, table: dict, what: str):
    if cfg.target is None:
        raise ConfigError(f"--{what} is required")
    if cfg.target not in table:
        raise ConfigError(f"unknown {what} {cfg.target!r}; available: {', '.join(sorted(table))}")
    return cfg.target


def _write(path: str | None, text: str):
    if path is None:
        return
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _summary(report) -> str:
    lines = [f"{report.kind} {report.target}: {'PASS' if report.passed else 'FAIL'}"]
    for v in report.verdicts:
        line = f"  {v.label}: {v.verdict}"
        if not v.zero:
            line += f" (residual {v.residual:.3g})"
        lines.append(line)
    lines.extend(f"  note: {n}" for n in report.notes)
    return "\n".join(lines)


def _finish(cfg: RunConfig, report) -> int:
    _write(cfg.json, report.dumps())
    print(_summary(report), file=sys.stderr)
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_derive(cfg: RunConfig, spec: ProblemSpec) -> int:
    if cfg.target is not None:
        _require(cfg, spec.generators, "set")
        report = check_determining(spec, cfg.target, cfg.mode, samples=cfg.samples, tol=cfg.tol, seed=cfg.seed)
        return _finish(cfg, report)
    system = derive_determining(spec.problem(), cfg.mode)
    if cfg.json:
        payload = {"schema": 1, "kind": "determining-system", "mode": cfg.mode, "equations": system.to_json()}
        _write(cfg.json, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(system.to_dsl())
    print(f"{len(system)} determining equations ({cfg.mode})", file=sys.stderr)
    return EXIT_PASS


def cmd_symmetry(cfg: RunConfig, spec: ProblemSpec) -> int:
    _require(cfg, spec.generators, "set")
    report = check_symmetry(spec, cfg.target, cfg.mode, samples=cfg.samples, tol=cfg.tol, seed=cfg.seed)
    return _finish(cfg, report)


def cmd_isc(cfg: RunConfig, spec: ProblemSpec) -> int:
    _require(cfg, spec.representations, "rep")
    rep = spec.representations[cfg.target]
    report = check_isc(spec, rep.of, rep, samples=cfg.samples, tol=cfg.tol, seed=cfg.seed)
    return _finish(cfg, report)


def cmd_solution(cfg: RunConfig, spec: ProblemSpec) -> int:
    _require(cfg, spec.solutions, "solution")
    report = verify_solution(spec, cfg.target, samples=cfg.samples, tol=cfg.tol, seed=cfg.seed)
    return _finish(cfg, report)


def cmd_convergence(cfg: RunConfig, spec: ProblemSpec, eps: list | None) -> int:
    _require(cfg, spec.figures, "figure")
    table = epsilon_convergence(spec, cfg.target, eps)
    _write(cfg.json or "-", table.dumps())
    for e, r in zip(table.eps, table.residuals):
        print(f"  eps={e:g}: max residual {r:.6g}", file=sys.stderr)
    print(f"  ratios {['%.4g' % r for r in table.ratios]}, fitted orders {['%.3g' % o for o in table.orders]}",
          file=sys.stderr)
    return EXIT_PASS


def cmd_grid(cfg: RunConfig, spec: ProblemSpec) -> int:
    _require(cfg, spec.figures, "figure")
    _write(cfg.csv or "-", figure_csv(spec, cfg.target))
    if cfg.svg:
        _, values = figure_grid(spec, cfg.target)
        # rows of the heatmap run along x, columns along t
        _write(cfg.svg, numeval.svg_heatmap(values.T))
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apxsym", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, target=None):
        p.add_argument("path", help="problem file or bundled fixture name (rdc, telegraph)")
        if target:
            p.add_argument(f"--{target}", dest="target", metavar="NAME")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--json", metavar="PATH", help="write the JSON report ('-' for stdout)")

    def sampling(p):
        p.add_argument("--samples", type=int, default=100)
        p.add_argument("--tol", type=float, default=DEFAULT_TOL)

    p = sub.add_parser("derive-determining", help="print the determining system")
    common(p, "set")
    sampling(p)
    p.add_argument("--mode", choices=MODES, default="lie")
    p.add_argument("--order", type=int, help="truncation order in the small parameter")

    p = sub.add_parser("check-symmetry", help="test a generator against the restricted invariance condition")
    common(p, "set")
    sampling(p)
    p.add_argument("--mode", choices=MODES, default="q-conditional")

    p = sub.add_parser("check-isc", help="test a representation against its invariant surface condition")
    common(p, "rep")
    sampling(p)

    p = sub.add_parser("verify-solution", help="test a closed-form solution against the equation")
    common(p, "solution")
    sampling(p)

    p = sub.add_parser("convergence", help="untruncated residual versus the small parameter")
    common(p, "figure")
    p.add_argument("--eps", type=float, nargs="+", help="values of the small parameter (default: eps, eps/2)")

    p = sub.add_parser("grid", help="emit figure data as CSV (and optionally SVG)")
    common(p, "figure")
    p.add_argument("--csv", metavar="PATH", help="CSV output path (default stdout)")
    p.add_argument("--svg", metavar="PATH", help="SVG heatmap output path")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(
            command=args.command,
            path=args.path,
            target=args.target,
            mode=getattr(args, "mode", "q-conditional"),
            order=getattr(args, "order", None),
            tol=getattr(args, "tol", DEFAULT_TOL),
            samples=getattr(args, "samples", 100),
            seed=args.seed,
            json=args.json,
            csv=getattr(args, "csv", None),
            svg=getattr(args, "svg", None),
        )
        spec = _load(cfg)
        if cfg.command == "derive-determining":
            return cmd_derive(cfg, spec)
        if cfg.command == "check-symmetry":
            return cmd_symmetry(cfg, spec)
        if cfg.command == "check-isc":
            return cmd_isc(cfg, spec)
        if cfg.command == "verify-solution":
            return cmd_solution(cfg, spec)
        if cfg.command == "convergence":
            return cmd_convergence(cfg, spec, args.eps)
        return cmd_grid(cfg, spec)
    except (DSLSyntaxError, UndeclaredSymbolError) as exc:
        print(f"{args.path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, DegenerateAnsatzError, CyclicRulesError, NonPolynomialError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InconclusiveError, numeval.DomainError) as exc:
        print(f"verification could not complete: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
