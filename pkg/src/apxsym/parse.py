"""Reader and printer for the ``.apx`` problem language.

See docs/dsl.md for the grammar.  Parsing resolves every identifier while
reading: ``let`` bindings are substituted in place and the postfix ``_``
operator applies a total derivative, so the stored expressions are plain
sympy trees and ``parse(print(spec)) == spec`` holds structurally.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import sympy as sp

from .expr import fprime, hyp2f1, normalize, to_text
from .jet import JetSpace, total_derivative

__all__ = [
    "DSLSyntaxError",
    "UndeclaredSymbolError",
    "Equation",
    "Case",
    "GeneratorDecl",
    "Representation",
    "Solution",
    "Figure",
    "ProblemSpec",
    "parse_problem",
    "parse_expression",
    "print_problem",
    "load_problem",
]


class DSLSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int, expected=()):
        self.line, self.col = line, col
        self.expected = tuple(sorted(set(expected)))
        exp = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"line {line}, column {col}: {message}{exp}")


class UndeclaredSymbolError(DSLSyntaxError):
    def __init__(self, name: str, line: int, col: int):
        self.name = name
        super().__init__(f"undeclared symbol {name!r}", line, col)


# ---------------------------------------------------------------------------
# data model
# ---------------------------------------------------------------------------

@dataclass
class Equation:
    name: str | None
    lhs: sp.Expr
    rhs: sp.Expr

    @property
    def expr(self) -> sp.Expr:
        return self.lhs - self.rhs


@dataclass
class Guards:
    """Sampling information shared by cases, generators and solutions."""

    requires: list = field(default_factory=list)
    excludes: list = field(default_factory=list)
    domains: dict = field(default_factory=dict)


@dataclass
class Case:
    name: str
    constraints: list = field(default_factory=list)  # [(lhs, rhs)]
    solve: list = field(default_factory=list)  # symbol names
    guards: Guards = field(default_factory=Guards)

    def elimination(self) -> dict:
        """Bindings obtained by solving the constraints for ``solve``."""
        if not self.solve:
            return {}
        eqs = [normalize(l - r) for l, r in self.constraints]
        syms = [sp.Symbol(s) for s in self.solve]
        sol = sp.solve(eqs, syms, dict=True)
        if len(sol) != 1:
            raise ValueError(f"case {self.name}: constraints do not determine {self.solve} uniquely")
        return {k: normalize(v) for k, v in sol[0].items()}


@dataclass
class GeneratorDecl:
    name: str
    case: str | None = None
    xi: dict = field(default_factory=dict)  # var -> tuple of seeds
    eta: dict = field(default_factory=dict)  # dep -> tuple of seeds
    expect: str = "pass"
    lets: list = field(default_factory=list)
    guards: Guards = field(default_factory=Guards)


@dataclass
class Representation:
    name: str
    of: str
    lets: list = field(default_factory=list)  # [(name, expr)]
    components: dict = field(default_factory=dict)  # "u0" -> expr


@dataclass
class Solution:
    name: str
    case: str | None = None
    lets: list = field(default_factory=list)
    components: dict = field(default_factory=dict)
    guards: Guards = field(default_factory=Guards)
    expect: str = "pass"


@dataclass
class Figure:
    name: str
    solution: str | None = None
    values: list = field(default_factory=list)  # [(name, expr)]
    captions: list = field(default_factory=list)  # [(name, expr)]
    grids: list = field(default_factory=list)  # [(var, lo, hi, n)]


@dataclass
class ProblemSpec:
    indep: tuple = ()
    deps: tuple = ()
    small: str | None = None
    order: int = 1
    params: tuple = ()
    funcs: tuple = ()
    equations: list = field(default_factory=list)
    domains: dict = field(default_factory=dict)
    cases: dict = field(default_factory=dict)
    generators: dict = field(default_factory=dict)
    representations: dict = field(default_factory=dict)
    solutions: dict = field(default_factory=dict)
    figures: dict = field(default_factory=dict)

    def space(self) -> JetSpace:
        return JetSpace(tuple(self.indep), tuple(self.deps), self.order, self.small or "eps")

    def problem(self):
        from .detsys import Problem

        return Problem(self.space(), tuple(normalize(e.expr) for e in self.equations))

    def case_of(self, name: str | None) -> Case | None:
        if name is None:
            return None
        if name not in self.cases:
            raise KeyError(f"unknown case {name!r}")
        return self.cases[name]


# ---------------------------------------------------------------------------
# lexer
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<num>\d+(?:\.\d+)?|\.\d+)
  | (?P<ident>[A-Za-z][A-Za-z0-9]*)
  | (?P<op>\*\*|!=|[-+*/^()\[\]{},;:=_'<>])
    """,
    re.VERBOSE,
)
_NAME = re.compile(r"[A-Za-z][A-Za-z0-9_.\-]*")


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | op | eof
    text: str
    pos: int
    line: int
    col: int


class Lexer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self._peeked: Token | None = None
        self.last: Token | None = None
        self._line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def where(self, pos: int) -> tuple[int, int]:
        lo, hi = 0, len(self._line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self._line_starts[mid] <= pos:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1, pos - self._line_starts[lo] + 1

    def _scan(self) -> Token:
        while True:
            if self.pos >= len(self.text):
                line, col = self.where(len(self.text))
                return Token("eof", "", self.pos, line, col)
            m = _TOKEN.match(self.text, self.pos)
            if not m:
                line, col = self.where(self.pos)
                raise DSLSyntaxError(f"unexpected character {self.text[self.pos]!r}", line, col)
            start = self.pos
            self.pos = m.end()
            if m.lastgroup == "ws":
                continue
            line, col = self.where(start)
            return Token(m.lastgroup, m.group(), start, line, col)

    def peek(self) -> Token:
        if self._peeked is None:
            self._peeked = self._scan()
        return self._peeked

    def next(self) -> Token:
        tok = self.peek()
        self._peeked = None
        if tok.kind != "eof":
            self.last = tok
        return tok

    def adjacent(self) -> bool:
        """True when the peeked token touches the previous one."""
        tok = self.peek()
        return self.last is not None and tok.pos == self.last.pos + len(self.last.text)

    def name(self) -> Token:
        """Read a block name (letters, digits, ``_ . -``) at the cursor."""
        if self._peeked is not None:
            self.pos = self._peeked.pos
            self._peeked = None
        while self.pos < len(self.text):
            m = _TOKEN.match(self.text, self.pos)
            if m and m.lastgroup == "ws":
                self.pos = m.end()
            else:
                break
        m = _NAME.match(self.text, self.pos)
        if not m:
            tok = self.peek()
            raise _unexpected(self, tok, {"<name>"})
        line, col = self.where(m.start())
        self.pos = m.end()
        tok = Token("name", m.group(), m.start(), line, col)
        self.last = tok
        return tok


def _unexpected(lex: Lexer, tok: Token, expected) -> DSLSyntaxError:
    if tok.kind == "eof":
        at = lex.last or tok
        return DSLSyntaxError(f"unexpected end of input after {at.text!r}", at.line, at.col, expected)
    return DSLSyntaxError(f"unexpected {tok.text!r}", tok.line, tok.col, expected)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_BUILTINS_1: dict[str, Callable] = {
    "exp": sp.exp,
    "log": sp.log,
    "sin": sp.sin,
    "cos": sp.cos,
    "sqrt": sp.sqrt,
    "erfi": sp.erfi,
}
_KEYWORDS = {
    "indep", "dep", "small", "order", "param", "func", "equation", "domain",
    "case", "constraint", "solve", "require", "exclude", "generator", "xi",
    "eta", "expect", "representation", "of", "let", "solution", "figure",
    "values", "caption", "grid",
}
_TOP = ("indep", "dep", "small", "param", "func", "equation", "domain",
        "case", "generator", "representation", "solution", "figure")


class Parser:
    def __init__(self, text: str):
        self.lex = Lexer(text)
        self.spec = ProblemSpec()
        self.locals: dict[str, sp.Expr] = {}
        self.jet_context = True

    # -- token helpers ------------------------------------------------------
    def expect(self, text: str) -> Token:
        tok = self.lex.peek()
        if tok.text != text or tok.kind not in ("op", "ident"):
            raise _unexpected(self.lex, tok, {repr(text)})
        return self.lex.next()

    def accept(self, text: str) -> bool:
        tok = self.lex.peek()
        if tok.text == text and tok.kind in ("op", "ident"):
            self.lex.next()
            return True
        return False

    def ident(self) -> Token:
        tok = self.lex.peek()
        if tok.kind != "ident":
            raise _unexpected(self.lex, tok, {"<identifier>"})
        return self.lex.next()

    def integer(self) -> int:
        tok = self.lex.peek()
        if tok.kind != "num" or "." in tok.text:
            raise _unexpected(self.lex, tok, {"<integer>"})
        return int(self.lex.next().text)

    # -- statements ---------------------------------------------------------
    def parse(self) -> ProblemSpec:
        while True:
            tok = self.lex.peek()
            if tok.kind == "eof":
                return self.spec
            if tok.kind != "ident" or tok.text not in _TOP:
                raise _unexpected(self.lex, tok, set(_TOP))
            getattr(self, f"stmt_{tok.text}")()

    def _names(self) -> tuple:
        self.lex.next()
        out = [self.ident()]
        while self.lex.peek().kind == "ident":
            out.append(self.lex.next())
        self.expect(";")
        for t in out:
            if t.text in _KEYWORDS or t.text in _BUILTINS_1 or t.text in ("diff", "hyp2f1", "pi"):
                raise DSLSyntaxError(f"reserved word {t.text!r} cannot be declared", t.line, t.col)
        return tuple(t.text for t in out)

    def stmt_indep(self):
        names = self._names()
        for n in names:
            if len(n) != 1:
                tok = self.lex.last
                raise DSLSyntaxError(f"independent variable {n!r} must be a single letter", tok.line, tok.col)
        self.spec.indep += names

    def stmt_dep(self):
        self.spec.deps += self._names()

    def stmt_param(self):
        self.spec.params += self._names()

    def stmt_func(self):
        self.spec.funcs += self._names()

    def stmt_small(self):
        self.lex.next()
        self.spec.small = self.ident().text
        self.expect("order")
        self.spec.order = self.integer()
        self.expect(";")

    def stmt_equation(self):
        self.lex.next()
        name = None
        save = (self.lex.pos, self.lex._peeked, self.lex.last)
        tok = self.lex.peek()
        if tok.kind == "ident":
            nt = self.lex.name()
            if self.lex.peek().text == ":":
                self.lex.next()
                name = nt.text
            else:
                self.lex.pos, self.lex._peeked, self.lex.last = save
        self.jet_context = True
        lhs = self.expr()
        self.expect("=")
        rhs = self.expr()
        self.expect(";")
        self.spec.equations.append(Equation(name, lhs, rhs))

    def _domain(self, target: dict):
        self.lex.next()
        var = self.ident()
        self._check_declared(var)
        self.expect("(")
        lo = self.expr()
        self.expect(",")
        hi = self.expr()
        self.expect(")")
        self.expect(";")
        target[var.text] = (lo, hi)

    def stmt_domain(self):
        self._domain(self.spec.domains)

    def _guard(self, g: Guards) -> bool:
        tok = self.lex.peek()
        if tok.text == "require":
            self.lex.next()
            g.requires.append(self.expr())
            self.expect(">")
            self._zero()
            self.expect(";")
            return True
        if tok.text == "exclude":
            self.lex.next()
            g.excludes.append(self.expr())
            self.expect("=")
            self._zero()
            self.expect(";")
            return True
        if tok.text == "domain":
            self._domain(g.domains)
            return True
        return False

    def _zero(self):
        tok = self.lex.peek()
        if tok.text != "0":
            raise _unexpected(self.lex, tok, {"'0'"})
        self.lex.next()

    def _block(self, handlers: dict, guards: Guards | None = None):
        self.expect("{")
        while not self.accept("}"):
            tok = self.lex.peek()
            if guards is not None and self._guard(guards):
                continue
            if tok.kind == "ident" and tok.text in handlers:
                handlers[tok.text]()
                continue
            if "*" in handlers and tok.kind == "ident":
                handlers["*"]()
                continue
            exp = set(handlers) - {"*"} | ({"require", "exclude", "domain"} if guards else set()) | {"'}'"}
            if "*" in handlers:
                exp.add("<component>")
            raise _unexpected(self.lex, tok, exp)

    def _block_name(self, table: dict) -> str:
        tok = self.lex.name()
        if tok.text in table:
            raise DSLSyntaxError(f"duplicate name {tok.text!r}", tok.line, tok.col)
        return tok.text

    def _ref(self) -> str:
        self.lex.next()
        name = self.lex.name().text
        self.expect(";")
        return name

    def stmt_case(self):
        self.lex.next()
        case = Case(self._block_name(self.spec.cases))
        self.locals, self.jet_context = {}, False

        def constraint():
            self.lex.next()
            lhs = self.expr()
            self.expect("=")
            rhs = self.expr()
            self.expect(";")
            case.constraints.append((lhs, rhs))

        def solve():
            self.lex.next()
            v = self.ident()
            self._check_declared(v)
            self.expect(";")
            case.solve.append(v.text)

        self._block({"constraint": constraint, "solve": solve}, case.guards)
        self.spec.cases[case.name] = case

    def _tuple(self) -> tuple:
        self.expect("(")
        items = [self.expr()]
        while self.accept(","):
            items.append(self.expr())
        self.expect(")")
        if len(items) != self.spec.order + 1:
            tok = self.lex.last
            raise DSLSyntaxError(
                f"expected {self.spec.order + 1} graded components, got {len(items)}", tok.line, tok.col
            )
        return tuple(items)

    def stmt_generator(self):
        self.lex.next()
        gen = GeneratorDecl(self._block_name(self.spec.generators))
        self.locals, self.jet_context = {}, True

        def component(kind: str, names: tuple, target: dict):
            def run():
                self.lex.next()
                self.expect("[")
                v = self.ident()
                if v.text not in names:
                    raise DSLSyntaxError(f"{v.text!r} is not declared for {kind}", v.line, v.col)
                self.expect("]")
                self.expect("=")
                target[v.text] = self._tuple()
                self.expect(";")

            return run

        def case():
            gen.case = self._ref()

        self._block(
            {
                "case": case,
                "let": self._let(gen.lets),
                "xi": component("xi", self.spec.indep, gen.xi),
                "eta": component("eta", self.spec.deps, gen.eta),
                "expect": self._expect(gen),
            },
            gen.guards,
        )
        self.spec.generators[gen.name] = gen

    def _expect(self, target):
        def run():
            self.lex.next()
            tok = self.ident()
            if tok.text not in ("pass", "fail"):
                raise DSLSyntaxError("expected 'pass' or 'fail'", tok.line, tok.col, {"pass", "fail"})
            target.expect = tok.text
            self.expect(";")

        return run

    def _let(self, lets: list):
        def run():
            self.lex.next()
            v = self.ident()
            self.expect("=")
            val = self.expr()
            self.expect(";")
            lets.append((v.text, val))
            self.locals[v.text] = val

        return run

    def _component(self, comps: dict):
        def run():
            v = self.ident()
            space = self.spec.space()
            c = space.decode(sp.Symbol(v.text))
            if c is None or c.k is None or c.order:
                raise DSLSyntaxError(f"{v.text!r} is not a graded dependent variable", v.line, v.col)
            self.expect("=")
            comps[v.text] = self.expr()
            self.expect(";")

        return run

    def stmt_representation(self):
        self.lex.next()
        rep_name = self._block_name(self.spec.representations)
        self.expect("of")
        of = self.lex.name().text
        rep = Representation(rep_name, of)
        self.locals, self.jet_context = {}, False
        self._block({"let": self._let(rep.lets), "*": self._component(rep.components)})
        self.spec.representations[rep.name] = rep

    def stmt_solution(self):
        self.lex.next()
        sol = Solution(self._block_name(self.spec.solutions))
        self.locals, self.jet_context = {}, False

        def case():
            sol.case = self._ref()

        self._block(
            {
                "case": case,
                "let": self._let(sol.lets),
                "expect": self._expect(sol),
                "*": self._component(sol.components),
            },
            sol.guards,
        )
        self.spec.solutions[sol.name] = sol

    def stmt_figure(self):
        self.lex.next()
        fig = Figure(self._block_name(self.spec.figures))
        self.locals, self.jet_context = {}, False

        def solution():
            fig.solution = self._ref()

        def assignments(target: list):
            def run():
                self.lex.next()
                while True:
                    v = self.ident()
                    self._check_declared(v)
                    self.expect("=")
                    target.append((v.text, self.expr()))
                    if not self.accept(","):
                        break
                self.expect(";")

            return run

        def grid():
            self.lex.next()
            v = self.ident()
            if v.text not in self.spec.indep:
                raise DSLSyntaxError(f"{v.text!r} is not an independent variable", v.line, v.col)
            lo = self.expr()
            self.expect(",")
            hi = self.expr()
            self.expect(",")
            n = self.integer()
            self.expect(";")
            fig.grids.append((v.text, lo, hi, n))

        self._block(
            {
                "solution": solution,
                "values": assignments(fig.values),
                "caption": assignments(fig.captions),
                "grid": grid,
            }
        )
        self.spec.figures[fig.name] = fig

    # -- expressions --------------------------------------------------------
    def _check_declared(self, tok: Token):
        if tok.text not in self.spec.params and tok.text not in self.spec.indep and tok.text != self.spec.small:
            raise UndeclaredSymbolError(tok.text, tok.line, tok.col)

    def expr(self) -> sp.Expr:
        terms = [self.term()]
        while True:
            tok = self.lex.peek()
            if tok.text == "+" and tok.kind == "op":
                self.lex.next()
                terms.append(self.term())
            elif tok.text == "-" and tok.kind == "op":
                self.lex.next()
                terms.append(-self.term())
            else:
                return sp.Add(*terms)

    # Products are assembled with a single n-ary Mul so that the result does
    # not depend on factor order (a two-factor Number*Add distributes).
    def term(self) -> sp.Expr:
        factors = self._factors()
        while True:
            tok = self.lex.peek()
            if tok.text == "*" and tok.kind == "op":
                self.lex.next()
                factors += self._factors()
            elif tok.text == "/" and tok.kind == "op":
                self.lex.next()
                d = self.unary()
                if d == 0:
                    raise DSLSyntaxError("division by zero", tok.line, tok.col)
                factors.append(1 / d)
            else:
                return sp.Mul(*factors)

    def _factors(self) -> list:
        tok = self.lex.peek()
        if tok.kind == "op" and tok.text == "-":
            self.lex.next()
            return [sp.S.NegativeOne, *self._factors()]
        if tok.kind == "op" and tok.text == "+":
            self.lex.next()
            return self._factors()
        return [self.power()]

    def unary(self) -> sp.Expr:
        return sp.Mul(*self._factors())

    def power(self) -> sp.Expr:
        base = self.postfix()
        tok = self.lex.peek()
        if tok.kind == "op" and tok.text in ("^", "**"):
            self.lex.next()
            return base ** self.unary()
        return base

    def postfix(self) -> sp.Expr:
        e = self.primary()
        while self.lex.peek().text == "_" and self.lex.adjacent():
            self.lex.next()
            if self.accept("{"):
                letters = self.ident()
                self.expect("}")
            else:
                letters = self.ident()
            space = self.spec.space()
            for ch in letters.text:
                if ch not in self.spec.indep:
                    raise DSLSyntaxError(
                        f"{ch!r} is not an independent variable", letters.line, letters.col,
                        set(self.spec.indep),
                    )
                e = total_derivative(e, self.spec.indep.index(ch), space)
            e = normalize(e)
        return e

    def _args(self) -> list:
        self.expect("(")
        args = [self.expr()]
        while self.accept(","):
            args.append(self.expr())
        self.expect(")")
        return args

    def primary(self) -> sp.Expr:
        tok = self.lex.peek()
        if tok.kind == "num":
            self.lex.next()
            return sp.Rational(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.lex.next()
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind != "ident":
            raise _unexpected(self.lex, tok, {"<number>", "<identifier>", "'('", "'-'"})
        self.lex.next()
        name = tok.text
        nxt = self.lex.peek()
        if nxt.text == "'" and self.lex.adjacent():
            order = 0
            while self.lex.peek().text == "'" and self.lex.adjacent():
                self.lex.next()
                order += 1
            if name not in self.spec.funcs:
                raise UndeclaredSymbolError(name, tok.line, tok.col)
            args = self._args()
            if len(args) != 1:
                raise DSLSyntaxError("primes apply to one-argument functions only", tok.line, tok.col)
            return fprime(sp.Function(name), args[0], order)
        if nxt.text == "(" and nxt.kind == "op" and (
            name in _BUILTINS_1 or name in ("diff", "hyp2f1") or name in self.spec.funcs
        ):
            args = self._args()
            if name in _BUILTINS_1:
                if len(args) != 1:
                    raise DSLSyntaxError(f"{name} takes one argument", tok.line, tok.col)
                return _BUILTINS_1[name](args[0])
            if name == "hyp2f1":
                if len(args) != 4:
                    raise DSLSyntaxError("hyp2f1 takes four arguments", tok.line, tok.col)
                return hyp2f1(*args)
            if name == "diff":
                if len(args) < 2 or not all(isinstance(a, sp.Symbol) for a in args[1:]):
                    raise DSLSyntaxError("diff(expr, var, ...) needs atom variables", tok.line, tok.col)
                return sp.diff(args[0], *args[1:])
            return sp.Function(name)(*args)
        return self._symbol(tok)

    def _symbol(self, tok: Token) -> sp.Expr:
        name = tok.text
        if name in self.locals:
            return self.locals[name]
        if name == "pi":
            return sp.pi
        spec = self.spec
        if name in spec.params or name in spec.indep or name == spec.small:
            return sp.Symbol(name)
        if spec.deps and self.jet_context:
            c = spec.space().decode(sp.Symbol(name))
            if c is not None and c.order == 0 and (c.k is None or spec.small is not None):
                return sp.Symbol(name)
        raise UndeclaredSymbolError(name, tok.line, tok.col)


def parse_problem(text: str) -> ProblemSpec:
    return Parser(text).parse()


def load_problem(path) -> ProblemSpec:
    return parse_problem(Path(path).read_text(encoding="utf-8"))


def parse_expression(text: str, spec: ProblemSpec | None = None, jets: bool = True) -> sp.Expr:
    """Parse a single expression against the declarations of ``spec``."""
    p = Parser(text)
    if spec is not None:
        p.spec = spec
    p.jet_context = jets
    e = p.expr()
    tok = p.lex.peek()
    if tok.kind != "eof":
        raise _unexpected(p.lex, tok, {"<end of input>", "'+'", "'-'", "'*'", "'/'", "'^'"})
    return e


# ---------------------------------------------------------------------------
# printer
# ---------------------------------------------------------------------------

HEADER = "# apxsym problem"


def _guards_text(g: Guards, indent: str) -> list[str]:
    out = [f"{indent}require {to_text(e)} > 0;" for e in g.requires]
    out += [f"{indent}exclude {to_text(e)} = 0;" for e in g.excludes]
    out += [f"{indent}domain {v} ({to_text(lo)}, {to_text(hi)});" for v, (lo, hi) in g.domains.items()]
    return out


def _tuple_text(items) -> str:
    return "(" + ", ".join(to_text(e) for e in items) + ")"


def print_problem(spec: ProblemSpec) -> str:
    """Deterministic text that reparses to an equal ProblemSpec."""
    out = [HEADER]
    if spec.indep:
        out.append("indep " + " ".join(spec.indep) + ";")
    if spec.deps:
        out.append("dep " + " ".join(spec.deps) + ";")
    if spec.small is not None:
        out.append(f"small {spec.small} order {spec.order};")
    if spec.params:
        out.append("param " + " ".join(spec.params) + ";")
    if spec.funcs:
        out.append("func " + " ".join(spec.funcs) + ";")
    for eq in spec.equations:
        label = f"{eq.name}: " if eq.name else ""
        out.append(f"equation {label}{to_text(eq.lhs)} = {to_text(eq.rhs)};")
    for v, (lo, hi) in spec.domains.items():
        out.append(f"domain {v} ({to_text(lo)}, {to_text(hi)});")
    for c in spec.cases.values():
        out.append("")
        out.append(f"case {c.name} {{")
        out += [f"  constraint {to_text(l)} = {to_text(r)};" for l, r in c.constraints]
        out += [f"  solve {s};" for s in c.solve]
        out += _guards_text(c.guards, "  ")
        out.append("}")
    for g in spec.generators.values():
        out.append("")
        out.append(f"generator {g.name} {{")
        if g.case:
            out.append(f"  case {g.case};")
        if g.expect != "pass":
            out.append(f"  expect {g.expect};")
        out += [f"  let {n} = {to_text(e)};" for n, e in g.lets]
        out += [f"  xi[{v}] = {_tuple_text(t)};" for v, t in g.xi.items()]
        out += [f"  eta[{d}] = {_tuple_text(t)};" for d, t in g.eta.items()]
        out += _guards_text(g.guards, "  ")
        out.append("}")
    for r in spec.representations.values():
        out.append("")
        out.append(f"representation {r.name} of {r.of} {{")
        out += [f"  let {n} = {to_text(e)};" for n, e in r.lets]
        out += [f"  {n} = {to_text(e)};" for n, e in r.components.items()]
        out.append("}")
    for s in spec.solutions.values():
        out.append("")
        out.append(f"solution {s.name} {{")
        if s.case:
            out.append(f"  case {s.case};")
        if s.expect != "pass":
            out.append(f"  expect {s.expect};")
        out += [f"  let {n} = {to_text(e)};" for n, e in s.lets]
        out += [f"  {n} = {to_text(e)};" for n, e in s.components.items()]
        out += _guards_text(s.guards, "  ")
        out.append("}")
    for f in spec.figures.values():
        out.append("")
        out.append(f"figure {f.name} {{")
        if f.solution:
            out.append(f"  solution {f.solution};")
        if f.values:
            out.append("  values " + ", ".join(f"{n} = {to_text(e)}" for n, e in f.values) + ";")
        if f.captions:
            out.append("  caption " + ", ".join(f"{n} = {to_text(e)}" for n, e in f.captions) + ";")
        out += [f"  grid {v} {to_text(lo)}, {to_text(hi)}, {n};" for v, lo, hi, n in f.grids]
        out.append("}")
    return "\n".join(out) + "\n"
