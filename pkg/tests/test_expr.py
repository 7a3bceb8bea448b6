from __future__ import annotations

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from apxsym import numeval
from apxsym.expr import (
    InconclusiveError,
    NotAnAtomError,
    Sampler,
    Verdict,
    differentiate,
    hyp2f1,
    is_zero,
    normalize,
    substitute,
    to_text,
)

t, x, y, u, eps = sp.symbols("t x y u eps")
alpha, beta, gamma, delta, theta = sp.symbols("alpha beta gamma delta theta")
u0, u1 = sp.symbols("u0 u1")

ATOMS = [t, x, y, alpha, beta]


def polys(depth=3):
    leaf = st.one_of(
        st.sampled_from(ATOMS),
        st.fractions(min_value=-5, max_value=5, max_denominator=7).map(sp.Rational),
    )
    return st.recursive(
        leaf,
        lambda inner: st.one_of(
            st.tuples(inner, inner).map(lambda p: p[0] + p[1]),
            st.tuples(inner, inner).map(lambda p: p[0] * p[1]),
            st.tuples(inner, st.integers(0, 3)).map(lambda p: p[0] ** p[1]),
        ),
        max_leaves=8,
    )


def smooth(depth=3):
    """Polynomials wrapped in exp/sin/cos, safe everywhere."""
    base = polys()
    return st.one_of(
        base,
        base.map(sp.exp),
        base.map(sp.sin),
        st.tuples(base, base).map(lambda p: p[0] * sp.cos(p[1])),
    )


# --- normalize ---------------------------------------------------------------

def test_additive_identity():
    assert normalize(x + 0 * y) == x


def test_distributivity_cancels():
    assert normalize(u * (1 - gamma * u) - (u - gamma * u**2)) == 0


def test_exponent_law():
    e = sp.exp(beta * t) * sp.exp(-beta * t - alpha * x / 2)
    assert normalize(e) == normalize(sp.exp(-alpha * x / 2))


def test_log_of_exp():
    assert normalize(sp.log(sp.exp(alpha * x))) == alpha * x


def test_rationals_stay_exact():
    e = normalize(sp.Rational(1, 3) + sp.Rational(1, 6) * x - x / 6)
    assert e == sp.Rational(1, 3)
    assert not e.atoms(sp.Float)


@settings(max_examples=150, deadline=None)
@given(smooth())
def test_normalize_idempotent(e):
    n = normalize(e)
    assert normalize(n) == n


@settings(max_examples=100, deadline=None)
@given(polys(), polys())
def test_normalize_congruence(a, b):
    assert normalize(a + b) == normalize(normalize(a) + normalize(b))


# --- differentiate -------------------------------------------------------------

def test_chain_rule_sin():
    assert normalize(differentiate(sp.sin(delta * x), x) - delta * sp.cos(delta * x)) == 0


def test_non_atom_rejected():
    with pytest.raises(NotAnAtomError):
        differentiate(x**2, x + y)


def test_sqrt_rule():
    z = sp.Symbol("z", positive=True)
    f = sp.Function("f")(x)
    d = differentiate(sp.sqrt(f), x)
    assert normalize(d - sp.diff(f, x) / (2 * sp.sqrt(f))) == 0
    assert normalize(differentiate(sp.sqrt(z), z) - 1 / (2 * sp.sqrt(z))) == 0


def test_hyp2f1_derivative_rule():
    a, b, c, z = sp.symbols("a b c z")
    d = differentiate(hyp2f1(a, b, c, z * x), x)
    expected = a * b / c * hyp2f1(a + 1, b + 1, c + 1, z * x) * z
    assert normalize(d - expected) == 0


def test_hyp2f1_derivative_matches_series():
    z = sp.Symbol("z")
    d = differentiate(hyp2f1(sp.Rational(1, 2), 1, 2, z), z)
    got = numeval.eval_expr(d, numeval.EvalContext({z: 0.1}))
    # term-by-term derivative of the series: sum_k k (a)_k (b)_k / ((c)_k k!) z^(k-1)
    acc, term = 0.0, 1.0
    for k in range(1, 200):
        term *= (0.5 + k - 1) * (1 + k - 1) / ((2 + k - 1) * k)
        acc += k * term * 0.1 ** (k - 1)
    assert abs(got - acc) < 1e-12


def test_erfi_derivative_rule():
    d = differentiate(sp.erfi(sp.sqrt(alpha * x) / 2), x)
    a_pos, x_pos = sp.symbols("a_pos x_pos", positive=True)
    closed = sp.sqrt(a_pos / (sp.pi * x_pos)) * sp.exp(a_pos * x_pos / 4) / 2
    d_pos = d.xreplace({alpha: a_pos, x: x_pos})
    for av, xv in [(1.3, 0.7), (2.0, 2.5), (0.4, 4.0)]:
        ctx = numeval.EvalContext({a_pos: av, x_pos: xv})
        got = numeval.eval_expr(d_pos, ctx)
        assert got == pytest.approx(numeval.eval_expr(closed, ctx), rel=1e-12)
        h = 1e-5
        fd = (numeval.erfi(np.sqrt(av * (xv + h)) / 2) - numeval.erfi(np.sqrt(av * (xv - h)) / 2)) / (2 * h)
        assert got == pytest.approx(fd, rel=1e-7)


@settings(max_examples=1000, deadline=None)
@given(smooth(), smooth())
def test_product_rule(f, g):
    lhs = differentiate(f * g, x)
    rhs = differentiate(f, x) * g + f * differentiate(g, x)
    assert normalize(lhs - rhs) == 0


@settings(max_examples=200, deadline=None)
@given(smooth(), smooth(), st.integers(-3, 3))
def test_linearity(f, g, c):
    assert normalize(differentiate(c * f + g, x) - c * differentiate(f, x) - differentiate(g, x)) == 0


@settings(max_examples=100, deadline=None)
@given(smooth(), polys())
def test_substitute_commutes_with_constant_bindings(e, val):
    val = val.xreplace({x: 1})  # binding free of x
    lhs = differentiate(substitute(e, {y: val}), x)
    rhs = substitute(differentiate(e, x), {y: val})
    assert normalize(lhs - rhs) == 0


# --- substitute ----------------------------------------------------------------

def test_binomial_substitution():
    e = substitute(u**2, {u: u0 + eps * u1})
    assert normalize(e - (u0**2 + 2 * eps * u0 * u1 + eps**2 * u1**2)) == 0


def test_simultaneous_swap():
    assert substitute(x + 2 * y, {x: y, y: x}) == normalize(y + 2 * x)


def test_similarity_argument():
    U0 = sp.Function("U0")
    w = sp.Symbol("w")
    omega = 4 * beta / (alpha + delta) * t + x
    e = substitute(U0(w), {w: omega})
    assert e.func == U0
    assert normalize(e.args[0] - omega) == 0


def test_substitute_function_application():
    f = sp.Function("f")
    e = substitute(f(x) * sp.diff(f(x), x), {f(x): x**3})
    assert normalize(e - 3 * x**5) == 0


# --- is_zero -------------------------------------------------------------------

def test_zero_is_proved():
    assert is_zero(0).verdict is Verdict.PROVED_ZERO


def test_pythagoras_is_numeric():
    r = is_zero(sp.sin(theta) ** 2 + sp.cos(theta) ** 2 - 1)
    assert r.verdict is Verdict.NUMERICALLY_ZERO


def test_epsilon_is_nonzero():
    r = is_zero(eps, "numeric")
    assert r.verdict is Verdict.NUMERICALLY_NONZERO
    assert r.witness and "eps" in r.witness


def test_nonzero_constant_proved():
    assert is_zero(sp.Rational(3, 7)).verdict is Verdict.PROVED_NONZERO


def test_rational_function_identity_proved():
    e = 1 / (x - 1) - 1 / (x + 1) - 2 / (x**2 - 1)
    assert is_zero(e).verdict is Verdict.PROVED_ZERO


def test_exp_identity_with_dependent_exponents():
    e = sp.exp(2 * beta * t + x) - sp.exp(beta * t) ** 2 * sp.exp(x)
    assert is_zero(e).verdict is Verdict.PROVED_ZERO
    e = sp.exp(x / 2) ** 2 - sp.exp(x)
    assert is_zero(e).verdict is Verdict.PROVED_ZERO


def test_radical_identity_proved():
    e = sp.sqrt(alpha**2 / 64 + beta) * 8 - sp.sqrt(alpha**2 + 64 * beta)
    assert is_zero(e).verdict is Verdict.PROVED_ZERO


def test_symbolic_strategy_refuses_to_sample():
    with pytest.raises(InconclusiveError):
        is_zero(sp.sin(x) ** 2 + sp.cos(x) ** 2 - 1, "symbolic")


def test_domain_exhaustion_is_inconclusive():
    s = Sampler(guards=[-(x**2) - 1])
    with pytest.raises(InconclusiveError):
        is_zero(sp.sin(x) - x, "numeric", sampler=s)


def test_sampler_is_seeded():
    e = sp.sin(x) * sp.exp(y) - x
    a = is_zero(e, "numeric", sampler=Sampler(seed=3))
    b = is_zero(e, "numeric", sampler=Sampler(seed=3))
    assert a == b


@settings(max_examples=100, deadline=None)
@given(polys(), polys())
def test_polynomial_completeness(a, b):
    # a - b is identically zero exactly when the expanded forms agree
    verdict = is_zero(a - b, "symbolic" if sp.expand(a - b) == 0 else "auto").verdict
    if sp.expand(a - b) == 0:
        assert verdict is Verdict.PROVED_ZERO
    else:
        assert verdict is not Verdict.PROVED_ZERO


# --- printer -------------------------------------------------------------------

@pytest.mark.parametrize(
    "e, text",
    [
        (x + 1, "x + 1"),
        (-x, "-x"),
        (x**2 * y, "y*x^2"),
        (sp.Rational(1, 2), "1/2"),
    ],
)
def test_to_text_simple(e, text):
    assert to_text(e) == text


def test_to_text_reparses():
    from apxsym.parse import parse_expression, parse_problem

    spec = parse_problem("indep t x;\ndep u;\nsmall eps order 1;\nparam alpha beta delta;\n")
    e = sp.exp(beta * t) * (alpha + delta) / (4 * beta) - sp.sqrt(x) * u0**3
    text = to_text(e)
    assert parse_expression(text, spec) == e
    assert to_text(parse_expression(text, spec)) == text
