from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from apxsym import numeval
from apxsym.expr import normalize
from apxsym.numeval import DomainError, EvalContext, UnsupportedRegionError, eval_expr, grid_emit
from apxsym.verify import figure_grid, figure_report

from oracles import erfi_oracle, fixture_triples, pfaff_b_oracle, series_oracle

t, x = sp.symbols("t x")


# --- eval ------------------------------------------------------------------------

def test_eval_exp_zero():
    assert eval_expr(sp.exp(0 * x), EvalContext({x: 1.0})) == 1.0


def test_eval_rejects_unbound():
    with pytest.raises(KeyError):
        eval_expr(x + t, EvalContext({x: 1.0}))


def test_domain_violation():
    with pytest.raises(DomainError):
        eval_expr(sp.log(x), EvalContext({x: -1.0}))
    val = numeval.evaluate(sp.sqrt(x), EvalContext({x: np.array([-1.0, 4.0])}, policy="skip"))
    assert math.isnan(val[0]) and val[1] == 2.0


def test_sol2c_origin(rdc):
    from apxsym.verify import _figure_values, _solution_components

    fig = rdc.figures["fig2c"]
    comps = _solution_components(rdc, rdc.solutions[fig.solution])
    eps = sp.Symbol("eps")
    vals = _figure_values(rdc, fig)
    vals.update({t: 0.0, x: 0.0})
    u = comps["u0"] + eps * comps["u1"]
    assert eval_expr(u, EvalContext(vals)) == pytest.approx(4.86, abs=1e-12)


def test_sol1c_leading_order_constant(rdc):
    from apxsym.verify import _elimination, _solution_components

    comps = _solution_components(rdc, rdc.solutions["sol1c"])
    u0 = comps["u0"].xreplace(_elimination(rdc, "i"))
    alpha, beta, delta = sp.symbols("alpha beta delta")
    assert normalize(u0 - 8 * beta / (alpha**2 - delta**2)) == 0


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(0.1, 2.0), st.integers(0, 2))
def test_eval_normalize_agree(a, b, k):
    e = sp.exp(x * t) * sp.exp(-x) * (x + t) ** (k + 1) / (1 + x**2) + sp.sin(t) * sp.cos(x) ** 2
    ctx = EvalContext({x: a, t: b})
    assert eval_expr(normalize(e), ctx) == pytest.approx(eval_expr(e, ctx), rel=1e-12)


# --- 2F1 --------------------------------------------------------------------------

def test_hyp2f1_at_zero():
    assert numeval.hyp2f1(0.3, 1.7, 2.2, 0.0) == 1.0


def test_hyp2f1_log_closed_form():
    ref = -math.log(0.7) / 0.3
    assert numeval.hyp2f1(1, 1, 2, 0.3) == pytest.approx(ref, rel=1e-12)
    assert float(series_oracle(1, 1, 2, 0.3)) == pytest.approx(ref, rel=1e-14)


def test_hyp2f1_dual_path_example():
    got = numeval.hyp2f1(0.5, 0.75, 1.25, -3.0)
    assert got == pytest.approx(float(pfaff_b_oracle(0.5, 0.75, 1.25, -3.0)), rel=1e-10)
    assert got == pytest.approx(float(mpmath.hyp2f1(0.5, 0.75, 1.25, -3.0)), rel=1e-10)


def test_hyp2f1_unsupported_region():
    with pytest.raises(UnsupportedRegionError):
        numeval.hyp2f1(0.5, 1, 2, 0.7)
    with pytest.raises(DomainError):
        numeval.hyp2f1(0.5, 1, -2, 0.1)


@pytest.mark.parametrize("abc", fixture_triples())
def test_hyp2f1_series_region(abc):
    for z in (-0.5, -0.2, 0.1, 0.45):
        got = numeval.hyp2f1(*abc, z)
        assert got == pytest.approx(float(series_oracle(*abc, z)), rel=1e-10)


@pytest.mark.parametrize("abc", fixture_triples())
def test_hyp2f1_pfaff_region(abc):
    # z = -exp(delta x)/c2 ranges down to about -250 on the figure grids
    for z in (-0.8, -3.0, -24.0, -230.0):
        got = numeval.hyp2f1(*abc, z)
        assert got == pytest.approx(float(mpmath.hyp2f1(*abc, z)), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(fixture_triples()), st.floats(-20.0, 0.4))
def test_hyp2f1_derivative_identity(abc, z):
    a, b, c = abc
    h = 1e-6 * max(1.0, abs(z))
    fd = (numeval.hyp2f1(a, b, c, z + h) - numeval.hyp2f1(a, b, c, z - h)) / (2 * h)
    exact = a * b / c * numeval.hyp2f1(a + 1, b + 1, c + 1, z)
    assert fd == pytest.approx(exact, rel=1e-6, abs=1e-9)


def test_hyp2f1_vectorized():
    zs = np.array([-5.0, -1.0, 0.0, 0.3])
    got = numeval.hyp2f1(0.5, 1.2, 2.1, zs)
    assert np.allclose(got, [numeval.hyp2f1(0.5, 1.2, 2.1, float(z)) for z in zs], rtol=1e-15)


# --- erfi -------------------------------------------------------------------------

def test_erfi_zero():
    assert numeval.erfi(0.0) == 0.0


def test_erfi_quadrature():
    assert numeval.erfi(1.0) == pytest.approx(float(erfi_oracle(1.0)), rel=1e-10)


@pytest.mark.parametrize("v", [0.05, 0.4, 0.9, 1.6, 2.5, 4.0])
def test_erfi_fixture_range(v):
    # arguments sqrt(alpha x)/2 stay below 1.6 on the figure grids
    assert numeval.erfi(v) == pytest.approx(float(erfi_oracle(v)), rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 5.0))
def test_erfi_odd(v):
    assert numeval.erfi(-v) == -numeval.erfi(v)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3.0, 3.0))
def test_erfi_derivative(v):
    h = 1e-6
    fd = (numeval.erfi(v + h) - numeval.erfi(v - h)) / (2 * h)
    assert fd == pytest.approx(2 / math.sqrt(math.pi) * math.exp(v * v), rel=1e-6)


def test_erfi_overflow_rejected():
    with pytest.raises(DomainError):
        numeval.erfi(13.0)


# --- grids ------------------------------------------------------------------------

def test_constant_grid():
    text = grid_emit([sp.S.One], [t, x], [(0, 1), (0, 1)], [2, 2], EvalContext({}))
    assert text.splitlines() == ["t,x,u", "0,0,1", "0,1,1", "1,0,1", "1,1,1"]


def test_grid_extra_columns_and_order():
    text = grid_emit([t, x], [t, x], [(0, 1), (0, 2)], [2, 3], EvalContext({}))
    rows = text.splitlines()
    assert rows[0] == "t,x,u,e1"
    assert rows[1:4] == ["0,0,0,0", "0,1,0,1", "0,2,0,2"]


def test_grid_formatting_uses_17_digits():
    text = grid_emit([sp.Rational(1, 3) + 0 * t], [t, x], [(0, 0), (0, 0)], [1, 1], EvalContext({}))
    assert text.splitlines()[1] == "0,0,0.33333333333333331"


def test_grid_threads_deterministic(rdc, monkeypatch):
    monkeypatch.setenv("APXSYM_THREADS", "1")
    _, one = figure_grid(rdc, "fig1b")
    monkeypatch.setenv("APXSYM_THREADS", "4")
    _, four = figure_grid(rdc, "fig1b")
    assert np.array_equal(one, four)


def test_fig1a_finite(rdc):
    _, grid = figure_grid(rdc, "fig1a")
    assert grid.shape == (61, 101)
    assert np.isfinite(grid).all()


def test_fig2a_damped(rdc):
    assert figure_report(rdc, "fig2a").damped


@pytest.mark.parametrize("fig, gamma", [("fig1a", 0.77), ("fig1b", 3.31), ("fig1c", 0.53), ("fig2a", 0.77),
                                        ("fig2b", 1.25), ("fig2c", 0.21), ("fig2d", 1.25), ("fig3a", 1.33)])
def test_caption_gamma(rdc, fig, gamma):
    # gamma recomputed from the case constraint matches the caption to its printed digits
    assert figure_report(rdc, fig).caption["gamma"] == pytest.approx(gamma, abs=0.006)


def test_svg_heatmap():
    svg = numeval.svg_heatmap(np.arange(6.0).reshape(2, 3))
    assert svg.startswith("<svg") and svg.count("<rect") == 6
