from __future__ import annotations

import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from apxsym.approx import GradedExpr
from apxsym.detsys import generic_generator
from apxsym.expr import normalize
from apxsym.jet import Generator, JetCoordinate, JetSpace, multi_indices, prolong, total_derivative

S = sp.Symbol
space = JetSpace(("t", "x"), ("u",), 1)
t, x = space.x


def test_coordinate_names():
    assert space.coord("u", 0, "x") == S("u0_x")
    assert space.coord("u", 1, "tx") == S("u1_tx")
    assert space.coord("u", 1, "xt") == S("u1_tx")  # multi-index commutes
    assert space.decode(S("u_xt")) is None  # non-canonical spelling
    assert space.decode(S("u2_x")) is None  # beyond order p
    assert space.decode(S("u1_tt")) == JetCoordinate(0, 1, (2, 0))


def test_multi_indices():
    assert multi_indices(2, 2) == [(2, 0), (1, 1), (0, 2)]


def test_total_derivative_basic():
    assert total_derivative(S("u0"), 1, space) == S("u0_x")
    assert total_derivative(x * S("u1_x"), 0, space) == x * S("u1_tx")


def test_total_derivative_chain_rule():
    eta = sp.Function("eta0u")(t, x, S("u0"))
    d = total_derivative(eta, 1, space)
    expected = sp.diff(eta, x) + sp.diff(eta, S("u0")) * S("u0_x")
    assert normalize(d - expected) == 0


jet_atoms = st.sampled_from(["u0", "u1", "u0_x", "u1_t", "u0_tx", "t", "x"])


@st.composite
def jet_exprs(draw):
    atoms = [S(a) for a in draw(st.lists(jet_atoms, min_size=1, max_size=4))]
    e = sp.S.Zero
    for a in atoms:
        c = draw(st.integers(-3, 3))
        k = draw(st.integers(1, 3))
        e += c * a**k
    if draw(st.booleans()):
        e = e * sp.exp(atoms[0])
    if draw(st.booleans()):
        e = sp.sin(e)
    return e


@settings(max_examples=150, deadline=None)
@given(jet_exprs())
def test_total_derivatives_commute(e):
    a = total_derivative(total_derivative(e, 0, space), 1, space)
    b = total_derivative(total_derivative(e, 1, space), 0, space)
    assert normalize(a - b) == 0


def test_translation_prolongs_to_zero():
    g = Generator(space, [[1, 0], [0, 0]], [[0, 0]])
    for coeff in prolong(g, 2).values():
        assert coeff.is_zero()


def test_classical_limit():
    g = generic_generator(space, "lie")
    xi_t, xi_x = (sp.Function(f"xi0{v}")(t, x, S("u0")) for v in "tx")
    eta = sp.Function("eta0u")(t, x, S("u0"))
    for i in range(2):
        got = g.coefficient(0, tuple(int(j == i) for j in range(2)))[0]
        classical = total_derivative(eta, i, space) - sum(
            total_derivative(xi, i, space) * space.coord("u", 0, v) for xi, v in ((xi_t, "t"), (xi_x, "x"))
        )
        assert normalize(got - classical) == 0


def test_truncation_consistency():
    """Prolonging then setting eps = 0 equals the classical prolongation of the seed-0 generator."""
    full = generic_generator(space, "lie")
    classical_space = JetSpace(("t", "x"), ("u",), 0)
    xi, eta = full.xi, full.eta
    g0 = Generator(classical_space, [[c[0]] for c in xi], [[c[0]] for c in eta])
    for sigma in multi_indices(2, 2):
        a = full.coefficient(0, sigma)[0]
        b = g0.coefficient(0, sigma)[0]
        assert normalize(a - b) == 0


def test_no_power_above_p():
    g = generic_generator(space, "lie")
    for coeff in prolong(g, 2).values():
        assert isinstance(coeff, GradedExpr)
        assert len(coeff) == space.p + 1
        assert all(not c.has(space.epsilon) for c in coeff)


def test_prolongation_cached():
    g = generic_generator(space, "lie")
    assert g.coefficient(0, (1, 1)) is g.coefficient(0, (1, 1))


def test_order_one_coefficient_matches_display():
    """eta_{u,x} = D_x(eta~) - sum_j D_x(xi~_j) (u0_j + eps u1_j), truncated."""
    g = generic_generator(space, "lie")
    eps = space.epsilon
    eta = g.graded_eta(0).reassemble(eps)
    xis = [g.graded_xi(j).reassemble(eps) for j in range(2)]
    full = total_derivative(eta, 1, space) - sum(
        total_derivative(xis[j], 1, space)
        * (space.coord("u", 0, "tx"[j]) + eps * space.coord("u", 1, "tx"[j]))
        for j in range(2)
    )
    got = g.coefficient(0, (0, 1))
    for k in range(2):
        ref = sp.diff(full, eps, k).subs(eps, 0) / sp.factorial(k)
        assert normalize(got[k] - ref) == 0
