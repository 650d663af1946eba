import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import interval_payoff_quad, triangular_c_star, triangular_pdf, u_lin
from vetobargain.core import EquilibriumOutcome, ProposerUtility, TypeDistribution, uv_eval
from vetobargain.static_mech import (StaticMechanism, conditional_optimality_check,
                                     ic_ir_check, interval_assignment, interval_delegation_payoff,
                                     interval_mechanism, mechanism_from_outcome, menu_payoff,
                                     optimal_interval)

U = ProposerUtility()
TRI = TypeDistribution.triangular(0.0, 1.0, 0.6)
# frozen from the closed-form first-order condition and adaptive quadrature
C_STAR_TRI = 0.8774851773445587
U_TRI = 0.5974983530382842
U_FULL_TRI = 0.5333333333333333   # E[v] for the triangular prior


def test_frozen_goldens_match_oracles():
    assert triangular_c_star() == pytest.approx(C_STAR_TRI, abs=1e-15)
    f = triangular_pdf(0.0, 1.0, 0.6)
    assert interval_payoff_quad(f, 0, 1, u_lin, C_STAR_TRI, (0.6,)) == pytest.approx(U_TRI, abs=1e-12)
    assert interval_payoff_quad(f, 0, 1, u_lin, 0.0, (0.6,)) == pytest.approx(U_FULL_TRI, abs=1e-12)


@pytest.mark.parametrize("F,c,expected", [
    (TypeDistribution.uniform(0, 1), 0.0, 0.5),
    (TypeDistribution.uniform(0.2, 1), 0.4, 0.625),
])
def test_interval_payoff_examples(F, c, expected):
    assert interval_delegation_payoff(F, U, c) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("F", [TypeDistribution.uniform(0, 1), TRI,
                               TypeDistribution.uniform(-0.5, 1.2)])
def test_single_offer_at_one(F):
    expected = U(1.0) * (1 - F.cdf(0.5))
    assert interval_delegation_payoff(F, U, 1.0) == pytest.approx(expected, abs=1e-9)


@given(st.floats(0.0, 1.0))
def test_interval_payoff_matches_quadrature(c):
    f = triangular_pdf(0.0, 1.0, 0.6)
    assert interval_delegation_payoff(TRI, U, c) == pytest.approx(
        interval_payoff_quad(f, 0, 1, u_lin, c, (0.6,)), abs=1e-7)


def test_optimal_interval_uniform():
    r = optimal_interval(TypeDistribution.uniform(0, 1), U)
    assert r.c_star == pytest.approx(0.0, abs=1e-9)
    assert r.U == pytest.approx(0.5, abs=1e-9)
    r2 = optimal_interval(TypeDistribution.uniform(0.2, 1), U)
    assert r2.c_star == pytest.approx(0.4, abs=1e-9)
    assert r2.U == pytest.approx(0.625, abs=1e-9)
    assert r2.U_full == pytest.approx(0.625, abs=1e-9)


def test_optimal_interval_triangular_golden():
    r = optimal_interval(TRI, U)
    # payoff is flat to second order at the optimum, so c is pinned only to ~sqrt(quadrature error)
    assert r.c_star == pytest.approx(C_STAR_TRI, abs=1e-7)
    assert r.U == pytest.approx(U_TRI, abs=1e-8)
    assert r.U_full == pytest.approx(U_FULL_TRI, abs=1e-8)
    assert r.U >= r.U_full
    assert np.all(r.payoff_curve[:, 1] <= r.U + 1e-12)


def test_decreasing_density_gives_full_delegation():
    F = TypeDistribution.piecewise_linear([(0.0, 2.0), (1.0, 0.0)])
    r = optimal_interval(F, U)
    assert r.c_star == pytest.approx(0.0, abs=1e-6)
    assert r.U == pytest.approx(r.U_full, abs=1e-9)


@given(st.floats(0.05, 0.95), st.sampled_from(["linear_loss", "quadratic_loss"]))
def test_report_invariants(peak, kind):
    F = TypeDistribution.triangular(0.0, 1.0, peak)
    r = optimal_interval(F, ProposerUtility(kind), n_scan=100)
    assert r.U >= r.U_full - 1e-12
    assert np.all(r.payoff_curve[:, 1] <= r.U + 1e-12)
    if abs(r.U - r.U_full) <= 1e-9:
        return
    assert r.c_star > 1e-6


def test_conditional_optimality_full_support():
    res = conditional_optimality_check(TRI, U, C_STAR_TRI, 0.0, 1.0, n_menus=200)
    assert res["holds"]
    assert res["worst_gap"] <= 1e-6


def test_conditional_optimality_half_window():
    res = conditional_optimality_check(TRI, U, C_STAR_TRI, C_STAR_TRI / 2, 1.0, n_menus=200)
    assert res["holds"]


def test_conditional_optimality_precondition():
    with pytest.raises(ValueError):
        conditional_optimality_check(TRI, U, C_STAR_TRI, 0.6, 1.0)


def test_conditional_optimality_is_deterministic():
    a = conditional_optimality_check(TRI, U, C_STAR_TRI, 0.1, 1.0, n_grid=20, n_menus=50, seed=3)
    b = conditional_optimality_check(TRI, U, C_STAR_TRI, 0.1, 1.0, n_grid=20, n_menus=50, seed=3)
    assert a == b


def test_menu_payoff_matches_interval_limit():
    F = TypeDistribution.uniform(0.2, 1)
    menu = np.linspace(0.4, 1.0, 4001)
    assert menu_payoff(F, U, menu) == pytest.approx(0.625, abs=1e-4)


def test_interval_mechanism_ic_ir():
    v = np.linspace(0, 1, 201)
    m = interval_mechanism(v, np.full(201, 1 / 201), C_STAR_TRI)
    rep = ic_ir_check(m)
    assert rep["ic_ok"] and rep["ir_ok"]


def test_ic_ir_failure_example():
    m = StaticMechanism(np.array([0.3, 0.9]), np.array([0.5, 0.5]),
                        (((1.0, 1.0),), ((0.9, 1.0),)))
    rep = ic_ir_check(m)
    assert not rep["ir_ok"]
    assert rep["worst_ir"][0] == 0.3
    assert rep["worst_ir"][1] == pytest.approx(0.4, abs=1e-12)


def test_transform_discount_weights():
    out = EquilibriumOutcome(np.array([0.2, 0.6, 0.9]), np.array([0.2, 0.3, 0.5]),
                             ((), ((1.0, 2, 1.0),), ((0.9, 0, 1.0),)), 0.0)
    m = mechanism_from_outcome(out, 0.9)
    assert m.lotteries[0] == ((0.0, 1.0),)
    lot = dict(m.lotteries[1])
    assert lot[1.0] == pytest.approx(0.81, abs=1e-15)
    assert lot[0.0] == pytest.approx(0.19, abs=1e-15)
    assert dict(m.lotteries[2])[0.9] == 1.0
    assert m.vetoer_utilities()[1] == pytest.approx(0.81 * uv_eval(0.6, 1.0), abs=1e-15)
    with pytest.raises(ValueError):
        mechanism_from_outcome(out, 1.0)


@given(st.floats(0.0, 1.0), st.floats(-0.5, 1.5))
def test_assignment_is_menu_choice(c, v):
    from vetobargain.core import vetoer_best_in_menu
    a = float(interval_assignment(np.array([v]), c)[0])
    if v <= 0 or abs(v - c / 2) < 1e-9:
        return
    best = uv_eval(v, a)
    # nothing in [c, 1] nor the veto is strictly better
    for alt in np.append(np.linspace(c, 1.0, 101), 0.0):
        assert uv_eval(v, alt) <= best + 1e-12
    assert vetoer_best_in_menu(v, np.linspace(c, 1.0, 2001)) == pytest.approx(a, abs=1e-3)
