import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vetobargain.core import (EmptyBeliefError, InfeasibleContinuationError, ProposerUtility,
                              TypeDistribution, exclude_open, largest_indifferent_action,
                              make_grid, trapezoid_expectation, truncate, uv_eval,
                              vetoer_best_in_menu)


def test_uv_eval_examples():
    assert uv_eval(0.5, 0.5) == pytest.approx(0.25, abs=1e-15)
    assert uv_eval(0.3, 0.0) == 0.0
    assert uv_eval(0.55, 0.65, "linear") == pytest.approx(0.45, abs=1e-15)


def test_uv_eval_rejects_unknown_form():
    with pytest.raises(ValueError):
        uv_eval(0.5, 0.5, "cubic")


@given(st.floats(1e-3, 1.5), st.floats(-1, 3))
def test_quadratic_acceptance_region(v, a):
    val = uv_eval(v, a)
    if 1e-9 < a < 2 * v - 1e-9:
        assert val > 0
    elif a < -1e-9 or a > 2 * v + 1e-9:
        assert val <= 0


def test_linear_status_quo_normalised():
    v = np.linspace(0, 1, 11)
    assert np.all(uv_eval(v, 0.0, "linear") == 0.0)


def test_largest_indifferent_action_examples():
    assert largest_indifferent_action(0.5, 0.25) == pytest.approx(0.5, abs=1e-15)
    assert largest_indifferent_action(0.5, 0.0) == pytest.approx(1.0, abs=1e-15)
    a = largest_indifferent_action(0.6, 0.32)
    assert a == pytest.approx(0.8, abs=1e-12)
    assert 2 * 0.6 * a - a * a == pytest.approx(0.32, abs=1e-12)


def test_largest_indifferent_action_infeasible():
    with pytest.raises(InfeasibleContinuationError, match="infeasible continuation value"):
        largest_indifferent_action(0.5, 0.3)


@given(st.floats(0.01, 1.0), st.floats(0.0, 0.999), st.floats(0.0, 1.0))
def test_indifferent_action_reproduces_seed_formula(v, delta, frac):
    floor = frac * v
    a = largest_indifferent_action(v, delta * uv_eval(v, 2 * floor))
    closed = v + math.sqrt(v * v - 4 * delta * floor * (v - floor))
    assert a == pytest.approx(closed, abs=1e-12)
    assert uv_eval(v, a) == pytest.approx(delta * uv_eval(v, 2 * floor), abs=1e-12)


def test_vetoer_best_in_menu_examples():
    assert vetoer_best_in_menu(0.3, [0.7, 1.0]) == 0.0
    assert vetoer_best_in_menu(0.6, [0.7, 1.0]) == 0.7
    for v in (0.1, 0.42, 0.9):
        assert vetoer_best_in_menu(v, [v]) == v


def test_vetoer_tie_goes_to_proposer():
    # type 0.5 is indifferent between 0.4 and 0.6; the Proposer prefers 0.6
    assert vetoer_best_in_menu(0.5, [0.4, 0.6]) == 0.6


def test_truncate_examples():
    F = TypeDistribution.uniform(0, 1)
    G = truncate(F, 0, 1)
    x = np.linspace(0, 1, 7)
    assert np.allclose(G.cdf(x), F.cdf(x), atol=1e-15)
    H = truncate(F, 0.25, 0.75)
    assert H.pdf(0.5) == pytest.approx(2.0)
    assert H.cdf(0.5) == pytest.approx(0.5)
    with pytest.raises(EmptyBeliefError, match="empty belief"):
        truncate(F, 0.5, 0.5)
    with pytest.raises(ValueError):
        truncate(F, -0.5, 0.5)


@given(st.floats(-0.5, 0.4), st.floats(0.05, 0.5))
def test_truncate_idempotent(lo, width):
    F = TypeDistribution.triangular(-0.5, 1.0, 0.3)
    hi = min(lo + width, 1.0)
    once = truncate(F, lo, hi)
    twice = truncate(once, lo, hi)
    x = np.linspace(lo, hi, 9)
    assert np.allclose(once.cdf(x), twice.cdf(x), atol=1e-12)
    assert once.cdf(lo) == pytest.approx(0.0, abs=1e-12)
    assert once.cdf(hi) == pytest.approx(1.0, abs=1e-12)


def test_union_posterior():
    F = TypeDistribution.uniform(-0.5, 1.0)
    G = exclude_open(F, 0.0, 0.4)
    assert G.mass == pytest.approx(1.1 / 1.5)
    assert G.cdf(0.0) == pytest.approx(0.5 / 1.1)
    assert G.cdf(0.3) == pytest.approx(0.5 / 1.1)
    assert G.pdf(0.2) == 0.0
    assert G.cdf(1.0) == pytest.approx(1.0)


@pytest.mark.parametrize("F", [
    TypeDistribution.uniform(0.2, 1.0),
    TypeDistribution.triangular(0, 1, 0.6),
    TypeDistribution.truncated_normal(-0.2, 1.1, 0.4, 0.3),
    TypeDistribution.piecewise_linear([(0, 1), (0.5, 2), (1, 0.5)]),
])
def test_distribution_contract(F):
    assert F.cdf(F.lo) == pytest.approx(0.0, abs=1e-12)
    assert F.cdf(F.hi) == pytest.approx(1.0, abs=1e-12)
    x = np.linspace(F.lo, F.hi, 501)
    assert np.all(np.diff(F.cdf(x)) >= 0)
    # density integrates to the CDF increments
    assert trapezoid_expectation(np.ones_like(x), x, F) == pytest.approx(1.0, abs=1e-12)
    f_lo, f_hi = F.density_bounds()
    assert f_hi < np.inf


def test_density_floor_reported():
    F = TypeDistribution.uniform(0.2, 1.0)
    assert F.density_bounds() == pytest.approx((1.25, 1.25))


def test_grid_landmarks():
    g = make_grid(-0.3, 1.2, n=101)
    for m in (0.0, 1.0, -0.3, 1.2):
        assert np.any(np.abs(g.type_grid - m) < 1e-15)
    g2 = make_grid(0.2, 1.0, n=50)
    assert np.any(np.abs(g2.type_grid - 0.4) < 1e-15)
    assert np.all(np.diff(g2.type_grid) > 0)
    assert g2.action_grid[0] <= 0.0 and g2.action_grid[-1] >= 1.0


@given(st.sampled_from(["linear_loss", "quadratic_loss", "mixture"]), st.floats(0, 1),
       st.lists(st.floats(-3, 3), min_size=3, max_size=3, unique=True))
def test_proposer_utility_concave(kind, w, pts):
    u = ProposerUtility(kind, w)
    a, b, c = sorted(pts)
    if c - a < 1e-6:
        return
    lam = (c - b) / (c - a)
    assert u(b) >= lam * u(a) + (1 - lam) * u(c) - 1e-12


@pytest.mark.parametrize("kind", ["linear_loss", "quadratic_loss", "mixture"])
def test_proposer_utility_shape(kind):
    u = ProposerUtility(kind, 0.3)
    assert u(0.0) == 0.0
    assert u(1.0) == 1.0
    x = np.linspace(-2, 3, 1001)
    ux = u(x)
    assert ux.max() == pytest.approx(1.0)
    assert np.all(np.diff(ux[x <= 1]) > 0)
    assert np.all(np.diff(ux[x >= 1]) < 0)


def test_utility_kind_checked():
    with pytest.raises(ValueError):
        ProposerUtility("cubic")
