"""Update map phi, bracket sequences, and the deterministic coupled map."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from barw.cml import (
    bracket_sequences,
    cml_lower_bound,
    cml_run,
    contraction_constant,
    phi,
    phi_derivative,
    phi_range,
    theta,
)
from barw.errors import InvariantError
from barw.lattice import DensityField, LatticeShape

E = math.e


def test_phi_fixed_values():
    assert phi(2.0, 0.0) == 0.0
    assert phi(2.0, 0.5) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert phi(1.0, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-15)
    # the peak value is 1/e regardless of mu
    for mu in (1.3, 2.0, 5.0, 7.3):
        assert phi(mu, 1.0 / mu) == pytest.approx(math.exp(-1.0), abs=1e-15)


def test_phi_rejects_bad_arguments():
    with pytest.raises(ValueError):
        phi(0.0, 0.5)
    with pytest.raises(ValueError):
        phi(2.0, -0.1)
    with pytest.raises(ValueError):
        phi(2.0, math.nan)


def test_theta_is_the_positive_fixed_point():
    for mu in (1.2, 2.0, E, 5.0, 7.0):
        th = theta(mu)
        assert th == pytest.approx(math.log(mu) / mu, abs=0)
        assert phi(mu, th) == pytest.approx(th, abs=1e-15)


def test_theta_attractive_iff_mu_below_e_squared():
    # |phi'(theta)| = |1 - log(mu)| < 1 exactly on (1, e^2)
    for mu in (1.1, 2.0, 7.0):
        assert abs(phi_derivative(mu, theta(mu))) < 1.0
    for mu in (E**2 + 0.1, 9.0):
        assert abs(phi_derivative(mu, theta(mu))) > 1.0


def test_phi_derivative_matches_finite_differences():
    h = 1e-7
    for mu in (1.5, 2.0, 6.0):
        for w in (0.05, 0.3, 0.7):
            fd = (phi(mu, w + h) - phi(mu, w - h)) / (2 * h)
            assert phi_derivative(mu, w) == pytest.approx(fd, abs=1e-6)


def test_phi_range_uses_interior_peak():
    # peak 1/mu = 0.5 inside [0.2, 0.8]: max is 1/e, min at the far end
    lo, hi = phi_range(2.0, 0.2, 0.8)
    assert hi == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert lo == pytest.approx(min(phi(2.0, 0.2), phi(2.0, 0.8)), abs=0)
    # peak outside [0.2, 0.45]: endpoints rule, phi increasing there
    lo2, hi2 = phi_range(2.0, 0.2, 0.45)
    assert lo2 == pytest.approx(0.26812801841425576, abs=0)
    assert hi2 == pytest.approx(0.36591269376653923, abs=0)


@settings(deadline=None, max_examples=60)
@given(
    mu=st.floats(min_value=1.05, max_value=7.0),
    a=st.floats(min_value=0.0, max_value=1.0),
    b=st.floats(min_value=0.0, max_value=1.0),
)
def test_phi_range_bounds_dense_grid(mu, a, b):
    lo, hi = min(a, b), max(a, b)
    rng_lo, rng_hi = phi_range(mu, lo, hi)
    grid = phi(mu, np.linspace(lo, hi, 101))
    assert rng_lo <= grid.min() + 1e-12
    assert rng_hi >= grid.max() - 1e-12


def test_contraction_constant_frozen_value():
    assert contraction_constant(2.0, 0.05) == pytest.approx(
        0.449641903982231, abs=1e-15
    )


def test_contraction_constant_below_one_near_theta():
    for mu in (1.2, 2.0, E, 5.0, 7.0):
        assert contraction_constant(mu, 1e-6) < 1.0


def test_contraction_constant_rejects_bad_domain():
    with pytest.raises(ValueError):
        contraction_constant(1.0, 0.01)
    with pytest.raises(ValueError):
        contraction_constant(8.0, 0.01)
    with pytest.raises(ValueError):
        contraction_constant(2.0, 0.0)
    with pytest.raises(ValueError):
        contraction_constant(1.01, 0.5)  # interval pokes below zero


# (mu, alpha1, beta1, expected case, expected alpha2, expected beta2)
BRACKET_CASES = [
    (1.2, 0.1, 0.9, 1, 0.10321522620302945, 0.6006063872523879),
    (2.0, 0.14384103622589046, 0.9, 1, 0.17980129528236305, 0.43393972058572117),
    (E, 0.2, 0.6, 2, 0.2578292607079331, 0.48393972058572116),
    (5.0, 0.1, 0.5, 3, 0.1255006092930523, 0.43393972058572117),
    (7.0, 0.05, 0.4, 3, 0.06422377695775072, 0.3839397205857212),
]


@pytest.mark.parametrize("mu,a1,b1,case,a2,b2", BRACKET_CASES)
def test_bracket_sequences_frozen_second_terms(mu, a1, b1, case, a2, b2):
    br = bracket_sequences(mu, a1, b1, eps=1e-6)
    assert br.case == case
    assert br.alphas[1] == pytest.approx(a2, abs=0)
    assert br.betas[1] == pytest.approx(b2, abs=0)


@pytest.mark.parametrize("mu,a1,b1,case,a2,b2", BRACKET_CASES)
def test_bracket_sequences_monotone_convergent_contained(mu, a1, b1, case, a2, b2):
    br = bracket_sequences(mu, a1, b1, eps=1e-6)
    th = theta(mu)
    alphas, betas = br.alphas, br.betas
    assert all(a < b for a, b in zip(alphas, betas))
    assert all(x < y for x, y in zip(alphas, alphas[1:]))
    assert all(x > y for x, y in zip(betas, betas[1:]))
    assert betas[-1] - alphas[-1] < 1e-6
    assert alphas[-1] < th < betas[-1]
    # re-check the containment invariant with the unimodal range rule
    for m in range(len(alphas) - 1):
        lo, hi = phi_range(mu, alphas[m], betas[m])
        assert alphas[m + 1] < lo + 1e-15 and hi - 1e-15 < betas[m + 1], (
            f"containment broken at step {m}"
        )
    assert br.m_star == len(alphas)


def test_bracket_sequences_case3_swaps_after_ramp():
    br = bracket_sequences(5.0, 0.1, 0.5, eps=1e-6)
    assert br.swap_index is not None
    # after the swap the alphas must have cleared the peak 1/mu
    assert br.alphas[br.swap_index] > 1.0 / 5.0


def test_bracket_sequences_rejects_bad_starts():
    with pytest.raises(ValueError):
        bracket_sequences(2.0, 0.0, 0.9, eps=1e-6)
    with pytest.raises(ValueError):
        bracket_sequences(2.0, 0.4, 0.3, eps=1e-6)  # beta1 below 1/e
    with pytest.raises(ValueError):
        bracket_sequences(9.0, 0.1, 0.9, eps=1e-6)  # mu outside (1, e^2)
    with pytest.raises(ValueError):
        bracket_sequences(E, 0.2, 0.9, eps=1e-6)  # beta1 too deep


def _seeded_field(side: int, value: float) -> DensityField:
    shape = LatticeShape.line(side)
    values = np.zeros(shape.sides)
    values[shape.center] = value
    return DensityField(shape, values)


def test_cml_run_converges_to_theta():
    xi0 = _seeded_field(201, 0.01)
    _, report = cml_run(
        xi0, 2.0, 5, 2000, tol=0.05, windows=(25,), stop_window=25, stop_tol=1e-9
    )
    assert report.converged_at is not None
    assert report.rows[-1]["sup_dist_w25"] < 1e-9


def test_cml_run_front_radius_reaches_window():
    xi0 = _seeded_field(201, 0.01)
    traj, report = cml_run(xi0, 2.0, 5, 400, tol=0.05, windows=(50,))
    radii = [row["front_radius"] for row in report.rows]
    assert radii[-1] >= 50
    # all iterates live below the global maximum of phi
    assert float(traj[-1].values.max()) <= math.exp(-1.0) + 1e-15


def test_cml_run_flags_repulsive_fixed_point_above_e_squared():
    xi0 = _seeded_field(51, 0.01)
    _, report = cml_run(xi0, 8.0, 2, 10, tol=0.05)
    assert report.theta == pytest.approx(theta(8.0), abs=0)
    assert not report.attractive
    assert report.converged_at is None


def test_cml_lower_bound_is_dominated_by_the_run():
    """The capped-linear closed form must sit below the true iteration."""
    xi0 = _seeded_field(101, 0.2)
    mu, R, a, b = 2.0, 3, 1.5, 0.14384103622589046
    traj, _ = cml_run(xi0, mu, R, 6, tol=0.05)
    for n in (1, 3, 6):
        lower = cml_lower_bound(xi0, mu, a, b, n, R)
        assert np.all(traj[n].values >= lower.values - 1e-12), f"step {n}"


def test_cml_lower_bound_rejects_non_dominating_cap():
    with pytest.raises(ValueError):
        cml_lower_bound(_seeded_field(11, 0.1), 2.0, 1.5, 0.9, 1, 2)
