"""Unit tests for closed-form densities, constants, adjoints, quadrature."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from minor_dyson._rng import stream
from minor_dyson.algebra import sample_gaussian_ensemble
from minor_dyson.densities import (
    adjoint_generator_apply,
    adjoint_lambda_density,
    constants,
    hciz,
    integrate_invariant_lambda,
    integrate_invariant_pair,
    integrate_transition_lambda,
    invariant_density_lambda,
    invariant_density_pair,
    invariant_pair_null_residual,
    log_hciz,
    scalar_ou_transition,
    transition_density_lambda,
    transition_density_pair_closed_n2,
    transition_density_pair_mc,
)
from minor_dyson.errors import InvalidInputError
from minor_dyson.minor_geometry import InterlacedPair, pair_from_matrix

BETAS = (1.0, 2.0, 4.0)


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------


def test_frozen_normalization_constants():
    # n = 2 chamber constants: 1/(2 sqrt(pi)) for beta = 1 and 2/pi for
    # beta = 2 (classical Mehta integrals divided into the ordered chamber)
    assert constants(2, 1).lambda_norm == pytest.approx(0.5 / math.sqrt(math.pi), rel=1e-12)
    assert constants(2, 2).lambda_norm == pytest.approx(2.0 / math.pi, rel=1e-12)
    assert constants(2, 2).pair_norm == pytest.approx(2.0 / math.pi, rel=1e-12)


def test_printed_constant_ratio_is_one_half_for_complex_and_quaternion():
    assert constants(2, 1).pair_constant_ratio == pytest.approx(1.0, rel=1e-10)
    for beta in (2, 4):
        for n in (2, 3):
            assert constants(n, beta).pair_constant_ratio == pytest.approx(0.5, rel=1e-10)
    assert constants(2, 2.5).pair_constant_ratio is None


def test_constants_input_validation():
    with pytest.raises(InvalidInputError):
        constants(0, 2)
    with pytest.raises(InvalidInputError):
        constants(2, 0.0)


# ---------------------------------------------------------------------------
# invariant laws
# ---------------------------------------------------------------------------


def test_invariant_lambda_normalizes_for_all_beta():
    for beta in (1.0, 2.0, 2.5, 4.0):
        total = integrate_invariant_lambda(2, beta)
        assert total == pytest.approx(1.0, abs=1e-10), (beta, total)
    assert integrate_invariant_lambda(3, 2.0) == pytest.approx(1.0, abs=1e-10)
    assert integrate_invariant_lambda(3, 4.0) == pytest.approx(1.0, abs=1e-10)
    assert integrate_invariant_lambda(3, 2.5) == pytest.approx(1.0, abs=2e-3)


def test_invariant_lambda_second_moment_matches_free_parameter_count():
    # E sum lam^2 = (number of free matrix parameters) / beta
    for n, beta in [(2, 1.0), (2, 2.0), (2, 4.0), (3, 2.0)]:
        nfree = n + beta * n * (n - 1) / 2.0
        second = integrate_invariant_lambda(n, beta, f=lambda lam: (lam**2).sum(axis=-1))
        assert second == pytest.approx(nfree / beta, rel=1e-9), (n, beta)


def test_invariant_pair_normalizes():
    for beta in BETAS:
        assert integrate_invariant_pair(2, beta) == pytest.approx(1.0, abs=1e-8)
    assert integrate_invariant_pair(3, 2.0) == pytest.approx(1.0, abs=1e-8)
    assert integrate_invariant_pair(2, 2.5) == pytest.approx(1.0, abs=1e-8)
    assert integrate_invariant_pair(3, 2.5) == pytest.approx(1.0, abs=3e-3)


def test_invariant_pair_minor_moment_matches_smaller_ensemble():
    # integrating out lam, the minor spectrum is the stationary (n-1) law:
    # E sum mu^2 = nfree(n-1, beta) / beta
    for n, beta in [(2, 2.0), (3, 2.0), (3, 2.5)]:
        want = ((n - 1) + beta * (n - 1) * (n - 2) / 2.0) / beta
        got = integrate_invariant_pair(n, beta, f=lambda lam, mu: (mu**2).sum(axis=-1))
        norm = integrate_invariant_pair(n, beta)
        assert got / norm == pytest.approx(want, rel=2e-3), (n, beta)


def test_printed_constant_integrates_to_two_not_one():
    for beta in (2.0, 4.0):
        off = integrate_invariant_pair(2, beta, use_printed_constant=True)
        assert off == pytest.approx(2.0, abs=1e-6)
    ok = integrate_invariant_pair(2, 1.0, use_printed_constant=True)
    assert ok == pytest.approx(1.0, abs=1e-6)


def test_invariant_pair_marginalizes_to_lambda_law():
    # integrating the pair density over mu returns the outer invariant law
    lam = np.array([-0.9, 0.3, 1.4])
    for beta in (1.0, 2.0, 4.0):
        total, _ = _mu_integral(lam, beta)
        want = invariant_density_lambda(lam, beta)
        assert total == pytest.approx(want, rel=1e-6), beta


def _mu_integral(lam, beta):
    def inner(m2):
        val, err = quad(
            lambda m1: invariant_density_pair(lam, np.array([m1, m2]), beta),
            lam[0],
            lam[1],
            epsabs=1e-12,
        )
        return val

    return quad(inner, lam[1], lam[2], epsabs=1e-12)


def test_density_functions_validate_domains():
    with pytest.raises(InvalidInputError):
        invariant_density_lambda(np.array([1.0, 0.0]), 2.0)
    assert (
        invariant_density_pair(np.array([0.0, 1.0]), np.array([2.0]), 2.0, zero_outside=True)
        == 0.0
    )


# ---------------------------------------------------------------------------
# HCIZ and transition laws
# ---------------------------------------------------------------------------


def test_hciz_two_point_closed_form():
    rng = stream(50)
    for _ in range(10):
        x = np.sort(rng.normal(size=2))
        y = np.sort(rng.normal(size=2))
        direct = (math.exp(x[0] * y[0] + x[1] * y[1]) - math.exp(x[0] * y[1] + x[1] * y[0])) / (
            (x[1] - x[0]) * (y[1] - y[0])
        )
        assert hciz(x, y) == pytest.approx(direct, rel=1e-10)


def test_hciz_symmetry_and_degeneration():
    rng = stream(51)
    x = np.sort(rng.normal(size=3))
    y = np.sort(rng.normal(size=3))
    assert log_hciz(x, y) == pytest.approx(log_hciz(y, x), rel=1e-12)
    # continuity across a coincidence: tie two arguments and compare with
    # a nearby separated evaluation
    y_tied = np.array([y[0], y[0], y[2]])
    y_near = np.array([y[0], y[0] + 1e-7, y[2]])
    assert log_hciz(x, y_tied) == pytest.approx(log_hciz(x, y_near), abs=1e-5)
    assert hciz(x, np.zeros(3)) == pytest.approx(1.0, rel=1e-10)


def test_scalar_ou_transition_matches_gaussian():
    t, x0, beta = 0.7, 1.3, 2.0
    c = math.exp(-t)
    var = (1.0 - c * c) / beta
    for x in (-0.5, 0.2, 2.0):
        want = math.exp(-((x - c * x0) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var)
        assert scalar_ou_transition(t, x0, x, beta) == pytest.approx(want, rel=1e-12)


def test_transition_density_normalizes_and_relaxes():
    lam_bar = np.array([-0.8, 1.1])
    for t in (0.1, 1.0):
        assert integrate_transition_lambda(t, lam_bar) == pytest.approx(1.0, abs=1e-8)
    # large times forget the start
    lam = np.array([-0.3, 0.9])
    late = transition_density_lambda(25.0, lam_bar, lam)
    assert late == pytest.approx(invariant_density_lambda(lam, 2.0), rel=1e-8)


def test_transition_density_short_time_concentrates():
    lam_bar = np.array([-1.0, 1.0])
    t = 0.05
    near = transition_density_lambda(t, lam_bar, lam_bar * math.exp(-t))
    far = transition_density_lambda(t, lam_bar, np.array([-1.0, 3.0]))
    assert near > 100.0 * far


def test_transition_mean_decays_exponentially():
    lam_bar = np.array([-0.8, 1.1])
    for t in (0.25, 0.75):
        mean = integrate_transition_lambda(t, lam_bar, f=lambda lam: lam.sum(axis=-1))
        assert mean == pytest.approx(math.exp(-t) * lam_bar.sum(), rel=1e-9)


def test_pair_transition_closed_form_matches_monte_carlo():
    bar = InterlacedPair(np.array([-0.7, 0.9]), np.array([0.1]))
    pair = InterlacedPair(np.array([-0.5, 1.1]), np.array([0.3]))
    t, beta = 0.6, 2
    closed = transition_density_pair_closed_n2(t, bar, pair, beta)
    mc, se = transition_density_pair_mc(t, bar, pair, beta, samples=40000, rng=stream(52))
    assert abs(mc - closed) < 4.0 * se, (closed, mc, se)


# ---------------------------------------------------------------------------
# adjoint (forward) generators
# ---------------------------------------------------------------------------


def test_forward_generator_annihilates_invariant_lambda_law():
    for beta in (1.0, 2.0, 4.0):
        lam = np.array([-1.1, 0.2, 0.9])
        residual = adjoint_lambda_density(
            lambda v: invariant_density_lambda(np.sort(v), beta), lam, beta
        )
        scale = invariant_density_lambda(lam, beta)
        assert abs(residual) < 1e-6 * max(scale, 1e-12), beta


def test_forward_generator_annihilates_invariant_pair_law():
    for k in range(4):
        matrix = sample_gaussian_ensemble(3, 2, stream(53, k))
        pair = pair_from_matrix(matrix)
        if pair.min_gap() < 0.15:
            continue
        assert invariant_pair_null_residual(pair, 2.0) < 1e-7


def test_forward_generator_pieces_sum_to_full():
    pair = InterlacedPair(np.array([-1.0, 0.1, 1.2]), np.array([-0.4, 0.7]))

    def f(lam, mu):
        return float(np.sum(lam**2) + np.prod(mu))

    parts = sum(
        adjoint_generator_apply(which, f, pair, 2.0) for which in ("lambda", "mu", "cross")
    )
    full = adjoint_generator_apply("full", f, pair, 2.0)
    assert full == pytest.approx(parts, rel=1e-10)
    with pytest.raises(InvalidInputError):
        adjoint_generator_apply("bogus", f, pair, 2.0)


def test_quadrature_rejects_unsupported_sizes():
    with pytest.raises(InvalidInputError):
        integrate_invariant_lambda(4, 2.0)
    with pytest.raises(InvalidInputError):
        integrate_invariant_pair(4, 2.0)
