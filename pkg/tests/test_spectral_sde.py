"""Unit tests for the spectral SDE integrators and covariation structure."""

import math

import numpy as np
import pytest

from minor_dyson._rng import stream
from minor_dyson.errors import InterlacingError, InvalidInputError
from minor_dyson.spectral_sde import (
    CoupledState,
    NoiseBundle,
    StepDiagnostics,
    collapsed_lower_gap_drift,
    collapsed_upper_gap_drift,
    coupled_paths,
    coupled_step,
    default_dt,
    dyson_drift,
    dyson_paths,
    dyson_step,
    empirical_covariation,
    gap_drift,
    noise_coefficients,
    quadratic_variation_analytic,
    regularize_pair,
    regularize_spectrum,
    tilde_pairs,
)

LAM3 = np.array([-1.0, 0.1, 1.2])
MU2 = np.array([-0.4, 0.7])


def test_dyson_drift_closed_form():
    lam = np.array([-1.0, 0.0, 2.0])
    want = np.array(
        [
            -(-1.0) + 1.0 / (-1.0 - 0.0) + 1.0 / (-1.0 - 2.0),
            0.0 + 1.0 / (0.0 + 1.0) + 1.0 / (0.0 - 2.0),
            -2.0 + 1.0 / (2.0 + 1.0) + 1.0 / (2.0 - 0.0),
        ]
    )
    assert np.allclose(dyson_drift(lam), want, atol=1e-14)


def test_tilde_pairs_enumeration():
    pi, pj = tilde_pairs(4)
    assert list(zip(pi.tolist(), pj.tolist())) == [
        (0, 1),
        (0, 2),
        (0, 3),
        (1, 2),
        (1, 3),
        (2, 3),
    ]


def test_coupled_state_validation():
    state = CoupledState(LAM3, MU2)
    assert state.n == 3
    assert state.min_gap() == pytest.approx(0.5)
    assert np.array_equal(state.as_vector(), np.concatenate([LAM3, MU2]))
    with pytest.raises(InterlacingError):
        CoupledState(LAM3, np.array([-0.4, 1.3]))
    with pytest.raises(InvalidInputError):
        CoupledState(LAM3, np.array([0.0]))


def test_minor_line_is_a_dyson_proposal_on_shared_diagonal_noise():
    state = CoupledState(LAM3, MU2)
    dt = 1e-4
    noise = NoiseBundle.sample(3, dt, stream(40))
    new = coupled_step(state, dt, 2.0, stream(41), noise=noise)
    mu_only = dyson_step(MU2, dt, 2.0, stream(42), noise=noise.diag[:2])
    assert np.array_equal(new.mu, mu_only)
    # decoupled mode severs exactly that tie and nothing else
    noise_dec = NoiseBundle(diag=noise.diag, tilde=noise.tilde, mu_diag=noise.diag[:2] * 0.0)
    new_dec = coupled_step(state, dt, 2.0, stream(43), noise=noise_dec, decoupled=True)
    assert np.array_equal(new_dec.lam, new.lam)
    assert not np.array_equal(new_dec.mu, new.mu)


def test_steps_preserve_order_and_interlacing():
    rng = stream(44)
    for beta in (1.0, 2.0, 2.5, 4.0):
        lam = LAM3.copy()
        state = CoupledState(LAM3, MU2)
        diag = StepDiagnostics()
        for _ in range(200):
            lam = dyson_step(lam, 1e-3, beta, rng, diagnostics=diag)
            state = coupled_step(state, 1e-3, beta, rng, diagnostics=diag)
        assert np.all(np.diff(lam) > 0)
        z = np.empty(5)
        z[0::2], z[1::2] = state.lam, state.mu
        assert np.all(np.diff(z) > 0)
        assert diag.violations_accepted == 0


def test_batched_runs_are_reproducible_and_strict():
    out1 = coupled_paths(LAM3, MU2, 0.2, 1e-3, 2.0, 32, seed=6)
    out2 = coupled_paths(LAM3, MU2, 0.2, 1e-3, 2.0, 32, seed=6)
    assert np.array_equal(out1.lam, out2.lam)
    assert np.array_equal(out1.mu, out2.mu)
    assert out1.lam.shape == (32, 3)
    gaps = np.diff(np.concatenate([out1.lam, out1.mu], axis=1)[:, [0, 3, 1, 4, 2]], axis=1)
    assert np.all(gaps > 0)
    assert out1.diagnostics.violations_accepted == 0


def test_per_path_starts_match_shared_start():
    stacked_lam = np.tile(LAM3, (8, 1))
    stacked_mu = np.tile(MU2, (8, 1))
    shared = coupled_paths(LAM3, MU2, 0.1, 1e-3, 2.0, 8, seed=3)
    stacked = coupled_paths(stacked_lam, stacked_mu, 0.1, 1e-3, 2.0, 8, seed=3)
    assert np.array_equal(shared.lam, stacked.lam)
    assert np.array_equal(shared.mu, stacked.mu)
    solo = dyson_paths(np.tile(LAM3, (8, 1)), 0.1, 1e-3, 2.0, 8, seed=3)
    solo_shared = dyson_paths(LAM3, 0.1, 1e-3, 2.0, 8, seed=3)
    assert np.array_equal(solo.lam, solo_shared.lam)


def test_recorded_trajectories_end_at_the_endpoint():
    out = coupled_paths(LAM3, MU2, 0.05, 1e-3, 2.0, 4, seed=9, record_stride=10)
    assert out.t_grid is not None and out.t_grid[-1] == pytest.approx(0.05)
    assert np.array_equal(out.lam_path[:, -1, :], out.lam)
    assert np.array_equal(out.mu_path[:, -1, :], out.mu)


def test_noise_map_shapes_and_corner_channel():
    a_diag, a_tilde = noise_coefficients(CoupledState(LAM3, MU2), 2.0)
    assert a_diag.shape == (3, 3)
    assert a_tilde.shape == (3, 3)
    # rows sum: sum_a K_a * [sum over channels] relates to the secular
    # structure; at minimum every row must be finite and nonzero
    assert np.all(np.isfinite(a_diag)) and np.all(np.isfinite(a_tilde))
    assert np.all(np.abs(a_diag).sum(axis=1) > 0)


def test_empirical_covariation_matches_analytic():
    state = CoupledState(LAM3, MU2)
    beta = 2.0
    analytic = quadratic_variation_analytic(state, beta)
    emp, se = empirical_covariation(state, 1e-4, beta, samples=60000, seed=5)
    assert analytic.shape == emp.shape == (5, 5)
    z = (emp - analytic) / np.where(se > 0, se, 1.0)
    assert np.max(np.abs(z)) < 4.5, np.max(np.abs(z))
    # the diagonal quadratic variation is 2/beta for every coordinate
    assert np.allclose(np.diag(analytic), 2.0 / beta)


def test_cross_covariation_sign_and_formula():
    state = CoupledState(LAM3, MU2)
    beta = 2.0
    analytic = quadratic_variation_analytic(state, beta)
    lam, mu = state.lam, state.mu
    dlm = lam[:, None] - mu[None, :]
    p_lam = dlm.prod(axis=1)
    pp_lam = np.array([np.prod([lam[a] - lam[b] for b in range(3) if b != a]) for a in range(3)])
    kappa = p_lam / pp_lam
    p_mu = (-dlm).prod(axis=0)
    pp_mu = np.array([np.prod([mu[k] - mu[l] for l in range(2) if l != k]) for k in range(2)])
    r2 = -p_mu / pp_mu
    want = (2.0 / beta) * kappa[:, None] * r2[None, :] / dlm**2
    assert np.allclose(analytic[:3, 3:], want, atol=1e-12)


def test_gap_drifts_finite_and_positive_at_boundaries():
    lower, upper = gap_drift(LAM3, MU2)
    assert lower.shape == upper.shape == (2,)
    rng = stream(46)
    for _ in range(20):
        lam = np.sort(rng.normal(size=4) * 1.5)
        while np.diff(lam).min() < 0.1:
            lam = np.sort(rng.normal(size=4) * 1.5)
        mu = 0.5 * (lam[:-1] + lam[1:])
        i = int(rng.integers(0, 3))
        mu_low = mu.copy()
        mu_low[i] = lam[i]
        assert collapsed_lower_gap_drift(lam, mu_low, i) > 0
        mu_high = mu.copy()
        mu_high[i] = lam[i + 1]
        assert collapsed_upper_gap_drift(lam, mu_high, i) > 0
    with pytest.raises(InvalidInputError):
        collapsed_lower_gap_drift(LAM3, MU2, 0)


def test_regularization_helpers():
    out = regularize_spectrum(np.array([1.0, 1.0, 0.0]))
    assert np.all(np.diff(out) > 0)
    lam, mu = regularize_pair(np.array([0.0, 1.0]), np.array([0.0]))
    assert lam[0] < mu[0] < lam[1]
    with pytest.raises(InterlacingError):
        regularize_pair(np.array([0.0, 1.0]), np.array([2.0]))
    assert default_dt(np.array([0.0, 0.5])) == pytest.approx(5e-4)
    assert default_dt(np.array([0.0, 1.0]), np.array([0.2])) == pytest.approx(2e-4)


def test_stationary_moments_of_dyson_run():
    # beta = 2, n = 2: at stationarity E sum lam = 0 and E sum lam^2 = 2
    out = dyson_paths(np.array([-0.5, 0.5]), 4.0, 2e-3, 2.0, 4000, seed=77)
    s1 = out.lam.sum(axis=1)
    s2 = (out.lam**2).sum(axis=1)
    z1 = s1.mean() / (s1.std(ddof=1) / math.sqrt(s1.size))
    z2 = (s2.mean() - 2.0) / (s2.std(ddof=1) / math.sqrt(s2.size))
    assert abs(z1) < 4.0, z1
    assert abs(z2) < 4.0, z2
