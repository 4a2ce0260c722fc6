"""Unit tests for interlacing geometry: pairs, identities, bordered forms."""

import numpy as np
import pytest

from minor_dyson._rng import stream
from minor_dyson.algebra import eigenvalues, sample_gaussian_ensemble
from minor_dyson.errors import InterlacingError, InvalidInputError
from minor_dyson.minor_geometry import (
    InterlacedPair,
    bordered_form,
    identity_suite,
    interlace_check,
    jacobian_check,
    pair_from_matrix,
    r_from_spectra,
    reconstruct,
)

BETAS = (1, 2, 4)


def _random_pair(n, beta, key, attempt_limit=64):
    for attempt in range(attempt_limit):
        m = sample_gaussian_ensemble(n, beta, stream(100, key, attempt))
        pair = pair_from_matrix(m)
        if pair.is_strict():
            return m, pair
    raise AssertionError("no strict draw found")


def test_pair_from_matrix_interlaces():
    for beta in BETAS:
        for n in (2, 3, 5):
            m = sample_gaussian_ensemble(n, beta, stream(101, beta, n))
            pair = pair_from_matrix(m)
            assert pair.n == n
            assert np.all(pair.mu >= pair.lam[:-1] - 1e-12)
            assert np.all(pair.mu <= pair.lam[1:] + 1e-12)
            assert np.allclose(pair.lam, eigenvalues(m), atol=1e-12)
            assert np.allclose(pair.mu, eigenvalues(m.minor(n - 1)), atol=1e-8)


def test_interlaced_pair_validation():
    with pytest.raises(InterlacingError):
        InterlacedPair(np.array([0.0, 1.0]), np.array([2.0]))
    with pytest.raises(InvalidInputError):
        InterlacedPair(np.array([0.0, 1.0]), np.array([0.2, 0.5]))
    pair = InterlacedPair(np.array([0.0, 1.0, 2.0]), np.array([0.5, 1.5]))
    assert pair.is_strict()
    assert pair.min_gap() == pytest.approx(0.5)
    assert pair.diameter() == pytest.approx(2.0)
    weak = InterlacedPair(np.array([0.0, 1.0]), np.array([0.0]))
    assert not weak.is_strict()


def test_interlace_check_modes():
    lam = np.array([0.0, 1.0, 2.0])
    assert interlace_check(lam, np.array([0.5, 1.5]), strict=True)
    assert interlace_check(lam, np.array([0.0, 1.5]), strict=False)
    assert not interlace_check(lam, np.array([0.0, 1.5]), strict=True)
    assert not interlace_check(lam, np.array([1.5, 0.5]), strict=False)


def test_r_from_spectra_reproduces_border_data():
    # the squared border couplings and corner reproduce trace identities
    for beta in BETAS:
        for n in (2, 3, 4):
            _, pair = _random_pair(n, beta, 7 * n + beta)
            r, corner = r_from_spectra(pair.lam, pair.mu)
            assert np.all(r > 0)
            lhs = float(np.sum(r**2)) + 0.5 * corner**2
            rhs = 0.5 * float(np.sum(pair.lam**2) - np.sum(pair.mu**2))
            assert lhs == pytest.approx(rhs, rel=1e-10)
            assert corner == pytest.approx(
                float(np.sum(pair.lam) - np.sum(pair.mu)), rel=1e-9, abs=1e-12
            )


def test_identity_suite_residuals_small():
    for beta in BETAS:
        for n in (2, 4, 6):
            _, pair = _random_pair(n, beta, 13 * n + beta)
            report = identity_suite(pair)
            assert report.passed, report.to_json()
            for stat in report.statistics:
                assert stat.value < 1e-8, (stat.name, stat.value)


def test_identity_suite_needs_strict_interlacing():
    weak = InterlacedPair(np.array([0.0, 1.0]), np.array([0.0]))
    with pytest.raises(InterlacingError):
        identity_suite(weak)


def test_jacobian_determinant_matches_closed_form():
    for beta in BETAS:
        for n in (2, 3, 5):
            _, pair = _random_pair(n, beta, 17 * n + beta)
            result = jacobian_check(pair)
            assert result["rel_error"] < 1e-5, result


def test_bordered_form_reconstruct_roundtrip():
    for beta in BETAS:
        for n in (3, 4):
            m, pair = _random_pair(n, beta, 19 * n + beta)
            form = bordered_form(m)
            back = reconstruct(form)
            assert np.allclose(back.components, m.components, atol=1e-10)
            # border magnitudes agree with the closed-form r-values
            r, corner = r_from_spectra(pair.lam, pair.mu)
            assert np.allclose(np.sort(form.r), np.sort(r), atol=1e-9)
            assert form.corner == pytest.approx(corner, rel=1e-9, abs=1e-12)


def test_reconstruct_without_conjugator_has_bordered_shape():
    m, pair = _random_pair(4, 2, 23)
    form = bordered_form(m)
    plain = reconstruct(form, apply_conjugator=False)
    comps = plain.components
    inner = comps[:3, :3, :]
    # inner block diagonal with the minor spectrum
    offdiag = inner.copy()
    offdiag[np.arange(3), np.arange(3), :] = 0.0
    assert np.allclose(offdiag, 0.0, atol=1e-10)
    assert np.allclose(np.sort(inner[np.arange(3), np.arange(3), 0]), pair.mu, atol=1e-9)
    assert np.allclose(eigenvalues(plain), pair.lam, atol=1e-9)
