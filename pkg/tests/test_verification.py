"""Unit tests for three-spectra reconstruction, witnesses, experiments."""

import math

import numpy as np
import pytest

from minor_dyson._rng import stream
from minor_dyson.algebra import SelfAdjointMatrix, eigenvalues, sample_gaussian_ensemble
from minor_dyson.errors import InfeasibleGaugeError, InvalidInputError
from minor_dyson.verification import (
    AngleGauge,
    TripleSpectra,
    det_minor_11,
    gauge_from_matrix,
    ks_two_sample,
    nonmarkov_witness,
    path_equivalence_experiment,
    reconstruct_triple_n3,
    stationarity_experiment,
    triple_from_matrix,
    witness_phi,
)


def _stats(report):
    return {s.name: s for s in report.statistics}


def _tests(report):
    return {t.name: t for t in report.tests}


def _wide_triple():
    # fixed ensemble draw with comfortable interlacing gaps, feasible at
    # both witness angles 0 and pi
    return triple_from_matrix(sample_gaussian_ensemble(3, 2, stream(60, 8)))


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------


def test_triple_spectra_validation():
    with pytest.raises(InvalidInputError):
        TripleSpectra([0.0, 1.0], [0.5], [])
    with pytest.raises(InvalidInputError):
        TripleSpectra([0.0, 1.0, 2.0], [0.5, 2.5], [0.7])
    with pytest.raises(InvalidInputError):
        TripleSpectra([0.0, 1.0, 2.0], [0.5, 1.5], [0.2])
    triple = TripleSpectra([2.0, 0.0, 1.0], [1.5, 0.5], [0.7])
    assert triple.n == 3
    assert np.all(np.diff(triple.lam) > 0)
    assert triple.diameter() == pytest.approx(2.0)


def test_angle_gauge_reduces_and_completes():
    gauge = AngleGauge(2.0 * math.pi + 0.3, eta1=0.1, eta2=0.05)
    assert gauge.s == pytest.approx(0.3)
    assert gauge.eta3 == pytest.approx(gauge.s - 0.1 - 0.05)
    with pytest.raises(InvalidInputError):
        AngleGauge(math.inf)


def test_triple_from_matrix_matches_minor_spectra():
    matrix = sample_gaussian_ensemble(4, 2, stream(61))
    triple = triple_from_matrix(matrix)
    assert triple.lam == pytest.approx(eigenvalues(matrix), abs=1e-10)
    assert triple.mu == pytest.approx(eigenvalues(matrix.minor(3)), abs=1e-10)
    assert triple.nu == pytest.approx(eigenvalues(matrix.minor(2)), abs=1e-10)
    with pytest.raises(InvalidInputError):
        triple_from_matrix(sample_gaussian_ensemble(2, 2, stream(61)))


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------


def test_reconstruction_round_trips_spectra_and_gauge():
    count = 0
    for k in range(20):
        matrix = sample_gaussian_ensemble(3, 2, stream(62, k))
        triple = triple_from_matrix(matrix)
        gauge = gauge_from_matrix(matrix)
        for branch in (1, -1):
            try:
                built = reconstruct_triple_n3(triple, gauge, branch)
            except InfeasibleGaugeError:
                continue
            rebuilt = triple_from_matrix(built)
            assert rebuilt.lam == pytest.approx(triple.lam, abs=1e-8)
            assert rebuilt.mu == pytest.approx(triple.mu, abs=1e-8)
            assert rebuilt.nu == pytest.approx(triple.nu, abs=1e-8)
            back = gauge_from_matrix(built)
            assert math.cos(back.s) == pytest.approx(math.cos(gauge.s), abs=1e-7)
            count += 1
    assert count >= 20


def test_reconstruction_recovers_the_original_matrix_on_one_branch():
    # the extracted gauge plus one of the two branches must reproduce the
    # very matrix the triple came from
    for k in range(6):
        matrix = sample_gaussian_ensemble(3, 2, stream(63, k))
        triple = triple_from_matrix(matrix)
        gauge = gauge_from_matrix(matrix)
        errs = []
        for branch in (1, -1):
            try:
                built = reconstruct_triple_n3(triple, gauge, branch)
            except InfeasibleGaugeError:
                continue
            errs.append(float(np.max(np.abs(built.components - matrix.components))))
        assert errs and min(errs) < 1e-7, (k, errs)


def test_reconstruction_rejects_angles_outside_the_admissible_band():
    # this draw leaves s = pi outside the feasible band
    triple = triple_from_matrix(sample_gaussian_ensemble(3, 2, stream(60, 36)))
    reconstruct_triple_n3(triple, AngleGauge(0.0))
    with pytest.raises(InfeasibleGaugeError):
        reconstruct_triple_n3(triple, AngleGauge(math.pi))
    with pytest.raises(InvalidInputError):
        reconstruct_triple_n3(triple, AngleGauge(0.0), branch=2)


# ---------------------------------------------------------------------------
# witness observable
# ---------------------------------------------------------------------------


def test_witness_phi_and_minor_determinant():
    matrix = sample_gaussian_ensemble(3, 2, stream(64))
    z = matrix.components[..., 0] + 1j * matrix.components[..., 1]
    want = z[0, 0].real * np.linalg.det(z).real
    assert witness_phi(matrix) == pytest.approx(want, rel=1e-12)
    want_11 = np.linalg.det(z[1:, 1:]).real
    assert det_minor_11(matrix) == pytest.approx(want_11, rel=1e-12)


def test_minor_determinant_sees_the_angle_but_not_the_pure_gauge():
    triple = _wide_triple()
    d0 = det_minor_11(reconstruct_triple_n3(triple, AngleGauge(0.0)))
    dpi = det_minor_11(reconstruct_triple_n3(triple, AngleGauge(math.pi)))
    assert abs(d0 - dpi) > 0.1
    shifted = det_minor_11(
        reconstruct_triple_n3(triple, AngleGauge(0.0, eta1=0.7, eta2=-1.1))
    )
    assert shifted == pytest.approx(d0, abs=1e-12)


# ---------------------------------------------------------------------------
# two-sample KS
# ---------------------------------------------------------------------------


def test_ks_two_sample_behaviour():
    rng = stream(65)
    xs = rng.normal(size=4000)
    stat_same, p_same = ks_two_sample(xs, rng.normal(size=4000))
    assert p_same > 0.005
    stat_far, p_far = ks_two_sample(xs, rng.normal(size=4000) + 1.0)
    assert p_far < 1e-10 and stat_far > stat_same
    with pytest.raises(InvalidInputError):
        ks_two_sample(xs, [])


# ---------------------------------------------------------------------------
# experiments (small, seeded configurations)
# ---------------------------------------------------------------------------


def test_nonmarkov_witness_separates_the_two_preparations():
    report = nonmarkov_witness(_wide_triple(), 0.0, math.pi, paths=20_000, seed=3)
    assert report.passed
    stats = _stats(report)
    assert stats["delta_over_sigma"].value > 10.0
    assert abs(_tests(report)["gap_matches_analytic"].statistic) <= 3.0
    assert stats["delta_analytic"].value != 0.0


def test_nonmarkov_witness_null_run_reports_zero_gap():
    report = nonmarkov_witness(_wide_triple(), 1.0, 1.0, paths=4_000, seed=3)
    assert not report.passed  # identical preparations cannot separate
    assert _stats(report)["delta_analytic"].value == 0.0
    assert abs(_tests(report)["gap_matches_analytic"].statistic) <= 3.0


def test_path_equivalence_small_run_passes():
    report = path_equivalence_experiment(
        2, 2, 0.3, 2000, seed=0, dt=1e-3, covariation_samples=40_000
    )
    assert report.passed
    ks_ps = [t.p for t in report.tests if t.name.startswith("ks:")]
    assert len(ks_ps) == 6 and min(ks_ps) > 0.005
    assert _stats(report)["cross_covariation_max_rel_err"].value < 0.05


def test_path_equivalence_decoupled_control_fails_on_covariation():
    report = path_equivalence_experiment(
        2, 2, 0.3, 2000, seed=0, dt=1e-3, covariation_samples=40_000, decoupled=True
    )
    assert not report.passed
    assert _tests(report)["cross_covariation_max_z"].statistic > 10.0


def test_path_equivalence_validates_inputs():
    with pytest.raises(InvalidInputError):
        path_equivalence_experiment(2, 3, 0.3, 100)
    with pytest.raises(InvalidInputError):
        path_equivalence_experiment(2, 2, 0.3, 1)


def test_stationarity_holds_from_ensemble_starts():
    report = stationarity_experiment(3, 2, 0.2, 400, seed=5, dt=1e-3)
    assert report.passed
    for t in report.tests:
        assert abs(t.statistic) <= 3.0, t.name


def test_stationarity_detects_a_shifted_start():
    report = stationarity_experiment(3, 2, 0.05, 400, seed=5, dt=1e-3, shift=0.5)
    assert not report.passed
    drift = _tests(report)["moment_drift:sum_lambda"]
    assert abs(drift.statistic) > 10.0
    with pytest.raises(InvalidInputError):
        stationarity_experiment(3, 2.5, 0.1, 100)


def test_reports_serialize_and_digest_reproducibly():
    a = stationarity_experiment(3, 2, 0.0, 50, seed=7)
    b = stationarity_experiment(3, 2, 0.0, 50, seed=7)
    assert a.to_json() == b.to_json()
    assert a.provenance["config_digest"] == b.provenance["config_digest"]
    assert a.provenance["seed"] == 7
    payload = a.to_dict()
    assert payload["pass"] is True and payload["name"] == "stationarity"
