"""Unit tests for the exact matrix OU sampler, generator, and wire formats."""

import io
import math

import numpy as np
import pytest

from minor_dyson._rng import path_stream, stream
from minor_dyson.algebra import free_parameter_count, sample_gaussian_ensemble
from minor_dyson.errors import InvalidInputError
from minor_dyson.matrix_process import (
    MatrixPathConfig,
    apply_dyson_generator,
    generator_eigenrelation,
    ou_endpoints,
    ou_path,
    ou_step_exact,
    read_matrix_paths_csv,
    read_matrix_paths_frame,
    write_matrix_paths_csv,
    write_matrix_paths_frame,
)

BETAS = (1, 2, 4)


def test_ou_step_zero_time_is_identity():
    m = sample_gaussian_ensemble(3, 2, stream(30))
    out = ou_step_exact(m, 0.0, stream(31))
    assert np.array_equal(out.components, m.components)
    assert out is not m
    with pytest.raises(InvalidInputError):
        ou_step_exact(m, -0.1, stream(31))


def test_ou_step_mean_reversion_and_variance():
    # from a fixed start, E B_t = e^{-t} B_0 and each free parameter has
    # variance (1 - e^{-2t}) times its stationary value
    n, beta, t, samples = 2, 2, 0.7, 3000
    m0 = sample_gaussian_ensemble(n, beta, stream(32))
    c = math.exp(-t)
    rng = stream(33)
    draws = np.stack([ou_step_exact(m0, t, rng).free_parameters() for _ in range(samples)])
    base = m0.free_parameters()
    mean_err = draws.mean(axis=0) - c * base
    stat_var = np.full(base.size, 1.0 / (2.0 * beta))
    stat_var[:n] = 1.0 / beta
    se = np.sqrt((1.0 - c * c) * stat_var / samples)
    assert np.all(np.abs(mean_err) < 4.0 * se)
    var_err = draws.var(axis=0) - (1.0 - c * c) * stat_var
    se_var = (1.0 - c * c) * stat_var * math.sqrt(2.0 / samples)
    assert np.all(np.abs(var_err) < 4.0 * se_var)


def test_ou_path_streams_are_reproducible_and_distinct():
    b0 = sample_gaussian_ensemble(3, 1, stream(34))
    config = MatrixPathConfig(n=3, beta=1, t_grid=[0.25, 0.5, 1.0], seed=9, paths=2)
    first = ou_path(b0, config, 0)
    again = ou_path(b0, config, 0)
    other = ou_path(b0, config, 1)
    assert len(first) == 3
    for a, b in zip(first, again):
        assert np.array_equal(a.components, b.components)
    assert not np.array_equal(first[-1].components, other[-1].components)


def test_ou_endpoints_match_single_time_paths():
    # both draw exactly one Gaussian from the stream keyed by (seed, p)
    b0 = sample_gaussian_ensemble(3, 2, stream(35))
    t, paths, seed = 0.6, 5, 12
    ends = ou_endpoints(b0, t, paths, seed)
    config = MatrixPathConfig(n=3, beta=2, t_grid=[t], seed=seed, paths=paths)
    for p in range(paths):
        walked = ou_path(b0, config, p)[0]
        assert np.allclose(ends[p], walked.components, atol=1e-15)


def test_invalid_grids_rejected():
    with pytest.raises(InvalidInputError):
        MatrixPathConfig(n=2, beta=1, t_grid=[0.0, 1.0])
    with pytest.raises(InvalidInputError):
        MatrixPathConfig(n=2, beta=1, t_grid=[1.0, 0.5])
    with pytest.raises(InvalidInputError):
        MatrixPathConfig(n=2, beta=1, t_grid=[1.0], paths=0)


def test_generator_on_linear_and_quadratic_observables():
    # G tr B = -tr B and G tr B^2 = const - 2 tr B^2 pointwise
    for beta in BETAS:
        m = sample_gaussian_ensemble(3, beta, stream(36, beta))
        g_tr = apply_dyson_generator(lambda x: x.trace(), m)
        assert g_tr == pytest.approx(-m.trace(), rel=1e-6, abs=1e-8)

        def trace_sq(x):
            vec = x.free_parameters()
            return float(np.sum(vec[:3] ** 2) + 2.0 * np.sum(vec[3:] ** 2))

        nfree = free_parameter_count(3, beta)
        want = 2.0 * nfree / beta - 2.0 * trace_sq(m)
        assert apply_dyson_generator(trace_sq, m) == pytest.approx(want, rel=1e-6, abs=1e-7)


def test_generator_eigenrelation_counts_interactions():
    for beta in BETAS:
        for n in (2, 3, 4):
            m = sample_gaussian_ensemble(n, beta, stream(37, beta, n))
            value = generator_eigenrelation(m)
            assert value == pytest.approx(n * (n - 1) / 2.0, abs=1e-5)


def test_csv_roundtrip():
    rng = stream(38)
    t_grid = np.array([0.1, 0.4, 1.3])
    n, beta = 3, 2
    data = rng.normal(size=(2, 3, free_parameter_count(n, beta)))
    buf = io.StringIO()
    write_matrix_paths_csv(buf, t_grid, data, n, beta)
    text = buf.getvalue()
    assert text.startswith("path,t,i,j,comp,value\n")
    assert "\r" not in text
    grid_back, data_back = read_matrix_paths_csv(io.StringIO(text), n, beta)
    assert np.array_equal(grid_back, t_grid)
    assert np.array_equal(data_back, data)  # repr roundtrips exactly


def test_frame_roundtrip_and_layout():
    rng = stream(39)
    t_grid = np.array([0.5, 1.0])
    n, beta = 2, 4
    data = rng.normal(size=(3, 2, free_parameter_count(n, beta)))
    buf = io.BytesIO()
    write_matrix_paths_frame(buf, t_grid, data, n, beta)
    raw = buf.getvalue()
    assert raw[:4] == b"MDYS"
    frame = read_matrix_paths_frame(io.BytesIO(raw))
    assert (frame["n"], frame["beta"]) == (n, beta)
    assert np.array_equal(frame["t_grid"], t_grid)
    assert np.array_equal(frame["data"], data)
    # corrupted magic is rejected
    with pytest.raises(InvalidInputError):
        read_matrix_paths_frame(io.BytesIO(b"XXXX" + raw[4:]))
    # truncation anywhere (header or payload) is rejected, not mis-parsed
    for cut in (2, 10, 30, len(raw) - 8):
        with pytest.raises(InvalidInputError):
            read_matrix_paths_frame(io.BytesIO(raw[:cut]))


def test_path_stream_is_counter_based():
    # the same (seed, path) pair always yields the same draws, and
    # neighbouring paths differ
    a = path_stream(5, 0).normal(size=4)
    b = path_stream(5, 0).normal(size=4)
    c = path_stream(5, 1).normal(size=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
