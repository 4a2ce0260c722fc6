"""Unit tests for the real/complex/quaternion matrix algebra layer."""

import numpy as np
import pytest

from minor_dyson._rng import stream
from minor_dyson.algebra import (
    AlgebraElement,
    SelfAdjointMatrix,
    algebra_mul,
    conjugate,
    eigenvalues,
    embed_quaternion_matrix,
    free_parameter_count,
    haar_unitary,
    pfaffian,
    quaternion_determinant,
    sample_gaussian_components,
    sample_gaussian_ensemble,
)
from minor_dyson.errors import InvalidInputError

BETAS = (1, 2, 4)


def _as_complex(matrix):
    assert matrix.beta == 2
    return matrix.components[..., 0] + 1j * matrix.components[..., 1]


def test_self_adjointness_of_sampled_matrices():
    for beta in BETAS:
        for k in range(5):
            m = sample_gaussian_ensemble(4, beta, stream(10, beta, k))
            comps = m.components
            # component 0 symmetric, the imaginary-type components antisymmetric
            assert np.allclose(comps[..., 0], comps[..., 0].T)
            for c in range(1, beta):
                assert np.allclose(comps[..., c], -comps[..., c].T)


def test_invalid_inputs_rejected():
    with pytest.raises(InvalidInputError):
        SelfAdjointMatrix(np.zeros((3, 3, 3)))  # beta = 3 is not a division algebra
    with pytest.raises(InvalidInputError):
        SelfAdjointMatrix(np.zeros((2, 3, 1)))  # not square
    bad = np.zeros((2, 2, 1))
    bad[0, 1, 0] = 1.0  # not symmetric
    with pytest.raises(InvalidInputError):
        SelfAdjointMatrix(bad)


def test_free_parameter_count_and_roundtrip():
    for beta in BETAS:
        for n in (2, 3, 5):
            m = sample_gaussian_ensemble(n, beta, stream(11, beta, n))
            vec = m.free_parameters()
            assert vec.shape == (free_parameter_count(n, beta),)
            assert vec.shape == (n + beta * n * (n - 1) // 2,)
            back = SelfAdjointMatrix.from_free_parameters(vec, n, beta)
            assert np.array_equal(back.components, m.components)


def test_eigenvalues_match_numpy_for_real_and_complex():
    for k in range(5):
        m1 = sample_gaussian_ensemble(5, 1, stream(12, 1, k))
        want = np.sort(np.linalg.eigvalsh(m1.components[..., 0]))
        assert np.allclose(eigenvalues(m1), want, atol=1e-12)

        m2 = sample_gaussian_ensemble(5, 2, stream(12, 2, k))
        want = np.sort(np.linalg.eigvalsh(_as_complex(m2)))
        assert np.allclose(eigenvalues(m2), want, atol=1e-12)


def test_quaternion_eigenvalues_are_collapsed_kramers_pairs():
    for k in range(5):
        m = sample_gaussian_ensemble(4, 4, stream(13, k))
        lam = eigenvalues(m)
        assert lam.shape == (4,)
        doubled = np.sort(np.linalg.eigvalsh(embed_quaternion_matrix(m.components)))
        assert np.allclose(doubled[0::2], doubled[1::2], atol=1e-9)
        assert np.allclose(lam, doubled[0::2], atol=1e-9)


def test_scalar_algebra_norms_are_multiplicative():
    rng = stream(14)
    for beta in BETAS:
        for _ in range(5):
            x = AlgebraElement(tuple(rng.normal(size=beta)))
            y = AlgebraElement(tuple(rng.normal(size=beta)))
            xy = algebra_mul(x, y)
            assert xy.norm() == pytest.approx(x.norm() * y.norm(), rel=1e-12)
            # conjugation reverses products: (xy)* = y* x*
            lhs = algebra_mul(x, y).conj()
            rhs = algebra_mul(y.conj(), x.conj())
            assert np.allclose(lhs.components, rhs.components, atol=1e-12)


def test_quaternion_multiplication_is_associative_not_commutative():
    rng = stream(15)
    x = AlgebraElement(tuple(rng.normal(size=4)))
    y = AlgebraElement(tuple(rng.normal(size=4)))
    z = AlgebraElement(tuple(rng.normal(size=4)))
    lhs = algebra_mul(algebra_mul(x, y), z)
    rhs = algebra_mul(x, algebra_mul(y, z))
    assert np.allclose(lhs.components, rhs.components, atol=1e-12)
    assert not np.allclose(
        algebra_mul(x, y).components, algebra_mul(y, x).components
    )


def test_haar_unitary_is_unitary_in_the_standard_representation():
    for beta in BETAS:
        u = haar_unitary(4, beta, stream(16, beta))
        eye = np.eye(u.shape[0])
        assert np.allclose(u @ u.conj().T, eye, atol=1e-10)
    # quaternionic case: the embedding commutes with the symplectic form
    u4 = haar_unitary(3, 4, stream(16, 7))
    j2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    j = np.kron(np.eye(3), j2)
    assert np.allclose(u4 @ j @ u4.T, j, atol=1e-10)


def test_haar_conjugation_preserves_spectrum():
    for beta in BETAS:
        m = sample_gaussian_ensemble(4, beta, stream(17, beta))
        u = haar_unitary(4, beta, stream(18, beta))
        rotated = conjugate(m, u)
        assert np.allclose(eigenvalues(rotated), eigenvalues(m), atol=1e-9)


def test_standard_representation_roundtrip():
    for beta in BETAS:
        m = sample_gaussian_ensemble(3, beta, stream(25, beta))
        if beta == 4:
            back = SelfAdjointMatrix.from_embedding(m.standard())
        else:
            back = SelfAdjointMatrix.from_standard(m.standard(), beta)
        assert np.allclose(back.components, m.components, atol=1e-12)


def test_pfaffian_known_values():
    a = np.array([[0.0, 3.0], [-3.0, 0.0]])
    assert pfaffian(a) == pytest.approx(3.0)
    # direct 4x4: pf = a01*a23 - a02*a13 + a03*a12
    rng = stream(19)
    for _ in range(10):
        v = rng.normal(size=6)
        b = np.zeros((4, 4))
        b[0, 1], b[0, 2], b[0, 3], b[1, 2], b[1, 3], b[2, 3] = v
        b -= b.T
        want = v[0] * v[5] - v[1] * v[4] + v[2] * v[3]
        assert pfaffian(b) == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_pfaffian_squares_to_determinant():
    rng = stream(20)
    for size in (2, 4, 6, 8):
        a = rng.normal(size=(size, size))
        a = a - a.T
        assert pfaffian(a) ** 2 == pytest.approx(np.linalg.det(a), rel=1e-8)
    assert pfaffian(np.zeros((3, 3))) == 0.0  # odd dimension


def test_quaternion_determinant_matches_collapsed_spectrum():
    for k in range(5):
        m = sample_gaussian_ensemble(3, 4, stream(21, k))
        want = float(np.prod(eigenvalues(m)))
        assert quaternion_determinant(m) == pytest.approx(want, rel=1e-9)


def test_gaussian_component_variances():
    # diagonal entries N(0, 1/beta), off-diagonal components N(0, 1/(2 beta))
    for beta in BETAS:
        n, samples = 3, 4000
        comps = sample_gaussian_components(n, beta, stream(22, beta), (samples,))
        diag = comps[:, np.arange(n), np.arange(n), 0]
        var_d = diag.var()
        se_d = (1.0 / beta) * np.sqrt(2.0 / (samples * n))
        assert abs(var_d - 1.0 / beta) < 4 * se_d
        off = comps[:, 0, 1, :]
        var_o = off.var()
        se_o = (0.5 / beta) * np.sqrt(2.0 / (samples * beta))
        assert abs(var_o - 0.5 / beta) < 4 * se_o


def test_minor_is_upper_left_block():
    m = sample_gaussian_ensemble(5, 2, stream(23))
    sub = m.minor(3)
    assert sub.n == 3
    assert np.array_equal(sub.components, m.components[:3, :3, :])


def test_trace_and_scalar_ops():
    m = sample_gaussian_ensemble(3, 2, stream(24))
    assert m.trace() == pytest.approx(float(np.trace(m.components[..., 0])))
    both = 0.5 * m + 0.5 * m
    assert np.allclose(both.components, m.components)
