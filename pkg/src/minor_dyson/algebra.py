"""Scalar algebras, self-adjoint matrices and their spectra.

Matrices are self-adjoint over the reals (beta = 1), complexes (beta = 2)
or quaternions (beta = 4).  A matrix entry is stored as its beta real
components; a quaternion z = z0 + z1 e1 + z2 e2 + z3 e3 follows the Hamilton
table e1 e2 = -e2 e1 = e3, e1 e3 = -e3 e1 = -e2, e2 e3 = -e3 e2 = e1,
e_r^2 = -1.

Quaternion matrices are handled through their 2n x 2n complex embedding: the
entry (k, l) occupies rows/cols 2k..2k+1, 2l..2l+1 as the block

    [[z0 + i z1,  z2 + i z3],
     [-z2 + i z3, z0 - i z1]].

The embedding of a self-adjoint quaternion matrix is Hermitian with a doubly
degenerate spectrum; eigenvalue routines collapse the Kramers pairs back to n
values.  Traces of quaternion matrices are sums over the n diagonal entries
(half the embedding trace).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSpectrumError,
    EigenvaluePairingError,
    InvalidInputError,
    NumericalFailureError,
)

__all__ = [
    "BETAS",
    "AlgebraElement",
    "algebra_mul",
    "SelfAdjointMatrix",
    "free_parameter_count",
    "embed_quaternion_matrix",
    "unembed_quaternion_matrix",
    "eigenvalues",
    "batched_eigenvalues",
    "pfaffian",
    "quaternion_determinant",
    "sample_gaussian_ensemble",
    "sample_gaussian_components",
    "haar_unitary",
    "conjugate",
    "spectral_diameter",
]

BETAS = (1, 2, 4)

# Kramers pairs of the beta = 4 embedding must agree to this fraction of the
# spectral diameter before they are collapsed to their midpoint.
PAIRING_RTOL = 1e-7

_J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _check_beta(beta: int) -> int:
    if beta not in BETAS:
        raise InvalidInputError(f"beta must be one of {BETAS}, got {beta!r}")
    return int(beta)


# ---------------------------------------------------------------------------
# scalar algebra
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlgebraElement:
    """A scalar over R, C or H stored as beta real components."""

    components: tuple

    def __post_init__(self):
        comps = tuple(float(c) for c in self.components)
        if len(comps) not in BETAS:
            raise InvalidInputError(f"component count must be in {BETAS}")
        object.__setattr__(self, "components", comps)

    @property
    def beta(self) -> int:
        return len(self.components)

    @classmethod
    def one(cls, beta: int) -> "AlgebraElement":
        _check_beta(beta)
        return cls((1.0,) + (0.0,) * (beta - 1))

    @classmethod
    def from_real(cls, value: float, beta: int) -> "AlgebraElement":
        _check_beta(beta)
        return cls((float(value),) + (0.0,) * (beta - 1))

    def conj(self) -> "AlgebraElement":
        c = self.components
        return AlgebraElement((c[0],) + tuple(-x for x in c[1:]))

    def norm(self) -> float:
        return math.sqrt(sum(x * x for x in self.components))

    @property
    def real(self) -> float:
        return self.components[0]

    def scaled(self, factor: float) -> "AlgebraElement":
        return AlgebraElement(tuple(factor * x for x in self.components))

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        if self.beta != other.beta:
            raise InvalidInputError("mixed algebras")
        return AlgebraElement(tuple(a + b for a, b in zip(self.components, other.components)))

    def __mul__(self, other: "AlgebraElement") -> "AlgebraElement":
        return algebra_mul(self, other)


def algebra_mul(x: AlgebraElement, y: AlgebraElement) -> AlgebraElement:
    """Product of two scalars in the same algebra.

    Multiplicative on norms: |xy| = |x| |y| in all three algebras.
    """
    if x.beta != y.beta:
        raise InvalidInputError("mixed algebras")
    a, b = x.components, y.components
    if x.beta == 1:
        return AlgebraElement((a[0] * b[0],))
    if x.beta == 2:
        return AlgebraElement((a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0]))
    c0 = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    c1 = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    c2 = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    c3 = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return AlgebraElement((c0, c1, c2, c3))


# ---------------------------------------------------------------------------
# self-adjoint matrices
# ---------------------------------------------------------------------------


class SelfAdjointMatrix:
    """A self-adjoint n x n matrix over R, C or H.

    The storage is an (n, n, beta) array of real components satisfying the
    self-adjointness constraints (component 0 symmetric, the rest
    antisymmetric, diagonal purely real).
    """

    __slots__ = ("components", "n", "beta")

    def __init__(self, components: np.ndarray, *, copy: bool = True, validate: bool = True):
        comps = np.array(components, dtype=float, copy=copy)
        if comps.ndim != 3 or comps.shape[0] != comps.shape[1]:
            raise InvalidInputError("components must have shape (n, n, beta)")
        _check_beta(comps.shape[2])
        if validate:
            _validate_components(comps)
        self.components = comps
        self.n = comps.shape[0]
        self.beta = comps.shape[2]

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, n: int, beta: int) -> "SelfAdjointMatrix":
        _check_beta(beta)
        return cls(np.zeros((n, n, beta)), copy=False, validate=False)

    @classmethod
    def from_standard(cls, matrix: np.ndarray, beta: int) -> "SelfAdjointMatrix":
        """Build from the ordinary real/complex representation (beta <= 2)."""
        _check_beta(beta)
        m = np.asarray(matrix)
        if beta == 4:
            return cls.from_embedding(m)
        if not np.allclose(m, m.conj().T, atol=1e-12 * max(1.0, _mag(m))):
            raise InvalidInputError("matrix is not self-adjoint")
        m = 0.5 * (m + m.conj().T)
        n = m.shape[0]
        comps = np.zeros((n, n, beta))
        comps[:, :, 0] = m.real
        if beta == 2:
            comps[:, :, 1] = m.imag
        return cls(comps, copy=False, validate=False)

    @classmethod
    def from_embedding(cls, matrix: np.ndarray) -> "SelfAdjointMatrix":
        """Build a beta = 4 matrix from its 2n x 2n complex embedding."""
        comps = unembed_quaternion_matrix(matrix)
        comps = _hermitize(comps)
        return cls(comps, copy=False, validate=False)

    @classmethod
    def from_free_parameters(cls, vec: np.ndarray, n: int, beta: int) -> "SelfAdjointMatrix":
        _check_beta(beta)
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (free_parameter_count(n, beta),):
            raise InvalidInputError("wrong free-parameter vector length")
        comps = np.zeros((n, n, beta))
        idx = np.arange(n)
        comps[idx, idx, 0] = vec[:n]
        iu, ju = np.triu_indices(n, 1)
        off = vec[n:].reshape(len(iu), beta)
        comps[iu, ju, :] = off
        comps[ju, iu, 0] = off[:, 0]
        comps[ju, iu, 1:] = -off[:, 1:]
        return cls(comps, copy=False, validate=False)

    # -- views --------------------------------------------------------------

    def component(self, r: int) -> np.ndarray:
        return self.components[:, :, r]

    def entry(self, i: int, j: int) -> AlgebraElement:
        return AlgebraElement(tuple(self.components[i, j]))

    def standard(self) -> np.ndarray:
        """Ordinary representation: (n, n) real or complex, or the (2n, 2n)
        complex embedding for beta = 4."""
        if self.beta == 1:
            return self.components[:, :, 0].copy()
        if self.beta == 2:
            return self.components[:, :, 0] + 1j * self.components[:, :, 1]
        return embed_quaternion_matrix(self.components)

    def minor(self, k: int) -> "SelfAdjointMatrix":
        """Upper-left k x k principal minor."""
        if not 1 <= k <= self.n:
            raise InvalidInputError("minor size out of range")
        return SelfAdjointMatrix(self.components[:k, :k, :], validate=False)

    def trace(self) -> float:
        return float(np.trace(self.components[:, :, 0]))

    def trace_square(self) -> float:
        """Tr B^2 = sum_i B_ii^2 + 2 sum_{i<j} |B_ij|^2."""
        diag = np.diagonal(self.components[:, :, 0])
        iu, ju = np.triu_indices(self.n, 1)
        off = self.components[iu, ju, :]
        return float(np.sum(diag**2) + 2.0 * np.sum(off**2))

    def free_parameters(self) -> np.ndarray:
        """Flatten to the n + beta n(n-1)/2 free real parameters.

        Order: diagonal entries, then off-diagonal (i < j) rows in
        lexicographic order, each contributing beta components.
        """
        idx = np.arange(self.n)
        iu, ju = np.triu_indices(self.n, 1)
        return np.concatenate(
            [self.components[idx, idx, 0], self.components[iu, ju, :].ravel()]
        )

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other: "SelfAdjointMatrix") -> "SelfAdjointMatrix":
        if (self.n, self.beta) != (other.n, other.beta):
            raise InvalidInputError("shape/algebra mismatch")
        return SelfAdjointMatrix(self.components + other.components, copy=False, validate=False)

    def __rmul__(self, scalar: float) -> "SelfAdjointMatrix":
        return SelfAdjointMatrix(float(scalar) * self.components, copy=False, validate=False)

    def copy(self) -> "SelfAdjointMatrix":
        return SelfAdjointMatrix(self.components, copy=True, validate=False)

    def __repr__(self) -> str:
        return f"SelfAdjointMatrix(n={self.n}, beta={self.beta})"


def free_parameter_count(n: int, beta: int) -> int:
    return n + beta * (n * (n - 1)) // 2


def _mag(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


def _validate_components(comps: np.ndarray) -> None:
    scale = max(1.0, _mag(comps))
    sym = comps[:, :, 0]
    if not np.allclose(sym, sym.T, atol=1e-12 * scale):
        raise InvalidInputError("real component must be symmetric")
    for r in range(1, comps.shape[2]):
        a = comps[:, :, r]
        if not np.allclose(a, -a.T, atol=1e-12 * scale):
            raise InvalidInputError(f"component {r} must be antisymmetric")


def _hermitize(comps: np.ndarray) -> np.ndarray:
    """Project tiny numerical drift back onto exact self-adjointness."""
    out = comps.copy()
    out[:, :, 0] = 0.5 * (out[:, :, 0] + out[:, :, 0].T)
    for r in range(1, out.shape[2]):
        out[:, :, r] = 0.5 * (out[:, :, r] - out[:, :, r].T)
    return out


# ---------------------------------------------------------------------------
# quaternion embedding
# ---------------------------------------------------------------------------


def embed_quaternion_matrix(components: np.ndarray) -> np.ndarray:
    """Complex embedding of a quaternion matrix.

    Accepts components of shape (..., n, m, 4) and returns (..., 2n, 2m)
    complex arrays with interleaved 2 x 2 blocks.
    """
    comps = np.asarray(components, dtype=float)
    if comps.shape[-1] != 4:
        raise InvalidInputError("quaternion components must have last axis 4")
    z0, z1, z2, z3 = (comps[..., r] for r in range(4))
    n, m = comps.shape[-3], comps.shape[-2]
    blocks = np.empty(comps.shape[:-3] + (n, 2, m, 2), dtype=complex)
    blocks[..., 0, :, 0] = z0 + 1j * z1
    blocks[..., 0, :, 1] = z2 + 1j * z3
    blocks[..., 1, :, 0] = -z2 + 1j * z3
    blocks[..., 1, :, 1] = z0 - 1j * z1
    return blocks.reshape(comps.shape[:-3] + (2 * n, 2 * m))


def unembed_quaternion_matrix(matrix: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Inverse of :func:`embed_quaternion_matrix`, with a structure check.

    Raises :class:`InvalidInputError` if the 2 x 2 blocks of ``matrix`` do
    not carry quaternionic structure to relative tolerance ``rtol``.
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim < 2 or m.shape[-1] % 2 or m.shape[-2] % 2:
        raise InvalidInputError("embedding must have even dimensions")
    rows, cols = m.shape[-2] // 2, m.shape[-1] // 2
    blocks = m.reshape(m.shape[:-2] + (rows, 2, cols, 2))
    a = blocks[..., 0, :, 0]
    b = blocks[..., 0, :, 1]
    c = blocks[..., 1, :, 0]
    d = blocks[..., 1, :, 1]
    comps = np.empty(m.shape[:-2] + (rows, cols, 4))
    comps[..., 0] = 0.5 * (a.real + d.real)
    comps[..., 1] = 0.5 * (a.imag - d.imag)
    comps[..., 2] = 0.5 * (b.real - c.real)
    comps[..., 3] = 0.5 * (b.imag + c.imag)
    back = embed_quaternion_matrix(comps)
    scale = max(1.0, _mag(m))
    if not np.allclose(back, m, atol=rtol * scale):
        raise InvalidInputError("matrix does not carry quaternionic structure")
    return comps


def _embedding_j(n: int) -> np.ndarray:
    return np.kron(np.eye(n), _J2)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------


def spectral_diameter(lam: np.ndarray) -> float:
    lam = np.asarray(lam, dtype=float)
    return float(lam.max() - lam.min()) if lam.size else 0.0


def eigenvalues(matrix: SelfAdjointMatrix, pairing_rtol: float = PAIRING_RTOL) -> np.ndarray:
    """Sorted real spectrum; beta = 4 spectra are multiplicity-collapsed.

    The embedding of a beta = 4 matrix has each eigenvalue doubled; pairs
    must agree to ``pairing_rtol`` times the spectral diameter, and the pair
    midpoints are returned.  A pairing failure raises
    :class:`EigenvaluePairingError`.
    """
    w = np.linalg.eigvalsh(matrix.standard())
    if matrix.beta != 4:
        return w
    return _collapse_pairs(w, pairing_rtol)


def _collapse_pairs(w: np.ndarray, pairing_rtol: float) -> np.ndarray:
    even, odd = w[..., 0::2], w[..., 1::2]
    diam = w[..., -1] - w[..., 0]
    # absolute floor keeps near-scalar matrices (diameter ~ 0) collapsible
    floor = 64.0 * np.finfo(float).eps * np.maximum(1.0, np.max(np.abs(w), axis=-1))
    tol = pairing_rtol * diam + floor
    gap = np.max(np.abs(odd - even), axis=-1)
    if np.any(gap > tol):
        raise EigenvaluePairingError(
            f"Kramers pair gap {np.max(gap):.3e} exceeds tolerance "
            f"{pairing_rtol:.1e} x diameter"
        )
    return 0.5 * (even + odd)


def batched_eigenvalues(components: np.ndarray, beta: int,
                        pairing_rtol: float = PAIRING_RTOL) -> np.ndarray:
    """Spectra of a stack of component arrays of shape (..., n, n, beta)."""
    _check_beta(beta)
    if beta == 1:
        return np.linalg.eigvalsh(components[..., 0])
    if beta == 2:
        return np.linalg.eigvalsh(components[..., 0] + 1j * components[..., 1])
    w = np.linalg.eigvalsh(embed_quaternion_matrix(components))
    return _collapse_pairs(w, pairing_rtol)


# ---------------------------------------------------------------------------
# Pfaffian and the quaternionic determinant
# ---------------------------------------------------------------------------


def pfaffian(a: np.ndarray) -> complex:
    """Pfaffian of an even-dimensional skew-symmetric matrix.

    Skew-symmetric Gaussian elimination (Parlett-Reid) with partial
    pivoting, O(n^3).  Returns a complex scalar; real input gives a real
    result up to roundoff.
    """
    m = np.array(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError("pfaffian needs a square matrix")
    n = m.shape[0]
    scale = max(1.0, _mag(m))
    if not np.allclose(m, -m.T, atol=1e-12 * scale):
        raise InvalidInputError("matrix is not skew-symmetric")
    if n % 2:
        return 0.0 + 0.0j
    value = 1.0 + 0.0j
    for k in range(0, n - 1, 2):
        pivot = k + 1 + int(np.argmax(np.abs(m[k + 1:, k])))
        if pivot != k + 1:
            m[[k + 1, pivot], :] = m[[pivot, k + 1], :]
            m[:, [k + 1, pivot]] = m[:, [pivot, k + 1]]
            value = -value
        if m[k + 1, k] == 0.0:
            return 0.0 + 0.0j
        value *= m[k, k + 1]
        if k + 2 < n:
            tau = m[k, k + 2:] / m[k, k + 1]
            col = m[k + 2:, k + 1]
            m[k + 2:, k + 2:] += np.outer(tau, col) - np.outer(col, tau)
    return value


def quaternion_determinant(matrix: SelfAdjointMatrix) -> float:
    """Determinant of a self-adjoint quaternion matrix.

    Defined as the Pfaffian of B_hat . (I_n kron J2), where B_hat is the
    complex embedding and J2 = [[0, 1], [-1, 0]]; equals the product of the
    collapsed eigenvalues.
    """
    if matrix.beta != 4:
        raise InvalidInputError("quaternion_determinant requires beta = 4")
    emb = matrix.standard()
    bold = emb @ _embedding_j(matrix.n)
    pf = pfaffian(bold)
    scale = max(1.0, abs(pf))
    if abs(pf.imag) > 1e-9 * scale:
        raise NumericalFailureError(f"Pfaffian imaginary part {pf.imag:.3e} too large")
    return float(pf.real)


# ---------------------------------------------------------------------------
# Gaussian ensembles and Haar group elements
# ---------------------------------------------------------------------------


def sample_gaussian_ensemble(n: int, beta: int, rng: np.random.Generator) -> SelfAdjointMatrix:
    """One draw from the invariant Gaussian ensemble.

    Density proportional to exp(-(beta/2) Tr B^2): diagonal entries are
    N(0, 1/beta), each off-diagonal real component N(0, 1/(2 beta)).
    """
    comps = sample_gaussian_components(n, beta, rng, ())
    return SelfAdjointMatrix(comps, copy=False, validate=False)


def sample_gaussian_components(n: int, beta: int, rng: np.random.Generator,
                               size: tuple = ()) -> np.ndarray:
    """Component arrays of shape size + (n, n, beta) of ensemble draws.

    Draw order is fixed (diagonal block first, then off-diagonal block) so
    streams are reproducible.
    """
    _check_beta(beta)
    size = tuple(size)
    comps = np.zeros(size + (n, n, beta))
    idx = np.arange(n)
    diag = rng.standard_normal(size + (n,)) / math.sqrt(beta)
    comps[..., idx, idx, 0] = diag
    iu, ju = np.triu_indices(n, 1)
    if len(iu):
        off = rng.standard_normal(size + (len(iu), beta)) / math.sqrt(2.0 * beta)
        comps[..., iu, ju, :] = off
        comps[..., ju, iu, 0] = off[..., 0]
        comps[..., ju, iu, 1:] = -off[..., 1:]
    return comps


def haar_unitary(n: int, beta: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed compact group element.

    beta = 1: (n, n) real orthogonal; beta = 2: (n, n) complex unitary;
    beta = 4: the (2n, 2n) complex embedding of a quaternionic unitary
    (symplectic) matrix.  QR of a Ginibre draw with the R-diagonal phase
    fixed, which makes the factor exactly Haar.
    """
    _check_beta(beta)
    if beta == 1:
        q, r = np.linalg.qr(rng.standard_normal((n, n)))
        sign = np.sign(np.diagonal(r))
        sign[sign == 0] = 1.0
        return q * sign
    if beta == 2:
        g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        q, r = np.linalg.qr(g)
        d = np.diagonal(r)
        phase = d / np.abs(d)
        return q * phase
    return _haar_symplectic(n, rng)


def _haar_symplectic(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar symplectic element via quaternionic Gram-Schmidt.

    Columns come in structure pairs (psi, -J conj(psi)); orthonormalizing the
    representative column of each quaternionic Ginibre column against all
    previous complex columns is Gram-Schmidt in quaternion arithmetic, so the
    result is the embedding of a Haar quaternionic unitary.
    """
    comps = rng.standard_normal((n, n, 4))
    a = embed_quaternion_matrix(comps)
    j = _embedding_j(n)
    q = np.zeros((2 * n, 2 * n), dtype=complex)
    for k in range(n):
        psi = a[:, 2 * k].copy()
        for _ in range(2):  # one re-orthogonalization pass for stability
            prev = q[:, : 2 * k]
            psi = psi - prev @ (prev.conj().T @ psi)
        nrm = np.linalg.norm(psi)
        if nrm < 1e-12:
            raise NumericalFailureError("rank-deficient Ginibre draw")
        psi /= nrm
        q[:, 2 * k] = psi
        q[:, 2 * k + 1] = -(j @ psi.conj())
    return q


def conjugate(matrix: SelfAdjointMatrix, group_element: np.ndarray) -> SelfAdjointMatrix:
    """U B U^{-1} for a group element in the matching representation."""
    u = np.asarray(group_element)
    m = matrix.standard()
    if u.shape != m.shape:
        raise InvalidInputError("group element has wrong shape for this algebra")
    out = u @ m @ u.conj().T
    if matrix.beta == 4:
        return SelfAdjointMatrix.from_embedding(out)
    return SelfAdjointMatrix.from_standard(out, matrix.beta)
