"""Joint geometry of a spectrum and the spectrum of its leading minor.

For a self-adjoint B with sorted spectrum lambda and minor spectrum mu
(weakly interlaced: lambda_1 <= mu_1 <= lambda_2 <= ... <= lambda_n),
conjugating by a group element that diagonalizes the (n-1) x (n-1) minor
brings B to bordered form: diag(mu) plus a border column r_i u_i, corner
entry B_nn.  The border radii are determined by the two spectra alone,

    r_k^2 = -P_n(mu_k) / P'_{n-1}(mu_k),      B_nn = sum(lambda) - sum(mu),

with P_n, P_{n-1} the monic characteristic polynomials of lambda and mu.
This module provides the bordered decomposition, its inverse, the exact
algebraic identities tying (lambda, mu, r) together, and the Jacobian of
lambda -> (r^2, B_nn) at fixed mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    AlgebraElement,
    SelfAdjointMatrix,
    _embedding_j,
    eigenvalues,
    embed_quaternion_matrix,
    spectral_diameter,
    unembed_quaternion_matrix,
)
from .errors import DegenerateSpectrumError, InterlacingError, InvalidInputError
from .report import ExperimentReport

__all__ = [
    "InterlacedPair",
    "BorderedForm",
    "vandermonde",
    "mixed_vandermonde",
    "interlace_check",
    "pair_from_matrix",
    "r_from_spectra",
    "bordered_form",
    "reconstruct",
    "identity_suite",
    "jacobian_check",
    "interlacing_cauchy_matrix",
    "interlacing_cauchy_det",
]

# Identity residuals above this default are reported as failures.
IDENTITY_TOL = 1e-8


def vandermonde(x: np.ndarray) -> float:
    """prod_{j > i} (x_j - x_i); nonnegative for sorted input."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    out = 1.0
    for i in range(n):
        for j in range(i + 1, n):
            out *= x[j] - x[i]
    return out


def mixed_vandermonde(lam: np.ndarray, mu: np.ndarray) -> float:
    """prod_i prod_j (lambda_i - mu_j).

    Under strict interlacing its sign is (-1)^{n(n-1)/2}, n = len(lam).
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return float(np.prod(lam[:, None] - mu[None, :]))


def interlace_check(lam: np.ndarray, mu: np.ndarray, strict: bool = True) -> bool:
    """Whether lambda_1 (<=|<) mu_1 (<=|<) lambda_2 ... holds."""
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if len(mu) != len(lam) - 1:
        return False
    lower = mu - lam[:-1]
    upper = lam[1:] - mu
    if strict:
        return bool(np.all(lower > 0) and np.all(upper > 0))
    return bool(np.all(lower >= 0) and np.all(upper >= 0))


@dataclass
class InterlacedPair:
    """Sorted spectra (lambda, mu) with weak interlacing enforced."""

    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.lam = np.array(self.lam, dtype=float).ravel()
        self.mu = np.array(self.mu, dtype=float).ravel()
        if len(self.lam) < 2 or len(self.mu) != len(self.lam) - 1:
            raise InvalidInputError("need len(mu) = len(lam) - 1 >= 1")
        if np.any(np.diff(self.lam) < 0) or (len(self.mu) > 1 and np.any(np.diff(self.mu) < 0)):
            raise InvalidInputError("spectra must be sorted ascending")
        if not interlace_check(self.lam, self.mu, strict=False):
            raise InterlacingError("spectra are not interlaced")

    @property
    def n(self) -> int:
        return len(self.lam)

    def is_strict(self) -> bool:
        return interlace_check(self.lam, self.mu, strict=True)

    def min_gap(self) -> float:
        return float(min((self.mu - self.lam[:-1]).min(), (self.lam[1:] - self.mu).min()))

    def diameter(self) -> float:
        return spectral_diameter(self.lam)


def pair_from_matrix(matrix: SelfAdjointMatrix) -> InterlacedPair:
    """Spectrum/minor-spectrum pair of a self-adjoint matrix."""
    lam = eigenvalues(matrix)
    mu = eigenvalues(matrix.minor(matrix.n - 1))
    # Cauchy interlacing holds exactly; guard against eigensolver roundoff
    # at (near-)degenerate configurations by clipping to the weak domain.
    eps = 1e-12 * max(1.0, spectral_diameter(lam))
    mu = np.clip(mu, lam[:-1] - eps, lam[1:] + eps)
    mu = np.minimum(np.maximum(mu, lam[:-1]), lam[1:])
    return InterlacedPair(lam, mu)


# ---------------------------------------------------------------------------
# radii from spectra
# ---------------------------------------------------------------------------


def _poly_at(x: float, roots: np.ndarray) -> float:
    return float(np.prod(x - roots))


def _poly_deriv_at_root(index: int, roots: np.ndarray) -> float:
    """P'(roots[index]) for the monic polynomial with the given roots."""
    diffs = roots[index] - np.delete(roots, index)
    return float(np.prod(diffs))


def r_from_spectra(lam: np.ndarray, mu: np.ndarray) -> tuple[np.ndarray, float]:
    """Border radii and corner entry determined by the two spectra.

    Returns (r, corner) with r_k = sqrt(-P_n(mu_k)/P'_{n-1}(mu_k)) >= 0 and
    corner = sum(lambda) - sum(mu).  Requires weak interlacing; repeated mu
    values make the radii ill-defined and raise
    :class:`DegenerateSpectrumError`.
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if not interlace_check(lam, mu, strict=False):
        raise InterlacingError("spectra are not interlaced")
    m = len(mu)
    if m > 1 and np.min(np.diff(mu)) <= 0:
        raise DegenerateSpectrumError("repeated minor eigenvalue")
    r2 = np.empty(m)
    for k in range(m):
        r2[k] = -_poly_at(mu[k], lam) / _poly_deriv_at_root(k, mu)
    # interlacing guarantees r2 >= 0; clip roundoff noise at the boundary
    r2 = np.maximum(r2, 0.0)
    corner = float(lam.sum() - mu.sum())
    return np.sqrt(r2), corner


# ---------------------------------------------------------------------------
# bordered form
# ---------------------------------------------------------------------------


@dataclass
class BorderedForm:
    """Bordered representative of a self-adjoint matrix.

    ``conjugator`` is the group element U with U B^(n-1) U^{-1} = diag(mu),
    stored as an (n-1) x (n-1) real/complex matrix for beta in {1, 2} and as
    the 2(n-1) x 2(n-1) complex embedding for beta = 4.  The decomposition is
    unique up to the gauge of the border directions u_i.
    """

    mu: np.ndarray
    r: np.ndarray
    u: list = field(default_factory=list)
    corner: float = 0.0
    conjugator: np.ndarray | None = None
    beta: int = 2

    @property
    def n(self) -> int:
        return len(self.mu) + 1


def _degeneracy_guard(mu: np.ndarray) -> None:
    if len(mu) > 1:
        scale = max(1.0, spectral_diameter(mu))
        if np.min(np.diff(mu)) < 1e-10 * scale:
            raise DegenerateSpectrumError("minor spectrum is (numerically) degenerate")


def bordered_form(matrix: SelfAdjointMatrix) -> BorderedForm:
    """Decompose B into bordered form by diagonalizing its leading minor."""
    n, beta = matrix.n, matrix.beta
    if n < 2:
        raise InvalidInputError("bordered form needs n >= 2")
    minor = matrix.minor(n - 1)
    corner = float(matrix.components[n - 1, n - 1, 0])
    if beta in (1, 2):
        mu, vecs = np.linalg.eigh(minor.standard())
        _degeneracy_guard(mu)
        conj = vecs.conj().T
        v = matrix.components[: n - 1, n - 1, :]
        vc = v[:, 0] if beta == 1 else v[:, 0] + 1j * v[:, 1]
        w = conj @ vc
        r = np.abs(w)
        u = [_unit_element(w[i], r[i], beta) for i in range(n - 1)]
        return BorderedForm(mu=mu, r=r, u=u, corner=corner, conjugator=conj, beta=beta)

    emb = minor.standard()
    w_all, vecs = np.linalg.eigh(emb)
    mu = _pair_midpoints(w_all)
    _degeneracy_guard(mu)
    j = _embedding_j(n - 1)
    vq = np.zeros_like(vecs)
    for k in range(n - 1):
        psi = vecs[:, 2 * k]
        vq[:, 2 * k] = psi
        vq[:, 2 * k + 1] = -(j @ psi.conj())
    conj = vq.conj().T
    vhat = embed_quaternion_matrix(matrix.components[: n - 1, n - 1:n, :])
    what = conj @ vhat
    r = np.empty(n - 1)
    u = []
    for i in range(n - 1):
        comps = unembed_quaternion_matrix(what[2 * i: 2 * i + 2, :])[0, 0]
        elem = AlgebraElement(tuple(comps))
        r[i] = elem.norm()
        u.append(_unit_element_quaternion(elem))
    return BorderedForm(mu=mu, r=r, u=u, corner=corner, conjugator=conj, beta=4)


def _pair_midpoints(w: np.ndarray) -> np.ndarray:
    from .algebra import _collapse_pairs

    return _collapse_pairs(w, 1e-7)


def _unit_element(w, r: float, beta: int) -> AlgebraElement:
    # gauge convention: direction of a (numerically) zero border entry is 1
    if r < 1e-15 * max(1.0, abs(w)) or r == 0.0:
        return AlgebraElement.one(beta)
    if beta == 1:
        return AlgebraElement((1.0 if w >= 0 else -1.0,))
    z = w / r
    return AlgebraElement((z.real, z.imag))


def _unit_element_quaternion(elem: AlgebraElement) -> AlgebraElement:
    r = elem.norm()
    if r < 1e-300:
        return AlgebraElement.one(4)
    return elem.scaled(1.0 / r)


def reconstruct(form: BorderedForm, apply_conjugator: bool = True) -> SelfAdjointMatrix:
    """Assemble the matrix back from a bordered form.

    With ``apply_conjugator`` the stored group element is undone, returning
    the original matrix; without it the bordered representative itself is
    returned.
    """
    n, beta = form.n, form.beta
    comps = np.zeros((n, n, beta))
    for i in range(n - 1):
        comps[i, i, 0] = form.mu[i]
        w = form.u[i].scaled(float(form.r[i]))
        comps[i, n - 1, :] = w.components
        comps[n - 1, i, :] = w.conj().components
    comps[n - 1, n - 1, 0] = form.corner
    bordered = SelfAdjointMatrix(comps, copy=False, validate=False)
    if not apply_conjugator or form.conjugator is None:
        return bordered
    u = form.conjugator
    if beta in (1, 2):
        d = np.zeros((n, n), dtype=complex if beta == 2 else float)
        d[: n - 1, : n - 1] = u
        d[n - 1, n - 1] = 1.0
        out = d.conj().T @ bordered.standard() @ d
        return SelfAdjointMatrix.from_standard(out, beta)
    d = np.zeros((2 * n, 2 * n), dtype=complex)
    d[: 2 * (n - 1), : 2 * (n - 1)] = u
    d[2 * n - 2:, 2 * n - 2:] = np.eye(2)
    out = d.conj().T @ bordered.standard() @ d
    return SelfAdjointMatrix.from_embedding(out)


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


def identity_suite(pair: InterlacedPair, tol: float = IDENTITY_TOL) -> ExperimentReport:
    """Residuals of the exact identities linking (lambda, mu, r, corner).

    Checks, in normalized form:

    * trace:       sum r_i^2 + corner^2/2 = (sum lam^2 - sum mu^2)/2
    * product:     prod r_i^2 = |prod_{ij}(lam_i - mu_j)| / Delta(mu)^2
    * secular:     sum_i r_i^2/(lam_l - mu_i) + corner - lam_l = 0 per l
    * derivative:  P'_n(lam_l)/P_{n-1}(lam_l) = sum_i (r_i/(lam_l - mu_i))^2 + 1
    * covariation: the bilinear residue identity whose value is the
      delta_{alpha gamma} eigenvalue-noise correlation (written out termwise,
      not via its factored simplification)

    Returns a report whose statistics are the maximum residual per family.
    """
    lam, mu = pair.lam, pair.mu
    if not pair.is_strict():
        raise InterlacingError("identity suite needs strict interlacing")
    n = pair.n
    r, corner = r_from_spectra(lam, mu)
    r2 = r**2

    report = ExperimentReport(
        name="identity_suite",
        params={"n": n, "lam": lam.tolist(), "mu": mu.tolist()},
    )

    lhs = r2.sum() + 0.5 * corner**2
    rhs = 0.5 * (np.sum(lam**2) - np.sum(mu**2))
    res_trace = abs(lhs - rhs) / max(1.0, abs(rhs))

    # product identity in log space; strict interlacing keeps every factor
    # of both sides strictly positive
    log_lhs = float(np.sum(np.log(r2)))
    log_mix = float(np.sum(np.log(np.abs(lam[:, None] - mu[None, :]))))
    log_dmu_full = 0.0
    for i in range(len(mu)):
        for j in range(i + 1, len(mu)):
            log_dmu_full += math.log(mu[j] - mu[i])
    res_product = abs(math.expm1(log_lhs - (log_mix - 2.0 * log_dmu_full)))

    res_secular = 0.0
    res_deriv = 0.0
    for l in range(n):
        gaps = lam[l] - mu
        sec = float(np.sum(r2 / gaps) + corner - lam[l])
        res_secular = max(res_secular, abs(sec) / max(1.0, abs(lam[l]), abs(corner)))
        lhs_d = _poly_deriv_at_root(l, lam) / _poly_at(lam[l], mu)
        rhs_d = float(np.sum((r / gaps) ** 2) + 1.0)
        res_deriv = max(res_deriv, abs(lhs_d - rhs_d) / abs(lhs_d))

    res_cov = _covariation_residual(lam, mu, r2)

    for name, value in [
        ("trace_identity_residual", res_trace),
        ("product_identity_residual", res_product),
        ("secular_identity_residual", res_secular),
        ("derivative_identity_residual", res_deriv),
        ("covariation_identity_residual", res_cov),
    ]:
        report.add_statistic(name, value)
        report.passed = report.passed and (value < tol)

    report.params["tol"] = tol
    report.finalize_provenance()
    return report


def _covariation_residual(lam: np.ndarray, mu: np.ndarray, r2: np.ndarray) -> float:
    """Max |K_a K_g * bracket(a, g) - delta_{ag}| over all index pairs."""
    n = len(lam)
    m = len(mu)
    k = np.array([_poly_at(lam[a], mu) / _poly_deriv_at_root(a, lam) for a in range(n)])
    worst = 0.0
    for a in range(n):
        ga = lam[a] - mu
        for g in range(n):
            gg = lam[g] - mu
            bracket = 1.0
            bracket += float(np.sum(2.0 * r2 / (ga * gg)))
            bracket += float(np.sum(r2**2 / (ga**2 * gg**2)))
            for i in range(m):
                for j in range(i + 1, m):
                    bracket += 2.0 * r2[i] * r2[j] / (ga[i] * ga[j] * gg[i] * gg[j])
            value = k[a] * k[g] * bracket
            target = 1.0 if a == g else 0.0
            worst = max(worst, abs(value - target))
    return worst


# ---------------------------------------------------------------------------
# Jacobian of lambda -> (r^2, corner) at fixed mu
# ---------------------------------------------------------------------------


def jacobian_check(pair: InterlacedPair, step: float | None = None) -> dict:
    """Analytic vs central-difference Jacobian determinant.

    The map is lambda -> (r_1^2, ..., r_{n-1}^2, corner) at fixed mu; its
    determinant is (-1)^{n-1} Delta_n(lambda) / Delta_{n-1}(mu).  Returns a
    dict with 'analytic', 'numeric' and 'rel_error'.
    """
    lam, mu = pair.lam, pair.mu
    if not pair.is_strict():
        raise InterlacingError("jacobian check needs strict interlacing")
    n = pair.n
    if step is None:
        step = min(1e-3 * pair.min_gap(), 1e-6 * max(pair.diameter(), 1.0))

    def fvec(lam_shift: np.ndarray) -> np.ndarray:
        r, corner = r_from_spectra(lam_shift, mu)
        return np.concatenate([r**2, [corner]])

    jac = np.empty((n, n))
    for j in range(n):
        lp = lam.copy()
        lm = lam.copy()
        lp[j] += step
        lm[j] -= step
        jac[:, j] = (fvec(lp) - fvec(lm)) / (2.0 * step)
    numeric = float(np.linalg.det(jac))
    analytic = (-1.0) ** (n - 1) * vandermonde(lam) / vandermonde(mu)
    rel = abs(numeric - analytic) / max(abs(analytic), 1e-300)
    return {"analytic": analytic, "numeric": numeric, "rel_error": rel, "step": step}


def interlacing_cauchy_matrix(lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """n x n matrix with entries 1/(lam_i - mu_j) and a final column of ones."""
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n = len(lam)
    g = np.ones((n, n))
    g[:, : n - 1] = 1.0 / (lam[:, None] - mu[None, :])
    return g


def interlacing_cauchy_det(lam: np.ndarray, mu: np.ndarray) -> float:
    """Closed form for det of :func:`interlacing_cauchy_matrix`.

    Equals (-1)^{(n-1)(n+2)/2} Delta_n(lam) Delta_{n-1}(mu) / prod(lam_i - mu_j).
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    n = len(lam)
    sign = (-1.0) ** (((n - 1) * (n + 2)) // 2)
    return sign * vandermonde(lam) * vandermonde(mu) / mixed_vandermonde(lam, mu)
