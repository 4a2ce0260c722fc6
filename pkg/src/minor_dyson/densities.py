"""Closed-form densities, normalization constants and adjoint generators.

Everything here lives on ordered spectra (the open chamber
lam_1 < ... < lam_n) and, for the joint laws, on strictly interlaced pairs.
Care is taken with two families of constants:

* ``C_inv`` (the Selberg constant) normalizes the *symmetric* eigenvalue
  density over R^n; on the ordered chamber an extra n! enters.  The
  functions below always return chamber-normalized densities and expose
  the raw printed constants through :class:`Constants`.

* The joint (lam, mu) invariant density is normalized here from first
  principles: starting from the matrix Gaussian, integrating out the
  conjugation orbit of the minor and the border phases gives

      pair_norm = (n-1)!/2^(n-1) * Z_n^{-1} * Z_{n-1} * C_{n-1}^{-1}
                  * m(beta)^(n-1),

  with m(beta) = 2 pi^(beta/2) / Gamma(beta/2) the surface volume of the
  unit sphere in R^beta (m(1) = 2, m(2) = 2 pi, m(4) = 2 pi^2).  A
  commonly printed alternative constant ``Zhat_inv`` is also evaluated;
  the ratio of the two is reported in :class:`Constants` and in the
  verification suite rather than silently absorbed.  Quadrature tests pin
  the normalization, so any residual constant error would surface there.

All densities are computed in log space and exponentiated on return; the
Vandermonde-heavy products under/overflow otherwise even at moderate n.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.special
from scipy.special import i0e, i1e

from . import algebra
from .errors import InterlacingError, InvalidInputError, NumericalFailureError
from .minor_geometry import InterlacedPair, r_from_spectra, vandermonde, mixed_vandermonde

__all__ = [
    "Constants",
    "constants",
    "sphere_surface_volume",
    "invariant_density_lambda",
    "log_invariant_density_lambda",
    "invariant_density_pair",
    "log_invariant_density_pair",
    "hciz",
    "log_hciz",
    "transition_density_lambda",
    "log_transition_density_lambda",
    "scalar_ou_transition",
    "g_integral_mc",
    "transition_density_pair_mc",
    "transition_density_pair_closed_n2",
    "adjoint_lambda_density",
    "adjoint_lambda",
    "adjoint_mu",
    "adjoint_cross",
    "adjoint_generator_apply",
    "invariant_pair_null_residual",
    "integrate_invariant_lambda",
    "integrate_invariant_pair",
    "integrate_transition_lambda",
]

_SNAP = 1e-6  # relative gap below which HCIZ arguments are treated as tied

#: Surface volumes printed alongside the pair-density constant:
#: vol(S^0) = 1, vol(S^1) = 2 pi, vol(S^2) = 4 pi, vol(S^3) = 2 pi^2.
PRINTED_SPHERE_VOLUMES = (1.0, 2.0 * math.pi, 4.0 * math.pi, 2.0 * math.pi**2)


def sphere_surface_volume(k: int) -> float:
    """Surface volume of the unit sphere S^k in R^(k+1): 2 pi^((k+1)/2) / Gamma((k+1)/2)."""

    if k < 0:
        raise InvalidInputError("sphere dimension must be >= 0")
    return 2.0 * math.pi ** ((k + 1) / 2.0) / math.gamma((k + 1) / 2.0)


def _fiber_mass(beta: float) -> float:
    # Mass of one border-phase fiber: the sphere S^{beta-1} in R^beta.
    return 2.0 * math.pi ** (beta / 2.0) / math.gamma(beta / 2.0)


def _log_z_inv(n: int, beta: float) -> float:
    # Z_{n,beta}^{-1} = 2^{-n/2} (beta/pi)^N: Gaussian matrix normalization.
    big_n = n / 2.0 + beta / 4.0 * n * (n - 1)
    return -0.5 * n * math.log(2.0) + big_n * math.log(beta / math.pi)


def _log_c_inv(n: int, beta: float) -> float:
    # Selberg constant: C^{-1} = (2 pi)^{-n/2} beta^N prod Gamma(1+b/2)/Gamma(1+jb/2).
    big_n = n / 2.0 + beta / 4.0 * n * (n - 1)
    total = -0.5 * n * math.log(2.0 * math.pi) + big_n * math.log(beta)
    for j in range(1, n + 1):
        total += math.lgamma(1.0 + beta / 2.0) - math.lgamma(1.0 + beta * j / 2.0)
    return total


@dataclass(frozen=True)
class Constants:
    """Normalization constants for one (n, beta).

    ``z_inv``, ``c_inv`` and ``zhat_inv`` are the printed constants
    (``zhat_inv`` only exists for beta in {1, 2, 4}, where the sphere
    S^{beta-1} is meaningful).  ``lambda_norm`` and ``pair_norm`` are the
    chamber-normalizing constants actually used by the density functions,
    and ``pair_constant_ratio`` = pair_norm / printed pair prefactor
    quantifies the constant-factor discrepancy in the printed form.
    """

    n: int
    beta: float
    big_n: float
    z_inv: float
    c_inv: float
    zhat_inv: float | None
    sphere_volumes: tuple
    fiber_mass: float
    lambda_norm: float
    pair_norm: float
    printed_pair_prefactor: float | None
    pair_constant_ratio: float | None


def constants(n: int, beta: float) -> Constants:
    """Evaluate all normalization constants for size ``n`` and Dyson index ``beta``."""

    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    if beta <= 0:
        raise InvalidInputError(f"beta must be positive, got {beta}")
    big_n = n / 2.0 + beta / 4.0 * n * (n - 1)
    z_inv = math.exp(_log_z_inv(n, beta))
    c_inv = math.exp(_log_c_inv(n, beta))
    lambda_norm = math.exp(_log_c_inv(n, beta) + math.lgamma(n + 1))

    if n >= 2:
        log_pair = (
            math.lgamma(n)  # (n-1)!
            - (n - 1) * math.log(2.0)
            + _log_z_inv(n, beta)
            - _log_z_inv(n - 1, beta)
            + _log_c_inv(n - 1, beta)
            + (n - 1) * math.log(_fiber_mass(beta))
        )
        pair_norm = math.exp(log_pair)
    else:
        pair_norm = float("nan")

    zhat_inv = None
    printed_pref = None
    ratio = None
    if int(beta) == beta and int(beta) in (1, 2, 4) and n >= 2:
        b = int(beta)
        vol = PRINTED_SPHERE_VOLUMES[b - 1]
        log_zhat = (
            big_n * math.log(beta)
            + (n - 1) * math.lgamma(1.0 + beta / 2.0)
            - 0.5 * n * math.log(2.0 * math.pi)
            - 0.5 * beta * (n - 1) * math.log(math.pi)
            - sum(math.lgamma(1.0 + beta * j / 2.0) for j in range(1, n))
            - (n - 1) * math.log(vol)
        )
        zhat_inv = math.exp(log_zhat)
        printed_pref = math.exp(log_zhat + 2.0 * (n - 1) * math.log(vol))
        ratio = pair_norm / printed_pref

    return Constants(
        n=n,
        beta=beta,
        big_n=big_n,
        z_inv=z_inv,
        c_inv=c_inv,
        zhat_inv=zhat_inv,
        sphere_volumes=PRINTED_SPHERE_VOLUMES,
        fiber_mass=_fiber_mass(beta),
        lambda_norm=lambda_norm,
        pair_norm=pair_norm,
        printed_pair_prefactor=printed_pref,
        pair_constant_ratio=ratio,
    )


# ---------------------------------------------------------------------------
# invariant densities
# ---------------------------------------------------------------------------


def _check_sorted(lam: np.ndarray) -> np.ndarray:
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if np.any(np.diff(lam) < 0.0):
        raise InvalidInputError("spectrum must be sorted ascending")
    return lam


def log_invariant_density_lambda(lam, beta) -> float:
    """log of the stationary eigenvalue density on the ordered chamber."""

    lam = _check_sorted(lam)
    n = lam.size
    log_vdm = float(np.log(np.abs(vandermonde(lam)))) if n > 1 else 0.0
    return (
        _log_c_inv(n, beta)
        + math.lgamma(n + 1)
        - 0.5 * beta * float(np.sum(lam * lam))
        + beta * log_vdm
    )


def invariant_density_lambda(lam, beta) -> float:
    """Stationary density of the ordered spectrum:

        n! * C^{-1} * exp(-beta/2 sum lam^2) * |Vandermonde(lam)|^beta.

    The printed constant C^{-1} alone normalizes the symmetrized density
    over R^n; the n! makes the ordered version integrate to 1 over the
    chamber.  Coincident points give 0.
    """

    lam = _check_sorted(lam)
    if lam.size > 1 and np.any(np.diff(lam) == 0.0):
        return 0.0
    return math.exp(log_invariant_density_lambda(lam, beta))


def log_invariant_density_pair(lam, mu, beta, use_printed_constant=False) -> float:
    """log of the joint invariant density of (lam, mu) on the interlaced cell."""

    lam = np.asarray(lam, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    n = lam.size
    cst = constants(n, beta)
    if use_printed_constant:
        if cst.printed_pair_prefactor is None:
            raise InvalidInputError(
                "printed constant only exists for beta in {1, 2, 4}"
            )
        log_norm = math.log(cst.printed_pair_prefactor)
    else:
        log_norm = math.log(cst.pair_norm)
    log_vdm_l = float(np.log(np.abs(vandermonde(lam)))) if n > 1 else 0.0
    log_vdm_m = float(np.log(np.abs(vandermonde(mu)))) if n > 2 else 0.0
    mix = float(np.log(np.abs(mixed_vandermonde(lam, mu)))) if n > 1 else 0.0
    c = beta / 2.0 - 1.0
    mix_term = 0.0 if c == 0.0 else c * mix
    return (
        log_norm
        - 0.5 * beta * float(np.sum(lam * lam))
        + log_vdm_l
        + log_vdm_m
        + mix_term
    )


def invariant_density_pair(lam, mu, beta, zero_outside=False, use_printed_constant=False) -> float:
    """Joint invariant density of the spectrum and its minor's spectrum.

        pair_norm * exp(-beta/2 sum lam^2) * |D_n(lam) D_{n-1}(mu)|
                  * |D_mix(lam, mu)|^(beta/2 - 1)

    Inputs must interlace; with ``zero_outside`` the function returns 0
    for non-interlaced (but individually sorted) inputs instead of
    raising.  For beta < 2 the density diverges at the cell boundary
    (integrably), so boundary inputs return ``inf`` there.
    """

    lam = _check_sorted(lam)
    mu = _check_sorted(mu)
    z = np.empty(2 * lam.size - 1)
    z[0::2] = lam
    z[1::2] = mu
    if np.any(np.diff(z) < 0.0):
        if zero_outside:
            return 0.0
        raise InterlacingError("inputs do not interlace")
    return math.exp(log_invariant_density_pair(lam, mu, beta, use_printed_constant))


# ---------------------------------------------------------------------------
# HCIZ integral (beta = 2)
# ---------------------------------------------------------------------------


def _snap_clusters(x: np.ndarray, tol: float) -> np.ndarray:
    """Replace runs of nearly-equal sorted values by their mean."""

    out = x.copy()
    k = 0
    while k < out.size:
        j = k
        while j + 1 < out.size and out[j + 1] - out[j] < tol:
            j += 1
        if j > k:
            out[k : j + 1] = out[k : j + 1].mean()
        k = j + 1
    return out


def _dd_rows_in_x(table: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Divided-difference transform of e^{x y} along the x direction.

    ``table[i, j]`` starts as exp(x_i y_j) and ends as the divided
    difference over the prefix nodes x_{i-k}..x_i at level k = i.  Tied
    nodes (exactly equal after snapping) are handled analytically:
    dd over k+1 equal nodes of e^{. y} is y^k e^{x y} / k!.
    """

    n = x.size
    out = table.copy()
    for level in range(1, n):
        for i in range(n - 1, level - 1, -1):
            den = x[i] - x[i - level]
            if den == 0.0:
                out[i, :] = y ** level * np.exp(x[i] * y) / math.factorial(level)
            else:
                out[i, :] = (out[i, :] - out[i - 1, :]) / den
    return out


def _dd_cols_in_y(table: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = y.size
    out = table.copy()
    for level in range(1, n):
        for j in range(n - 1, level - 1, -1):
            den = y[j] - y[j - level]
            if den == 0.0:
                raise NumericalFailureError("tied nodes in both arguments")
            out[:, j] = (out[:, j] - out[:, j - 1]) / den
    return out


def _hciz_log_core(x: np.ndarray, y: np.ndarray) -> float:
    """log of det[exp(x_i y_j)] / (Vdm(x) Vdm(y)) via divided differences."""

    n = x.size
    if n == 1:
        return float(x[0] * y[0])
    diam = max(x.max() - x.min(), y.max() - y.min(), 1e-12)
    xs = _snap_clusters(np.sort(x), _SNAP * diam)
    ys = _snap_clusters(np.sort(y), _SNAP * diam)
    x_tied = np.any(np.diff(xs) == 0.0)
    y_tied = np.any(np.diff(ys) == 0.0)
    if y_tied and not x_tied:
        xs, ys = ys, xs  # the integral is symmetric in its two arguments
        x_tied, y_tied = True, False
    if y_tied:
        # simultaneous confluence in both arguments: spread the y cluster
        # by a tiny deterministic amount (O(eps) error, documented).
        eps = 1e-8 * max(diam, float(np.abs(ys).max()), 1.0)
        ys = ys + eps * np.arange(n)
    table = np.exp(np.outer(xs, ys))
    table = _dd_rows_in_x(table, xs, ys)
    table = _dd_cols_in_y(table, ys)
    sign, logdet = np.linalg.slogdet(table)
    if sign <= 0.0:
        raise NumericalFailureError("group integral lost positivity in the determinant")
    return float(logdet)


def log_hciz(x, y) -> float:
    """log of the rank-n unitary group average of exp(Tr X U Y U^{-1}).

    Normalized so that the value at X = 0 (or Y = 0) is 1; equals
    prod_{p=1}^{n-1} p! * det[e^{x_i y_j}] / (Vdm(x) Vdm(y)) with the
    confluent (divided-difference) limit at tied arguments.
    """

    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != y.size:
        raise InvalidInputError("arguments must have the same length")
    n = x.size
    log_fact = sum(math.lgamma(p + 1) for p in range(1, n))
    return log_fact + _hciz_log_core(x, y)


def hciz(x, y) -> float:
    return math.exp(log_hciz(x, y))


def _log_sinhc(s: float) -> float:
    """log(sinh(s)/s) for s >= 0, stable for both small and large s."""

    if s < 1e-6:
        return math.log1p(s * s / 6.0)
    return s + math.log1p(-math.exp(-2.0 * s)) - math.log(2.0 * s)


def _log_hciz_2(x, y) -> float:
    """Closed n=2 form: e^{(x1+x2)(y1+y2)/2} sinh(u)/u, u = dx dy / 2."""

    s_term = 0.5 * (x[0] + x[1]) * (y[0] + y[1])
    u = 0.5 * abs((x[1] - x[0]) * (y[1] - y[0]))
    return s_term + _log_sinhc(u)


# ---------------------------------------------------------------------------
# transition density of the spectrum (beta = 2)
# ---------------------------------------------------------------------------


def log_transition_density_lambda(t, lam_bar, lam) -> float:
    """log of the time-t transition density of the ordered spectrum, beta=2."""

    if t <= 0.0:
        raise InvalidInputError(f"t must be positive, got {t}")
    lam_bar = _check_sorted(lam_bar)
    lam = _check_sorted(lam)
    if lam.size != lam_bar.size:
        raise InvalidInputError("spectra must have the same size")
    n = lam.size
    beta = 2.0
    c = math.exp(-t)
    one = 1.0 - c * c
    big_n = n / 2.0 + beta / 4.0 * n * (n - 1)
    theta = beta * c / one
    if n == 2:
        log_f = _log_hciz_2(theta * lam, lam_bar)
    else:
        log_f = _hciz_log_core(theta * lam, lam_bar)
        log_f += sum(math.lgamma(p + 1) for p in range(1, n))
    log_vdm = float(np.log(np.abs(vandermonde(lam)))) if n > 1 else 0.0
    return (
        _log_c_inv(n, beta)
        + math.lgamma(n + 1)
        - big_n * math.log(one)
        - 0.5 * beta / one * float(np.sum(lam * lam) + c * c * np.sum(lam_bar * lam_bar))
        + log_f
        + beta * log_vdm
    )


def transition_density_lambda(t, lam_bar, lam) -> float:
    """Transition density of the ordered spectrum under the matrix flow, beta=2.

    Chamber-normalized: integrates to 1 over lam_1 < ... < lam_n for every
    t and start point, and converges to :func:`invariant_density_lambda`
    as t grows.
    """

    return math.exp(log_transition_density_lambda(t, lam_bar, lam))


def scalar_ou_transition(t, x_bar, x, beta) -> float:
    """Transition density of the scalar process dX = -X dt + sqrt(2/beta) db."""

    if t <= 0.0:
        raise InvalidInputError(f"t must be positive, got {t}")
    c = math.exp(-t)
    var = (1.0 - c * c) / beta
    return math.exp(-((x - c * x_bar) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


# ---------------------------------------------------------------------------
# group-integral Monte Carlo
# ---------------------------------------------------------------------------


def _unit_sphere_samples(beta: int, shape, rng) -> np.ndarray:
    """Uniform points on S^{beta-1}: signs, phases, or unit quaternions."""

    if beta == 1:
        return np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    if beta == 2:
        return np.exp(2j * math.pi * rng.random(shape))
    q = rng.standard_normal(shape + (4,))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return q


def _g_exponent(u_mat, x, y, w, v, beta):
    """Tr X U Y U^{-1} + 2 Re <w, U v> for one group element."""

    if beta == 4:
        x_emb = np.kron(np.diag(x), np.eye(2))
        y_emb = np.kron(np.diag(y), np.eye(2))
        trace = 0.5 * np.trace(x_emb @ u_mat @ y_emb @ u_mat.conj().T).real
        w_emb = algebra.embed_quaternion_matrix(w[:, None, :])
        v_emb = algebra.embed_quaternion_matrix(v[:, None, :])
        z_emb = u_mat @ v_emb
        pairing = 0.5 * np.sum(w_emb.conj() * z_emb).real
    else:
        trace = np.trace(np.diag(x) @ u_mat @ np.diag(y) @ u_mat.conj().T).real
        pairing = np.vdot(w, u_mat @ v).real
    return trace + 2.0 * pairing


def _as_phase_vector(vec, beta: int, m: int) -> np.ndarray:
    arr = np.asarray(vec)
    if beta == 4:
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (m, 4):
            raise InvalidInputError("quaternion vectors need shape (m, 4)")
        return arr
    arr = arr.reshape(-1)
    if arr.size != m:
        raise InvalidInputError("vector length does not match the spectra")
    return arr.astype(complex if beta == 2 else float)


def g_integral_mc(x, y, w, v, beta, samples, rng):
    """Monte Carlo estimate of the group average of

        exp(Tr X U Y U^{-1} + 2 Re <w, U v>)

    over the Haar measure (orthogonal, unitary or compact symplectic for
    beta = 1, 2, 4).  Returns ``(estimate, std_error)``; unbiased, with
    the error bar from the sample standard deviation.
    """

    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    m = x.size
    if y.size != m:
        raise InvalidInputError("spectra must have the same size")
    beta = int(beta)
    if beta not in (1, 2, 4):
        raise InvalidInputError("group sampling needs beta in {1, 2, 4}")
    w = _as_phase_vector(w, beta, m)
    v = _as_phase_vector(v, beta, m)
    if samples < 2:
        raise InvalidInputError("need at least two samples for an error bar")
    expo = np.empty(samples)
    for s in range(samples):
        u_mat = algebra.haar_unitary(m, beta, rng)
        expo[s] = _g_exponent(u_mat, x, y, w, v, beta)
    shift = expo.max()
    vals = np.exp(expo - shift)
    mean = vals.mean()
    err = vals.std(ddof=1) / math.sqrt(samples)
    scale = math.exp(shift)
    return scale * mean, scale * err


# ---------------------------------------------------------------------------
# transition density of the coupled pair
# ---------------------------------------------------------------------------


def _pair_log_prefactor(t, pair_bar: InterlacedPair, pair: InterlacedPair, beta):
    n = pair.n
    if pair_bar.n != n:
        raise InvalidInputError("pairs must have the same size")
    if t <= 0.0:
        raise InvalidInputError(f"t must be positive, got {t}")
    c = math.exp(-t)
    one = 1.0 - c * c
    big_n = n / 2.0 + beta / 4.0 * n * (n - 1)
    theta = beta * c / one
    r, corner = r_from_spectra(pair.lam, pair.mu)
    r_bar, corner_bar = r_from_spectra(pair_bar.lam, pair_bar.mu)
    lam, mu = pair.lam, pair.mu
    cst = constants(n, beta)
    log_vdm_l = float(np.log(np.abs(vandermonde(lam)))) if n > 1 else 0.0
    log_vdm_m = float(np.log(np.abs(vandermonde(mu)))) if n > 2 else 0.0
    mixc = beta / 2.0 - 1.0
    mix_term = 0.0 if mixc == 0.0 else mixc * float(
        np.log(np.abs(mixed_vandermonde(lam, mu)))
    )
    log_pref = (
        math.log(cst.pair_norm)
        - big_n * math.log(one)
        - 0.5 * beta / one * float(np.sum(lam**2) + c * c * np.sum(pair_bar.lam**2))
        + beta * c * corner * corner_bar / one
        + log_vdm_l
        + log_vdm_m
        + mix_term
    )
    return log_pref, theta, r, r_bar


def transition_density_pair_mc(t, pair_bar, pair, beta, samples, rng):
    """Monte Carlo evaluation of the joint transition density of (lam, mu).

    The closed-form prefactor (Gaussian weight, corner coupling and
    Vandermonde factors, with the chamber-normalizing constant) multiplies
    the group-and-phase average of the rank-(n-1) integrand

        G(U; theta mu, mu_bar; theta r u, r_bar u_bar)

    sampled over Haar U and independent uniform border phases u, u_bar on
    S^{beta-1}.  Returns ``(estimate, std_error)``.
    """

    beta = int(beta)
    if beta not in (1, 2, 4):
        raise InvalidInputError("group sampling needs beta in {1, 2, 4}")
    if samples < 2:
        raise InvalidInputError("need at least two samples for an error bar")
    log_pref, theta, r, r_bar = _pair_log_prefactor(t, pair_bar, pair, beta)
    m = pair.n - 1
    x = theta * pair.mu
    y = pair_bar.mu

    if m == 1:
        # Rank-one group elements commute with the scalars: only the
        # border pairing depends on the draws, and it collapses to a
        # single effective phase.
        a = theta * float(r[0]) * float(r_bar[0])
        base = float(x[0] * y[0])
        if beta == 1:
            s = np.where(rng.random(samples) < 0.5, -1.0, 1.0)
            expo = base + 2.0 * a * s
        elif beta == 2:
            phi = 2.0 * math.pi * rng.random(samples)
            expo = base + 2.0 * a * np.cos(phi)
        else:
            q = rng.standard_normal((samples, 4))
            cosang = q[:, 0] / np.linalg.norm(q, axis=1)
            expo = base + 2.0 * a * cosang
    else:
        expo = np.empty(samples)
        for s_idx in range(samples):
            u_mat = algebra.haar_unitary(m, beta, rng)
            u = _unit_sphere_samples(beta, (m,), rng)
            u_bar = _unit_sphere_samples(beta, (m,), rng)
            if beta == 4:
                w = theta * r[:, None] * u
                v = r_bar[:, None] * u_bar
            else:
                w = theta * r * u
                v = r_bar * u_bar
            expo[s_idx] = _g_exponent(u_mat, x, y, w, v, beta)

    shift = float(expo.max())
    vals = np.exp(expo - shift)
    mean = vals.mean()
    err = vals.std(ddof=1) / math.sqrt(samples)
    scale = math.exp(log_pref + shift)
    return scale * mean, scale * err


def transition_density_pair_closed_n2(t, pair_bar, pair, beta) -> float:
    """Closed form of the joint transition density at n = 2.

    The rank-one group and phase averages reduce to classical kernels:
    cosh for beta = 1, the Bessel function I0 for beta = 2 and 2 I1(z)/z
    for beta = 4 (the spherical average over S^3).
    """

    beta = int(beta)
    if beta not in (1, 2, 4):
        raise InvalidInputError("closed form needs beta in {1, 2, 4}")
    if pair.n != 2 or pair_bar.n != 2:
        raise InvalidInputError("closed form is specific to n = 2")
    log_pref, theta, r, r_bar = _pair_log_prefactor(t, pair_bar, pair, beta)
    base = theta * float(pair.mu[0]) * float(pair_bar.mu[0])
    z = 2.0 * theta * float(r[0]) * float(r_bar[0])
    if beta == 1:
        log_avg = _log_cosh(z)
    elif beta == 2:
        log_avg = math.log(float(i0e(z))) + abs(z)
    else:
        log_avg = _log_i1_over_halfz(z)
    return math.exp(log_pref + base + log_avg)


def _log_cosh(z: float) -> float:
    z = abs(z)
    return z + math.log1p(math.exp(-2.0 * z)) - math.log(2.0)


def _log_i1_over_halfz(z: float) -> float:
    """log(2 I1(z)/z), the S^3 average of exp(z cos angle); -> 0 as z -> 0."""

    z = abs(z)
    if z < 1e-8:
        return math.log1p(z * z / 8.0)
    return math.log(2.0 * float(i1e(z)) / z) + z


# ---------------------------------------------------------------------------
# adjoint (forward) generators by nested central differences
# ---------------------------------------------------------------------------


def _log_phi_pow_beta(x: np.ndarray, beta: float) -> float:
    """beta * log Phi(x) with Phi(x) = e^{-sum x^2 / 2} |Vandermonde(x)|."""

    n = x.size
    vdm = float(np.log(np.abs(vandermonde(x)))) if n > 1 else 0.0
    return beta * (-0.5 * float(np.sum(x * x)) + vdm)


def _divergence_form_fd(eval_f, x: np.ndarray, beta: float, h: float) -> float:
    """(1/beta) sum_i d_i [ Phi^beta d_i (f / Phi^beta) ] at x.

    ``eval_f`` maps a replacement vector for x to f.  Conservative 5-point
    stencil per coordinate, O(h^2) truncation.
    """

    def g(vec: np.ndarray) -> float:
        return eval_f(vec) / math.exp(_log_phi_pow_beta(vec, beta))

    g0 = g(x)
    total = 0.0
    for i in range(x.size):
        e_i = np.zeros_like(x)
        e_i[i] = 1.0
        phi_p = math.exp(_log_phi_pow_beta(x + h * e_i, beta))
        phi_m = math.exp(_log_phi_pow_beta(x - h * e_i, beta))
        flux_p = phi_p * (g(x + 2.0 * h * e_i) - g0)
        flux_m = phi_m * (g0 - g(x - 2.0 * h * e_i))
        total += (flux_p - flux_m) / (4.0 * h * h)
    return total / beta


def _safe_step(pair: InterlacedPair, h: float | None) -> float:
    base = 1e-3 if h is None else h
    cap = 0.2 * pair.min_gap()
    step = min(base, cap)
    if step < 1e-8:
        raise NumericalFailureError(
            "stencil cannot fit inside the interlacing cell; gap too small"
        )
    return step


def adjoint_lambda_density(f, lam, beta, h=1e-3, richardson=True) -> float:
    """Forward generator (divergence form) in lam for functions of lam only."""

    lam = np.asarray(lam, dtype=float).reshape(-1)

    def run(step: float) -> float:
        return _divergence_form_fd(lambda v: f(v), lam, beta, step)

    if not richardson:
        return run(h)
    coarse, fine = run(h), run(0.5 * h)
    return (4.0 * fine - coarse) / 3.0


def adjoint_lambda(f, pair: InterlacedPair, beta, h=None, richardson=True) -> float:
    """Forward generator acting in the lam coordinates of f(lam, mu)."""

    step = _safe_step(pair, h)
    lam, mu = pair.lam, pair.mu

    def run(s: float) -> float:
        return _divergence_form_fd(lambda v: f(v, mu), lam, beta, s)

    if not richardson:
        return run(step)
    coarse, fine = run(step), run(0.5 * step)
    return (4.0 * fine - coarse) / 3.0


def adjoint_mu(f, pair: InterlacedPair, beta, h=None, richardson=True) -> float:
    """Forward generator acting in the mu coordinates of f(lam, mu)."""

    step = _safe_step(pair, h)
    lam, mu = pair.lam, pair.mu

    def run(s: float) -> float:
        return _divergence_form_fd(lambda v: f(lam, v), mu, beta, s)

    if not richardson:
        return run(step)
    coarse, fine = run(step), run(0.5 * step)
    return (4.0 * fine - coarse) / 3.0


def _cross_kernel(lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Psi_ij = P_{n-1}(lam_i) P_n(mu_j) / (P'_n(lam_i) P'_{n-1}(mu_j) (lam_i - mu_j)^2)."""

    dlm = lam[:, None] - mu[None, :]
    dll = lam[:, None] - lam[None, :]
    np.fill_diagonal(dll, 1.0)
    dmm = mu[:, None] - mu[None, :]
    np.fill_diagonal(dmm, 1.0)
    p_lam = dlm.prod(axis=1)
    pp_lam = dll.prod(axis=1)
    p_mu = (-dlm).prod(axis=0)
    pp_mu = dmm.prod(axis=1)
    return (p_lam / pp_lam)[:, None] * (p_mu / pp_mu)[None, :] / (dlm * dlm)


def adjoint_cross(f, pair: InterlacedPair, beta, h=None, richardson=True) -> float:
    """Mixed forward term:

        -(2/beta) sum_ij d_lam_i d_mu_j [ Psi_ij(lam, mu) f(lam, mu) ].
    """

    step = _safe_step(pair, h)
    lam, mu = pair.lam, pair.mu
    n = lam.size

    def term(s: float) -> float:
        total = 0.0
        for i in range(n):
            for j in range(n - 1):
                val = 0.0
                for sl, sm, sign in (
                    (s, s, 1.0),
                    (s, -s, -1.0),
                    (-s, s, -1.0),
                    (-s, -s, 1.0),
                ):
                    lam_s = lam.copy()
                    mu_s = mu.copy()
                    lam_s[i] += sl
                    mu_s[j] += sm
                    val += sign * _cross_kernel(lam_s, mu_s)[i, j] * f(lam_s, mu_s)
                total += val / (4.0 * s * s)
        return -2.0 / beta * total

    if not richardson:
        return term(step)
    coarse, fine = term(step), term(0.5 * step)
    return (4.0 * fine - coarse) / 3.0


def adjoint_generator_apply(which, f, pair: InterlacedPair, beta, h=None, richardson=True) -> float:
    """Apply a forward-generator piece at ``pair``: 'lambda', 'mu', 'cross' or 'full'.

    ``f`` takes (lam, mu) arrays and returns a float; strict interlacing is
    required and the stencil is shrunk to stay inside the cell (an error is
    raised if no usable step remains).  Truncation is O(h^2), improved to
    O(h^4) by Richardson extrapolation unless disabled.
    """

    if not pair.is_strict():
        raise InterlacingError("generator stencils need strict interlacing")
    if which == "lambda":
        return adjoint_lambda(f, pair, beta, h, richardson)
    if which == "mu":
        return adjoint_mu(f, pair, beta, h, richardson)
    if which == "cross":
        return adjoint_cross(f, pair, beta, h, richardson)
    if which == "full":
        return (
            adjoint_lambda(f, pair, beta, h, richardson)
            + adjoint_mu(f, pair, beta, h, richardson)
            + adjoint_cross(f, pair, beta, h, richardson)
        )
    raise InvalidInputError(f"unknown generator piece {which!r}")


def invariant_pair_null_residual(pair: InterlacedPair, beta, h=None) -> float:
    """Normalized residual of the stationarity equation at ``pair``.

    Applies the full forward (divergence-form) generator to the invariant
    pair density by finite differences and rescales by the local density
    over the squared interlacing gap, so the result is dimensionless and
    O(1) would signal a genuine violation.  Zero (to stencil accuracy) at
    every strictly interlaced point iff the density is invariant.
    """

    def rho(lam, mu):
        return invariant_density_pair(lam, mu, beta)

    raw = adjoint_generator_apply("full", rho, pair, beta, h)
    scale = invariant_density_pair(pair.lam, pair.mu, beta)
    gap = max(pair.min_gap(), 1e-6)
    if scale <= 0.0:
        raise NumericalFailureError("density vanished at the requested point")
    return abs(raw) * gap * gap / scale


# ---------------------------------------------------------------------------
# deterministic quadrature oracles
# ---------------------------------------------------------------------------
#
# Used by the verification suite and the CLI to pin normalizations and
# moments without Monte Carlo.  Weight placement matters near the chamber
# boundary: |lam_i - lam_j|^beta has a non-analytic kink at coincidence for
# non-even beta, so n = 2 uses the mean/gap substitution (exact weights,
# spectral accuracy for every beta > 0) while n = 3 enumerates ordered
# Gauss-Hermite triples (exact for even beta; relative error ~1e-4 on
# ratio-type oracles otherwise).  The mu-sector weight
# prod |lam_i - mu_j|^(beta/2 - 1) is absorbed exactly by Gauss-Jacobi rules
# on each interlacing interval.


def _mean_gap_rules(beta: float, nodes: int):
    """Nodes/weights for the (mean, gap) parametrization at n = 2.

    lam = (m - d/2, m + d/2) turns e^{-beta/2 sum lam^2} d^beta dlam into
    separate 1-D weights: Gauss-Hermite in m (weight e^{-beta m^2}) and
    generalized Gauss-Laguerre in u = beta d^2/4 (weight u^{(beta-1)/2}
    e^{-u}); the constant below restores the d-measure.
    """

    xm, wm = np.polynomial.hermite.hermgauss(nodes)
    m = xm / math.sqrt(beta)
    wm = wm / math.sqrt(beta)
    u, wu = scipy.special.roots_genlaguerre(nodes, 0.5 * (beta - 1.0))
    d = 2.0 * np.sqrt(u / beta)
    wd = wu * (2.0**beta / beta ** (0.5 * (beta + 1.0)))
    return m, wm, d, wd


def integrate_invariant_lambda(n: int, beta: float, f=None, nodes: int | None = None) -> float:
    """E[f(lam)] under the stationary spectral law, by quadrature (n <= 3).

    With ``f=None`` returns the total mass of the chamber-normalized
    density — the normalization oracle.  ``f`` maps an array (..., n) of
    ordered spectra to (...).
    """

    if beta <= 0:
        raise InvalidInputError("beta must be positive")
    if n == 2:
        nodes = nodes or 48
        m, wm, d, wd = _mean_gap_rules(beta, nodes)
        cst = constants(2, beta)
        lam = np.empty((nodes, nodes, 2))
        lam[..., 0] = m[:, None] - 0.5 * d[None, :]
        lam[..., 1] = m[:, None] + 0.5 * d[None, :]
        vals = np.outer(wm, wd) * cst.lambda_norm
        if f is not None:
            vals = vals * np.asarray(f(lam), dtype=float)
        return float(vals.sum())
    if n == 3:
        nodes = nodes or 48
        x, w = np.polynomial.hermite.hermgauss(nodes)
        scale = math.sqrt(2.0 / beta)
        idx = np.array(list(itertools.combinations(range(nodes), 3)))
        lam = x[idx] * scale
        logw = np.log(w)[idx].sum(axis=1) + 3.0 * math.log(scale)
        gaps = np.stack(
            [lam[:, 1] - lam[:, 0], lam[:, 2] - lam[:, 1], lam[:, 2] - lam[:, 0]],
            axis=1,
        )
        cst = constants(3, beta)
        vals = np.exp(logw + beta * np.log(gaps).sum(axis=1)) * cst.lambda_norm
        if f is not None:
            vals = vals * np.asarray(f(lam), dtype=float)
        return float(vals.sum())
    raise InvalidInputError("quadrature oracle implemented for n in {2, 3}")


def integrate_invariant_pair(
    n: int,
    beta: float,
    f=None,
    nodes: int | None = None,
    mu_nodes: int = 24,
    use_printed_constant: bool = False,
) -> float:
    """E[f(lam, mu)] under the joint invariant law, by quadrature (n <= 3).

    ``f=None`` gives the total mass (1 with the first-principles constant;
    the printed-constant variant exposes the ratio).  ``f`` maps arrays
    (..., n), (..., n-1) to (...).
    """

    if beta <= 0:
        raise InvalidInputError("beta must be positive")
    c_exp = 0.5 * beta - 1.0
    tj, wj = scipy.special.roots_jacobi(mu_nodes, c_exp, c_exp)
    cst = constants(n, beta)
    if use_printed_constant:
        if cst.printed_pair_prefactor is None:
            raise InvalidInputError("printed constant only exists for beta in {1, 2, 4}")
        pref = cst.printed_pair_prefactor
    else:
        pref = cst.pair_norm

    if n == 2:
        nodes = nodes or 48
        m, wm, d, wd = _mean_gap_rules(beta, nodes)
        # density = pref e^{-beta/2 sum lam^2} * d * ((mu-lam1)(lam2-mu))^c;
        # the Jacobi map leaves (d/2)^(2c+1) per mu and one d from |D(lam)|,
        # total d^beta — exactly the Laguerre weight.
        base = pref * 2.0 ** -(2.0 * c_exp + 1.0)
        vals = wm[:, None, None] * wd[None, :, None] * wj[None, None, :] * base
        if f is not None:
            lam = np.empty((nodes, nodes, 1, 2))
            lam[..., 0] = (m[:, None] - 0.5 * d[None, :])[..., None]
            lam[..., 1] = (m[:, None] + 0.5 * d[None, :])[..., None]
            mu = (m[:, None, None] + 0.5 * d[None, :, None] * tj[None, None, :])[
                ..., None
            ]
            lam_b = np.broadcast_to(lam, (nodes, nodes, mu.shape[2], 2))
            vals = vals * np.asarray(f(lam_b, mu), dtype=float)
        return float(vals.sum())

    if n == 3:
        nodes = nodes or 40
        x, w = np.polynomial.hermite.hermgauss(nodes)
        scale = math.sqrt(2.0 / beta)
        idx = np.array(list(itertools.combinations(range(nodes), 3)))
        lam = x[idx] * scale
        logw = np.log(w)[idx].sum(axis=1) + 3.0 * math.log(scale)
        total = 0.0
        grid = np.stack(np.meshgrid(tj, tj, indexing="ij"), axis=-1).reshape(-1, 2)
        wgrid = np.outer(wj, wj).reshape(-1)
        for start in range(0, len(lam), 512):
            lam_c = lam[start : start + 512]
            logw_c = logw[start : start + 512]
            h1 = 0.5 * (lam_c[:, 1] - lam_c[:, 0])
            h2 = 0.5 * (lam_c[:, 2] - lam_c[:, 1])
            mu1 = 0.5 * (lam_c[:, 0] + lam_c[:, 1])[:, None] + h1[:, None] * grid[:, 0]
            mu2 = 0.5 * (lam_c[:, 1] + lam_c[:, 2])[:, None] + h2[:, None] * grid[:, 1]
            # Jacobi weights absorb (mu1-lam1)(lam2-mu1) and (mu2-lam2)(lam3-mu2);
            # the remaining smooth mixed factors and |D(mu)| stay explicit.
            smooth = (
                (lam_c[:, 2][:, None] - mu1) ** c_exp
                * (mu2 - lam_c[:, 0][:, None]) ** c_exp
                * (mu2 - mu1)
            )
            cell = (
                np.exp(logw_c)
                * (lam_c[:, 1] - lam_c[:, 0])
                * (lam_c[:, 2] - lam_c[:, 1])
                * (lam_c[:, 2] - lam_c[:, 0])
                * h1 ** (2.0 * c_exp + 1.0)
                * h2 ** (2.0 * c_exp + 1.0)
            )
            inner = smooth * wgrid[None, :]
            if f is not None:
                lam_b = np.broadcast_to(
                    lam_c[:, None, :], (lam_c.shape[0], grid.shape[0], 3)
                )
                mu_b = np.stack([mu1, mu2], axis=-1)
                inner = inner * np.asarray(f(lam_b, mu_b), dtype=float)
            total += float((cell * inner.sum(axis=1)).sum())
        return pref * total

    raise InvalidInputError("quadrature oracle implemented for n in {2, 3}")


def integrate_transition_lambda(t: float, lam_bar, f=None, nodes: int = 120) -> float:
    """E[f(lam_t)] under the n = 2, beta = 2 spectral transition density.

    Gauss-Hermite against the envelope e^{-lam^2/(1-c^2)}; the remaining
    factor (polynomial times an entire mixing kernel) converges spectrally.
    ``f=None`` yields the normalization oracle.
    """

    lam_bar = np.asarray(lam_bar, dtype=float).reshape(-1)
    if lam_bar.size != 2:
        raise InvalidInputError("transition quadrature is built for n = 2")
    c = math.exp(-t)
    alpha = 1.0 / (1.0 - c * c)
    x, w = np.polynomial.hermite.hermgauss(nodes)
    pts = x / math.sqrt(alpha)
    logw = np.log(w) + x * x - 0.5 * math.log(alpha)
    total = 0.0
    for i in range(nodes - 1):
        lam2 = pts[i + 1 :]
        vals = np.array(
            [
                log_transition_density_lambda(t, lam_bar, np.array([pts[i], l2]))
                for l2 in lam2
            ]
        )
        cell = np.exp(logw[i] + logw[i + 1 :] + vals)
        if f is not None:
            lam_pairs = np.stack(
                [np.full(lam2.shape, pts[i]), lam2], axis=-1
            )
            cell = cell * np.asarray(f(lam_pairs), dtype=float)
        total += float(cell.sum())
    return total
