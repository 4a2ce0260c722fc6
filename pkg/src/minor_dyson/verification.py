"""Statistical experiments on the spectral processes.

Three experiments back the headline claims:

* ``path_equivalence_experiment`` — the spectra/minor-spectra of the
  matrix-valued Ornstein-Uhlenbeck flow and the coupled spectral SDE follow
  the same law.  Both routes are sampled from the same fixed start and every
  one-dimensional marginal (plus symmetric functionals) is compared by a
  two-sample Kolmogorov-Smirnov test; the instantaneous lambda-mu
  cross-covariation is checked against its closed form, which is the part a
  deliberately decoupled drive fails.
* ``stationarity_experiment`` — the eigen-data of a Gaussian-ensemble draw
  is invariant under the coupled flow: paired before/after moments agree
  within Monte Carlo bands.
* ``nonmarkov_witness`` — the joint spectra (lambda, mu, nu) of a matrix,
  its leading (n-1) x (n-1) and its leading (n-2) x (n-2) minors do *not*
  form a Markov family.  For n = 3, beta = 2 a matrix is reconstructed from
  (lambda, mu, nu) plus one residual angle s; the generator applied to
  phi = (sum of the first n-2 diagonal entries) * det B contains the term
  (2/beta) det(minor_11 B), which depends on s through the off-diagonal
  modulus rho_1.  Preparing two matrices with identical spectral data but
  different s therefore produces measurably different drifts of phi.

Reconstruction coordinates (n = 3).  Writing the matrix as

    [ B11          rho3 e^{+i eta3}   rho2 e^{-i eta2} ]
    [ rho3 e^{-i eta3}   B22          rho1 e^{+i eta1} ]
    [ rho2 e^{+i eta2}   rho1 e^{-i eta1}   B33        ]

the spectral data fix B11 = nu_1, B22 = mu_1 + mu_2 - nu_1,
B33 = sum(lambda) - sum(mu) and rho3^2 = (mu_2 - nu_1)(nu_1 - mu_1), while
Tr B^2 and det B leave a one-parameter family in (rho1, rho2) indexed by
s = eta1 + eta2 + eta3 and a two-fold branch.  Only the combination s and
the branch enter any invariant; eta1, eta2 are pure gauge.

All experiments return an :class:`~minor_dyson.report.ExperimentReport`
with full provenance; every Monte Carlo stream is keyed by (seed, role,
path), so reports are byte-identical for a fixed (config, seed) regardless
of worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.stats

from ._rng import stream
from .algebra import (
    SelfAdjointMatrix,
    batched_eigenvalues,
    eigenvalues,
    quaternion_determinant,
    sample_gaussian_components,
    sample_gaussian_ensemble,
)
from .errors import (
    InfeasibleGaugeError,
    InvalidInputError,
    NumericalFailureError,
)
from .matrix_process import apply_dyson_generator, ou_endpoints
from .minor_geometry import pair_from_matrix
from .report import ExperimentReport, TestOutcome
from .spectral_sde import (
    CoupledState,
    coupled_paths,
    empirical_covariation,
    quadratic_variation_analytic,
)

__all__ = [
    "TripleSpectra",
    "AngleGauge",
    "triple_from_matrix",
    "gauge_from_matrix",
    "ks_two_sample",
    "reconstruct_triple_n3",
    "det_minor_11",
    "witness_phi",
    "path_equivalence_experiment",
    "stationarity_experiment",
    "nonmarkov_witness",
]

#: Per-test significance after Bonferroni correction (experiment level 0.05).
MARGINAL_ALPHA = 0.005

#: Monte Carlo z-score band used by all moment/covariation comparisons.
SIGMA_BAND = 3.0

_TWO_PI = 2.0 * math.pi
_MC_CHUNK = 1 << 16

# Stream roles: every derived seed is SeedSequence(seed, spawn_key=(role,)),
# so distinct roles (and distinct user seeds) never share a Philox stream.
_ROLE_START = 1
_ROLE_MATRIX_ROUTE = 2
_ROLE_SPECTRAL_ROUTE = 3
_ROLE_COVARIATION = 4
_ROLE_ENSEMBLE = 5
_ROLE_EVOLVE = 6
_ROLE_WITNESS = 7


def _derived_seed(seed: int, role: int) -> int:
    """Well-mixed child seed for one stream role."""

    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(role),))
    return int(ss.generate_state(1, np.uint64)[0])


def _normal_two_sided_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TripleSpectra:
    """Sorted spectra of a matrix and its two leading principal minors.

    ``lam`` has size n, ``mu`` size n-1, ``nu`` size n-2; consecutive levels
    must interlace strictly (the flow never reaches the boundary).
    """

    lam: np.ndarray
    mu: np.ndarray
    nu: np.ndarray

    def __init__(self, lam, mu, nu) -> None:
        lam = np.sort(np.asarray(lam, dtype=float).reshape(-1))
        mu = np.sort(np.asarray(mu, dtype=float).reshape(-1))
        nu = np.sort(np.asarray(nu, dtype=float).reshape(-1))
        if lam.size < 3 or mu.size != lam.size - 1 or nu.size != lam.size - 2:
            raise InvalidInputError(
                "triple needs sizes (n, n-1, n-2) with n >= 3, got "
                f"({lam.size}, {mu.size}, {nu.size})"
            )
        for outer, inner, names in ((lam, mu, "lambda/mu"), (mu, nu, "mu/nu")):
            if not (
                np.all(inner > outer[:-1]) and np.all(inner < outer[1:])
            ) or not np.all(np.isfinite(outer)):
                raise InvalidInputError(f"{names} must interlace strictly")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)

    @property
    def n(self) -> int:
        return self.lam.size

    def diameter(self) -> float:
        return float(self.lam[-1] - self.lam[0])


@dataclass(frozen=True, eq=False)
class AngleGauge:
    """Residual angle data of the three-spectra reconstruction.

    ``s`` is the invariant combination eta1 + eta2 + eta3, stored reduced to
    [0, 2*pi); ``eta1`` and ``eta2`` are the pure-gauge phases (eta3 is
    implied).  Only ``s`` enters any spectral invariant.
    """

    s: float
    eta1: float = 0.0
    eta2: float = 0.0

    def __init__(self, s: float, eta1: float = 0.0, eta2: float = 0.0) -> None:
        s = float(s)
        if not math.isfinite(s):
            raise InvalidInputError("angle s must be finite")
        object.__setattr__(self, "s", s % _TWO_PI)
        object.__setattr__(self, "eta1", float(eta1))
        object.__setattr__(self, "eta2", float(eta2))

    @property
    def eta3(self) -> float:
        return self.s - self.eta1 - self.eta2


def triple_from_matrix(matrix: SelfAdjointMatrix) -> TripleSpectra:
    """Spectra of a matrix and its two leading principal minors."""

    n = matrix.n
    if n < 3:
        raise InvalidInputError("three-spectra data needs n >= 3")
    lam = eigenvalues(matrix)
    mu = eigenvalues(matrix.minor(n - 1))
    nu = eigenvalues(matrix.minor(n - 2))
    return TripleSpectra(lam, mu, nu)


def gauge_from_matrix(matrix: SelfAdjointMatrix) -> AngleGauge:
    """Extract (s, eta1, eta2) from a 3 x 3 complex self-adjoint matrix.

    Inverts the phase convention of :func:`reconstruct_triple_n3`:
    B[1,2] = rho1 e^{i eta1}, B[0,2] = rho2 e^{-i eta2},
    B[0,1] = rho3 e^{i eta3}.
    """

    if matrix.n != 3 or matrix.beta != 2:
        raise InvalidInputError("gauge extraction is defined for n=3, beta=2")
    z = matrix.components[..., 0] + 1j * matrix.components[..., 1]
    eta1 = math.atan2(z[1, 2].imag, z[1, 2].real)
    eta2 = -math.atan2(z[0, 2].imag, z[0, 2].real)
    eta3 = math.atan2(z[0, 1].imag, z[0, 1].real)
    return AngleGauge(eta1 + eta2 + eta3, eta1, eta2)


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov plumbing
# ---------------------------------------------------------------------------


def ks_two_sample(xs, ys) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic with asymptotic p-value."""

    xs = np.asarray(xs, dtype=float).reshape(-1)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if xs.size == 0 or ys.size == 0:
        raise InvalidInputError("Kolmogorov-Smirnov needs nonempty samples")
    res = scipy.stats.ks_2samp(xs, ys, alternative="two-sided", method="asymp")
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# three-spectra reconstruction (n = 3, beta = 2)
# ---------------------------------------------------------------------------


def _solve_rho(triple: TripleSpectra, s: float, branch: int) -> tuple[float, float, float]:
    """Moduli (rho1, rho2, rho3) >= 0 solving the two trace constraints.

    With a = B11, b = B22 fixed by the triple, det B = prod(lambda) and
    Tr B^2 = sum(lambda^2) reduce to

        rho1^2 + rho2^2 = S,
        a rho1^2 + b rho2^2 - 2 rho1 rho2 rho3 cos(s) = F1,

    solved by rho1 = sqrt(S) cos(theta/2), rho2 = sqrt(S) sin(theta/2) and
    R cos(theta + delta) = T on theta in [0, pi].  Up to two angles qualify;
    ``branch`` +1 selects the larger rho1, -1 the smaller.
    """

    if branch not in (1, -1):
        raise InvalidInputError("branch must be +1 or -1")
    lam, mu, nu = triple.lam, triple.mu, triple.nu
    a = nu[0]
    b = mu[0] + mu[1] - nu[0]
    b33 = lam.sum() - mu.sum()
    rho3 = math.sqrt((mu[1] - nu[0]) * (nu[0] - mu[0]))
    scale = max(1.0, triple.diameter() ** 2)
    s_sum = 0.5 * (float(np.dot(lam, lam)) - (a * a + b * b + b33 * b33)) - rho3 * rho3
    if s_sum < -1e-12 * scale:
        raise InfeasibleGaugeError(
            f"rho1^2 + rho2^2 = {s_sum:.3e} < 0: triple admits no matrix"
        )
    s_sum = max(s_sum, 0.0)
    f1 = a * b * b33 - float(np.prod(lam)) - rho3 * rho3 * b33
    if s_sum == 0.0:
        if abs(f1) > 1e-12 * scale * max(1.0, triple.diameter()):
            raise InfeasibleGaugeError("rho1 = rho2 = 0 conflicts with det B")
        return 0.0, 0.0, rho3
    amp_a = 0.5 * (a - b)
    amp_c = rho3 * math.cos(s)
    t_val = f1 / s_sum - 0.5 * (a + b)
    radius = math.hypot(amp_a, amp_c)
    tiny = 1e-14 * scale
    if radius <= tiny:
        if abs(t_val) <= tiny:
            # Degenerate case a = b, cos(s) = 0: every theta solves the
            # system; pick the symmetric rho1 = rho2 point.
            theta_candidates = [0.5 * math.pi]
        else:
            raise InfeasibleGaugeError(
                "det-B constraint unsatisfiable: oscillation amplitude 0 "
                f"but offset {t_val:.3e}"
            )
    else:
        u = t_val / radius
        if abs(u) > 1.0 + 1e-9:
            raise InfeasibleGaugeError(
                f"angle s={s:.6f} outside the admissible band for this "
                f"triple: |T|/R = {abs(u):.6f} > 1"
            )
        cang = math.acos(min(1.0, max(-1.0, u)))
        delta = math.atan2(amp_c, amp_a)
        theta_candidates = []
        for cand in ((-delta + cang) % _TWO_PI, (-delta - cang) % _TWO_PI):
            if cand <= math.pi + 1e-9:
                cand = min(max(cand, 0.0), math.pi)
                if not any(abs(cand - q) <= 1e-12 for q in theta_candidates):
                    theta_candidates.append(cand)
        if not theta_candidates:
            raise InfeasibleGaugeError(
                f"angle s={s:.6f} admits no nonnegative (rho1, rho2) "
                "for this triple"
            )
    theta_candidates.sort()
    theta = theta_candidates[0] if branch == 1 else theta_candidates[-1]
    root = math.sqrt(s_sum)
    return root * math.cos(0.5 * theta), root * math.sin(0.5 * theta), rho3


def reconstruct_triple_n3(
    triple: TripleSpectra, gauge: AngleGauge, branch: int = 1
) -> SelfAdjointMatrix:
    """Complex self-adjoint 3 x 3 matrix with prescribed three-level spectra.

    The diagonal and rho3 are forced by ``triple``; the remaining moduli
    solve the det/trace constraints at angle ``gauge.s`` on the requested
    ``branch`` (+1: larger rho1, -1: smaller; a unique solution serves both).
    Phases are distributed per ``gauge``.  The result is re-diagonalized and
    must reproduce the triple to 1e-9 (relative to the spectral diameter);
    infeasible (triple, s) combinations raise
    :class:`~minor_dyson.errors.InfeasibleGaugeError`.
    """

    if triple.n != 3:
        raise InvalidInputError("reconstruction is defined for n = 3")
    rho1, rho2, rho3 = _solve_rho(triple, gauge.s, branch)
    a = triple.nu[0]
    b = triple.mu[0] + triple.mu[1] - triple.nu[0]
    b33 = triple.lam.sum() - triple.mu.sum()
    eta1, eta2, eta3 = gauge.eta1, gauge.eta2, gauge.eta3
    z = np.array(
        [
            [a, rho3 * np.exp(1j * eta3), rho2 * np.exp(-1j * eta2)],
            [rho3 * np.exp(-1j * eta3), b, rho1 * np.exp(1j * eta1)],
            [rho2 * np.exp(1j * eta2), rho1 * np.exp(-1j * eta1), b33],
        ]
    )
    comps = np.stack([z.real, z.imag], axis=-1)
    matrix = SelfAdjointMatrix(comps, copy=False)
    built = triple_from_matrix(matrix)
    tol = 1e-9 * max(1.0, triple.diameter())
    err = max(
        float(np.max(np.abs(built.lam - triple.lam))),
        float(np.max(np.abs(built.mu - triple.mu))),
        float(np.max(np.abs(built.nu - triple.nu))),
    )
    if err > tol:
        raise NumericalFailureError(
            f"reconstruction round trip off by {err:.3e} (tol {tol:.3e})"
        )
    return matrix


# ---------------------------------------------------------------------------
# witness observable
# ---------------------------------------------------------------------------


def _determinant(matrix: SelfAdjointMatrix) -> float:
    if matrix.beta == 1:
        return float(np.linalg.det(matrix.components[..., 0]))
    if matrix.beta == 2:
        z = matrix.components[..., 0] + 1j * matrix.components[..., 1]
        return float(np.linalg.det(z).real)
    return quaternion_determinant(matrix)


def det_minor_11(matrix: SelfAdjointMatrix) -> float:
    """Determinant of the trailing principal submatrix (row/col 1 removed)."""

    trailing = SelfAdjointMatrix(matrix.components[1:, 1:, :], validate=False)
    return _determinant(trailing)


def witness_phi(matrix: SelfAdjointMatrix) -> float:
    """The witness observable (sum of first n-2 diagonal entries) * det B.

    Both factors are spectral: the partial trace equals sum(nu) and the
    determinant equals prod(lambda); only the *drift* of their product sees
    the residual angle.
    """

    x = float(np.trace(matrix.components[: matrix.n - 2, : matrix.n - 2, 0]))
    return x * _determinant(matrix)


# ---------------------------------------------------------------------------
# experiment: path-law equivalence
# ---------------------------------------------------------------------------


def _generic_start(n: int, beta: int, seed: int, min_gap: float = 0.2):
    """First ensemble draw whose interlacing gaps resolve comfortably.

    Returns (matrix, pair).  Deterministic in ``seed``; the gap floor keeps
    the Euler-Maruyama route well inside its accuracy regime.
    """

    for attempt in range(256):
        rng = stream(seed, _ROLE_START, attempt)
        b0 = sample_gaussian_ensemble(n, beta, rng)
        pair = pair_from_matrix(b0)
        if pair.is_strict() and pair.min_gap() >= min_gap:
            return b0, pair
    raise NumericalFailureError("no well-separated ensemble start found")


def path_equivalence_experiment(
    n: int,
    beta: int,
    t: float,
    paths: int,
    seed: int = 0,
    *,
    dt: float = 1e-3,
    workers: int = 1,
    decoupled: bool = False,
    covariation_samples: int = 200_000,
    covariation_dt: float = 1e-4,
) -> ExperimentReport:
    """Compare the matrix route and the coupled-SDE route to time ``t``.

    Route A samples the matrix flow exactly from a fixed generic start and
    reads off (spectrum, minor spectrum); route B integrates the coupled
    SDE from the start's eigen-data.  Every marginal (n lambdas, n-1 mus)
    and the functionals sum(lambda), sum(lambda^2), sum(mu) are compared by
    :func:`ks_two_sample`; the experiment passes when all p-values exceed
    the Bonferroni-corrected 0.005 and the instantaneous lambda-mu
    cross-covariation matches its closed form within 3 sigma.

    ``decoupled=True`` drives the mu-line with fresh Brownian motions — a
    negative control that leaves every marginal law intact but violates the
    cross-covariation, and must therefore fail.
    """

    if beta not in (1, 2, 4):
        raise InvalidInputError("matrix route needs beta in {1, 2, 4}")
    beta = int(beta)
    if paths < 2:
        raise InvalidInputError("need at least two paths")
    if t < 0:
        raise InvalidInputError("t must be nonnegative")
    b0, pair0 = _generic_start(n, beta, seed)
    if t > 0:
        ends = ou_endpoints(b0, t, paths, _derived_seed(seed, _ROLE_MATRIX_ROUTE))
        lam_a = batched_eigenvalues(ends, beta)
        mu_a = batched_eigenvalues(ends[:, : n - 1, : n - 1, :], beta)
        res = coupled_paths(
            pair0.lam,
            pair0.mu,
            t,
            dt,
            beta,
            paths,
            seed=_derived_seed(seed, _ROLE_SPECTRAL_ROUTE),
            workers=workers,
            decoupled=decoupled,
        )
        lam_b, mu_b = res.lam, res.mu
        diagnostics = res.diagnostics
    else:
        lam_a = np.tile(pair0.lam, (paths, 1))
        mu_a = np.tile(pair0.mu, (paths, 1))
        lam_b, mu_b = lam_a.copy(), mu_a.copy()
        diagnostics = None

    report = ExperimentReport(
        name="path_equivalence",
        params={
            "n": n,
            "beta": beta,
            "t": t,
            "dt": dt,
            "paths": paths,
            "decoupled": decoupled,
            "covariation_samples": covariation_samples,
            "covariation_dt": covariation_dt,
        },
    )
    names = [f"lambda_{i + 1}" for i in range(n)]
    names += [f"mu_{j + 1}" for j in range(n - 1)]
    columns = [
        (lam_a[:, i], lam_b[:, i]) for i in range(n)
    ] + [(mu_a[:, j], mu_b[:, j]) for j in range(n - 1)]
    names += ["sum_lambda", "sum_lambda_sq", "sum_mu"]
    columns += [
        (lam_a.sum(axis=1), lam_b.sum(axis=1)),
        ((lam_a**2).sum(axis=1), (lam_b**2).sum(axis=1)),
        (mu_a.sum(axis=1), mu_b.sum(axis=1)),
    ]
    for name, (xs, ys) in zip(names, columns):
        stat, p = ks_two_sample(xs, ys)
        report.add_test(f"ks:{name}", stat, p, p > MARGINAL_ALPHA)

    # Instantaneous cross-covariation at the start state (closed form vs MC).
    state0 = CoupledState(pair0.lam, pair0.mu)
    emp, se = empirical_covariation(
        state0,
        covariation_dt,
        beta,
        covariation_samples,
        seed=_derived_seed(seed, _ROLE_COVARIATION),
        decoupled=decoupled,
    )
    analytic = quadratic_variation_analytic(state0, beta)
    cross = np.s_[:n, n:]
    z = (emp[cross] - analytic[cross]) / se[cross]
    max_z = float(np.max(np.abs(z)))
    denom = np.maximum(np.abs(analytic[cross]), 1e-12)
    report.add_statistic(
        "cross_covariation_max_rel_err",
        float(np.max(np.abs(emp[cross] - analytic[cross]) / denom)),
    )
    p_cov = min(1.0, z.size * _normal_two_sided_p(max_z))
    report.add_test("cross_covariation_max_z", max_z, p_cov, max_z <= SIGMA_BAND)

    if diagnostics is not None:
        for key, value in diagnostics.as_dict().items():
            report.add_statistic(f"diagnostics_{key}", value)
    report.finalize_provenance(seed=seed, workers=workers)
    return report


# ---------------------------------------------------------------------------
# experiment: stationarity of the invariant ensemble
# ---------------------------------------------------------------------------


def _pair_functionals(lam: np.ndarray, mu: np.ndarray) -> dict[str, np.ndarray]:
    inter = np.empty((lam.shape[0], 2 * lam.shape[1] - 1))
    inter[:, 0::2] = lam
    inter[:, 1::2] = mu
    return {
        "sum_lambda": lam.sum(axis=1),
        "sum_mu": mu.sum(axis=1),
        "sum_lambda_sq": (lam**2).sum(axis=1),
        "sum_mu_sq": (mu**2).sum(axis=1),
        "min_gap": np.diff(inter, axis=1).min(axis=1),
    }


def stationarity_experiment(
    n: int,
    beta: float,
    t: float,
    paths: int,
    seed: int = 0,
    *,
    dt: float = 1e-3,
    workers: int = 1,
    shift: float = 0.0,
) -> ExperimentReport:
    """Evolve invariant-ensemble eigen-data and test that moments stay put.

    Each path starts from the (spectrum, minor spectrum) of an independent
    Gaussian-ensemble draw, optionally displaced by ``shift`` (a probe for
    out-of-equilibrium starts), and runs the coupled SDE to time ``t``.
    For each functional in {sum(lambda), sum(mu), sum(lambda^2), sum(mu^2),
    min gap} the paired difference against the *unshifted* reference draw
    must vanish within 3 sigma.
    """

    if paths < 2:
        raise InvalidInputError("need at least two paths")
    if t < 0:
        raise InvalidInputError("t must be nonnegative")
    ens_beta = int(round(beta))
    if ens_beta not in (1, 2, 4) or ens_beta != beta:
        raise InvalidInputError("invariant ensemble draw needs beta in {1, 2, 4}")
    rng = stream(_derived_seed(seed, _ROLE_ENSEMBLE))
    comps = sample_gaussian_components(n, ens_beta, rng, (paths,))
    lam_ref = batched_eigenvalues(comps, ens_beta)
    mu_ref = batched_eigenvalues(comps[:, : n - 1, : n - 1, :], ens_beta)
    reference = _pair_functionals(lam_ref, mu_ref)

    if t > 0:
        res = coupled_paths(
            lam_ref + shift,
            mu_ref + shift,
            t,
            dt,
            beta,
            paths,
            seed=_derived_seed(seed, _ROLE_EVOLVE),
            workers=workers,
        )
        evolved = _pair_functionals(res.lam, res.mu)
        diagnostics = res.diagnostics
    else:
        evolved = _pair_functionals(lam_ref + shift, mu_ref + shift)
        diagnostics = None

    report = ExperimentReport(
        name="stationarity",
        params={
            "n": n,
            "beta": beta,
            "t": t,
            "dt": dt,
            "paths": paths,
            "shift": shift,
        },
    )
    for name, ref_values in reference.items():
        diff = evolved[name] - ref_values
        mean = float(diff.mean())
        se = float(diff.std(ddof=1) / math.sqrt(paths))
        if se == 0.0:
            z = 0.0 if mean == 0.0 else math.inf
        else:
            z = mean / se
        report.add_statistic(f"before_{name}", float(ref_values.mean()))
        report.add_statistic(f"after_{name}", float(evolved[name].mean()), se)
        report.add_test(
            f"moment_drift:{name}", z, _normal_two_sided_p(z), abs(z) <= SIGMA_BAND
        )
    if diagnostics is not None:
        for key, value in diagnostics.as_dict().items():
            report.add_statistic(f"diagnostics_{key}", value)
    report.finalize_provenance(seed=seed, workers=workers)
    return report


# ---------------------------------------------------------------------------
# experiment: the three-spectra non-Markovianity witness
# ---------------------------------------------------------------------------


def _batched_phi(z: np.ndarray) -> np.ndarray:
    """witness_phi over a stack of complex 3 x 3 matrices."""

    return z[:, 0, 0].real * np.linalg.det(z).real


def _mc_drift_accumulate(totals: dict, values: np.ndarray) -> None:
    totals["count"] += values.size
    totals["sum"] += float(values.sum())
    totals["sumsq"] += float((values**2).sum())


def _mc_drift_finish(totals: dict) -> tuple[float, float]:
    count = totals["count"]
    mean = totals["sum"] / count
    var = max(totals["sumsq"] - count * mean * mean, 0.0) / (count - 1)
    return mean, math.sqrt(var / count)


def nonmarkov_witness(
    triple: TripleSpectra,
    s1: float,
    s2: float,
    h: float = 1e-3,
    paths: int = 100_000,
    seed: int = 0,
    *,
    branch: int = 1,
    eta1: float = 0.0,
    eta2: float = 0.0,
) -> ExperimentReport:
    """Drift gap of phi between two preparations with equal (lambda, mu, nu).

    Reconstructs B(s1) and B(s2) on the same branch, then estimates the
    generator drift (E[phi(B_h)] - phi(B))/h by exact one-step Monte Carlo
    with common random numbers and antithetic pairs across the two
    preparations.  The analytic gap is
    (2/beta) [det(minor_11 B(s1)) - det(minor_11 B(s2))] — the only term of
    the generator not determined by the spectral data.  Passes when the MC
    gap matches the analytic gap within 3 sigma *and* the analytic gap is
    nonzero (so the test run genuinely separates the preparations); the
    s1 = s2 null run reports a zero gap and, by design, does not pass.
    """

    if triple.n != 3:
        raise InvalidInputError("the explicit witness is built at n = 3")
    if h <= 0:
        raise InvalidInputError("step h must be positive")
    if paths < 2:
        raise InvalidInputError("need at least two paths")
    beta = 2
    mats = [
        reconstruct_triple_n3(triple, AngleGauge(s, eta1, eta2), branch)
        for s in (s1, s2)
    ]
    z_mats = [m.components[..., 0] + 1j * m.components[..., 1] for m in mats]
    phi0 = [witness_phi(m) for m in mats]
    delta = (2.0 / beta) * (det_minor_11(mats[0]) - det_minor_11(mats[1]))

    c = math.exp(-h)
    noise_scale = math.sqrt(1.0 - c * c)
    totals = [
        {"count": 0, "sum": 0.0, "sumsq": 0.0} for _ in range(3)
    ]  # drift at B(s1), drift at B(s2), gap
    child = _derived_seed(seed, _ROLE_WITNESS)
    for block, start in enumerate(range(0, paths, _MC_CHUNK)):
        count = min(_MC_CHUNK, paths - start)
        rng = stream(child, block)
        comps = sample_gaussian_components(3, beta, rng, (count,))
        g = comps[..., 0] + 1j * comps[..., 1]
        drifts = []
        for z0, base in zip(z_mats, phi0):
            plus = _batched_phi(c * z0 + noise_scale * g)
            minus = _batched_phi(c * z0 - noise_scale * g)
            drifts.append((0.5 * (plus + minus) - base) / h)
        _mc_drift_accumulate(totals[0], drifts[0])
        _mc_drift_accumulate(totals[1], drifts[1])
        _mc_drift_accumulate(totals[2], drifts[0] - drifts[1])

    (d1, se1), (d2, se2), (gap, se_gap) = map(_mc_drift_finish, totals)
    report = ExperimentReport(
        name="nonmarkov_witness",
        params={
            "s1": float(s1),
            "s2": float(s2),
            "h": h,
            "paths": paths,
            "branch": branch,
            "eta1": eta1,
            "eta2": eta2,
            "triple": {
                "lambda": triple.lam.tolist(),
                "mu": triple.mu.tolist(),
                "nu": triple.nu.tolist(),
            },
        },
    )
    report.add_statistic("delta_analytic", delta)
    report.add_statistic("mc_gap", gap, se_gap)
    report.add_statistic("mc_drift_1", d1, se1)
    report.add_statistic("mc_drift_2", d2, se2)
    if se_gap > 0:
        separation = abs(delta) / se_gap
    else:
        separation = 0.0 if delta == 0.0 else math.inf
    report.add_statistic("delta_over_sigma", separation)

    z_gap = (gap - delta) / se_gap if se_gap > 0 else 0.0
    report.add_test(
        "gap_matches_analytic",
        z_gap,
        _normal_two_sided_p(z_gap),
        abs(z_gap) <= SIGMA_BAND,
    )
    report.add_test(
        "gap_separates_preparations",
        abs(delta),
        0.0 if delta != 0.0 else 1.0,
        delta != 0.0,
    )

    gen1 = apply_dyson_generator(witness_phi, mats[0])
    z_gen = (d1 - gen1) / se1 if se1 > 0 else 0.0
    report.add_statistic("generator_fd_1", gen1)
    # Reported as a consistency diagnostic, kept out of the verdict:
    # pass = (gap matches analytic) and (preparations separated).
    report.tests.append(
        TestOutcome("generator_crosscheck", z_gen, _normal_two_sided_p(z_gen))
    )
    report.passed = bool(abs(z_gap) <= SIGMA_BAND and delta != 0.0)
    report.finalize_provenance(seed=seed)
    return report
