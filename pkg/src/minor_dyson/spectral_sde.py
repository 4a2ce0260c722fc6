"""Euler--Maruyama engines for the spectral form of the matrix process.

Two diffusions are simulated here, both driven by explicit scalar Brownian
increments so that their joint law can be compared against the matrix route:

* the eigenvalue process of the full matrix (``dyson_*``),

      d lam_i = (-lam_i + sum_{j != i} 1/(lam_i - lam_j)) dt
                + sqrt(2/beta) db_ii ,

* the coupled system (lam, mu) of the eigenvalues of the matrix together
  with the eigenvalues of its leading principal minor (``coupled_*``),

      d mu_g  = (-mu_g + sum_{e != g} 1/(mu_g - mu_e)) dt
                + sqrt(2/beta) db_gg ,
      d lam_a = (-lam_a + sum_{e != a} 1/(lam_a - lam_e)) dt
                + sqrt(2/beta) * K_a * [ sum_{i<j<=n-1} sqrt(2) r_i r_j
                                           dbt_ij / ((lam_a-mu_i)(lam_a-mu_j))
                                       + sum_{i<=n-1} r_i^2 db_ii
                                           / (lam_a-mu_i)^2
                                       + sum_{i<=n-1} sqrt(2) r_i dbt_in
                                           / (lam_a-mu_i)
                                       + db_nn ] ,

  with K_a = P_{n-1}(lam_a) / P'_n(lam_a) and r_i^2 the squared border
  norms reconstructed from the two spectra.  The diagonal increments db_gg
  are *shared* between the two lines; the tilde increments dbt are
  independent standard Brownian motions.  The resulting cross variation is

      d lam_a d mu_g / dt = (2/beta) K_a r_g^2 / (lam_a - mu_g)^2 .

Steps that break the strict ordering (or the strict interlacing, for the
coupled system) are rejected and retried with halved substeps down to
``dt / 2**MAX_HALVINGS``; at the bottom the noise is resampled a bounded
number of times before ``StepFailureError`` is raised with a snapshot of
the offending state.  Accepted steps therefore never violate interlacing.

All batched drivers draw one dedicated counter-based stream per path, so
results are reproducible for a fixed (seed, path count) regardless of
chunking or worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import multiprocessing
import numpy as np

from .errors import InterlacingError, InvalidInputError, StepFailureError
from ._rng import path_stream, tree_reduce

__all__ = [
    "MAX_HALVINGS",
    "RESAMPLE_LIMIT",
    "CoupledState",
    "NoiseBundle",
    "StepDiagnostics",
    "PathResult",
    "tilde_pairs",
    "dyson_drift",
    "dyson_step",
    "coupled_step",
    "dyson_paths",
    "coupled_paths",
    "noise_coefficients",
    "quadratic_variation_analytic",
    "empirical_covariation",
    "gap_drift",
    "collapsed_lower_gap_drift",
    "collapsed_upper_gap_drift",
    "regularize_spectrum",
    "regularize_pair",
    "default_dt",
]

logger = logging.getLogger(__name__)

#: Maximum number of recursive step halvings before resampling kicks in.
MAX_HALVINGS = 10
#: Number of fresh noise draws attempted at the finest substep size.
RESAMPLE_LIMIT = 100

# Paths per vectorised block in the batched drivers.  Fixed so that the
# chunk layout (and therefore every floating-point reduction) does not
# depend on the worker count.
_CHUNK = 1024
# Time steps per pre-drawn noise segment inside one chunk.
_SEGMENT = 256

_DIAMETER_FLOOR = 1.0


def _diameter(*arrays: np.ndarray) -> float:
    lo = min(float(a.min()) for a in arrays if a.size)
    hi = max(float(a.max()) for a in arrays if a.size)
    return max(hi - lo, _DIAMETER_FLOOR)


def tilde_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, j), i < j, of the tilde Brownian motions.

    Pairs are ordered lexicographically; entries with ``j == n - 1`` are the
    border channels dbt_{i n} and the remaining ones couple two minor
    eigenvalues.  Indices are 0-based.
    """

    return np.triu_indices(n, 1)


@dataclass(frozen=True, eq=False)
class CoupledState:
    """Strictly interlaced pair of spectra evolved by the coupled SDE."""

    lam: np.ndarray
    mu: np.ndarray

    def __init__(self, lam, mu) -> None:
        lam = np.asarray(lam, dtype=float).reshape(-1)
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if lam.size < 2 or mu.size != lam.size - 1:
            raise InvalidInputError(
                "need n >= 2 outer values and exactly n - 1 inner values, "
                f"got {lam.size} and {mu.size}"
            )
        z = _interleave(lam[None, :], mu[None, :])[0]
        if not np.all(np.diff(z) > 0.0):
            raise InterlacingError(
                "spectra must satisfy lam_1 < mu_1 < lam_2 < ... strictly"
            )
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    @property
    def n(self) -> int:
        return self.lam.size

    def min_gap(self) -> float:
        z = _interleave(self.lam[None, :], self.mu[None, :])[0]
        return float(np.diff(z).min())

    def as_vector(self) -> np.ndarray:
        """Coordinates in the fixed order (lam_1..lam_n, mu_1..mu_{n-1})."""

        return np.concatenate([self.lam, self.mu])


@dataclass(frozen=True, eq=False)
class NoiseBundle:
    """Brownian increments for one step: N(0, dt) scalars.

    ``diag`` holds db_11 .. db_nn; ``tilde`` holds the dbt_ij in the order
    of :func:`tilde_pairs`.  ``mu_diag`` is only present in decoupled mode,
    where the minor line is driven by its own independent diagonal noise
    (a deliberately wrong model used as a negative control).
    """

    diag: np.ndarray
    tilde: np.ndarray
    mu_diag: np.ndarray | None = None

    @classmethod
    def sample(cls, n, dt, rng, decoupled: bool = False) -> "NoiseBundle":
        scale = np.sqrt(dt)
        diag = scale * rng.standard_normal(n)
        tilde = scale * rng.standard_normal(n * (n - 1) // 2)
        mu_diag = scale * rng.standard_normal(n - 1) if decoupled else None
        return cls(diag=diag, tilde=tilde, mu_diag=mu_diag)


@dataclass
class StepDiagnostics:
    """Counters describing how hard the step control had to work."""

    macro_steps: int = 0
    rejected: int = 0
    halvings: int = 0
    resamples: int = 0
    fallback_paths: int = 0
    violations_accepted: int = 0

    def merge(self, other: "StepDiagnostics") -> "StepDiagnostics":
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self

    def as_dict(self) -> dict:
        return {name: int(getattr(self, name)) for name in self.__dataclass_fields__}


@dataclass
class PathResult:
    """Endpoints (and optionally recorded trajectories) of a batched run."""

    lam: np.ndarray
    mu: np.ndarray | None
    diagnostics: StepDiagnostics
    t_grid: np.ndarray | None = None
    lam_path: np.ndarray | None = None
    mu_path: np.ndarray | None = None


# ----------------------------------------------------------------------
# drift / noise coefficients (batched over the leading axis)
# ----------------------------------------------------------------------


def _offdiag_inverse_sum(x: np.ndarray) -> np.ndarray:
    """sum_{j != i} 1 / (x_i - x_j), batched over the leading axis."""

    d = x[:, :, None] - x[:, None, :]
    np.einsum("bii->bi", d)[...] = np.inf
    return (1.0 / d).sum(axis=2)


def _dyson_drift_block(x: np.ndarray) -> np.ndarray:
    return -x + _offdiag_inverse_sum(x)


def dyson_drift(lam: np.ndarray) -> np.ndarray:
    """Drift -lam_i + sum_{j != i} 1/(lam_i - lam_j) of the spectrum SDE."""

    lam = np.asarray(lam, dtype=float).reshape(-1)
    return _dyson_drift_block(lam[None, :])[0]


def _masked_offdiag_prod(d: np.ndarray) -> np.ndarray:
    d = d.copy()
    np.einsum("bii->bi", d)[...] = 1.0
    return d.prod(axis=2)


def _coupled_coefficients(lam: np.ndarray, mu: np.ndarray, beta: float):
    """Drifts plus the linear map from noise increments to d(lam).

    Returns ``(drift_lam, drift_mu, a_diag, a_tilde)`` for a block of
    states, where the noise part of the outer increment is

        sqrt(2/beta) * (a_diag @ diag_noise + a_tilde @ tilde_noise).

    The sqrt(2/beta) prefactor is *not* folded into the coefficient arrays
    so that they can double as the bracket entries in covariation checks.
    """

    b, n = lam.shape
    dlm = lam[:, :, None] - mu[:, None, :]  # (b, n, n-1)
    dml = -np.swapaxes(dlm, 1, 2)  # mu_k - lam_a

    p_lam = dlm.prod(axis=2)  # P_{n-1}(lam_a)
    pp_lam = _masked_offdiag_prod(lam[:, :, None] - lam[:, None, :])
    p_mu = dml.prod(axis=2)  # P_n(mu_k)
    pp_mu = _masked_offdiag_prod(mu[:, :, None] - mu[:, None, :])

    kappa = p_lam / pp_lam  # K_a
    r2 = np.clip(-p_mu / pp_mu, 0.0, None)  # r_k^2
    r = np.sqrt(r2)

    inv = 1.0 / dlm  # 1 / (lam_a - mu_i)

    # Extended arrays: index n-1 plays the role of the corner channel with
    # r_n := 1 and no 1/(lam - mu) factor.
    rext = np.concatenate([r, np.ones((b, 1))], axis=1)
    r2ext = np.concatenate([r2, np.ones((b, 1))], axis=1)
    invext = np.concatenate([inv, np.ones((b, n, 1))], axis=2)
    inv2ext = np.concatenate([inv * inv, np.ones((b, n, 1))], axis=2)

    pi, pj = tilde_pairs(n)
    a_diag = kappa[:, :, None] * r2ext[:, None, :] * inv2ext
    a_tilde = (
        np.sqrt(2.0)
        * kappa[:, :, None]
        * (rext[:, None, pi] * invext[:, :, pi])
        * (rext[:, None, pj] * invext[:, :, pj])
    )

    drift_lam = _dyson_drift_block(lam)
    drift_mu = _dyson_drift_block(mu)
    return drift_lam, drift_mu, a_diag, a_tilde


def noise_coefficients(state: CoupledState, beta: float):
    """Noise-to-increment map of the outer line at one state.

    Returns ``(a_diag, a_tilde)`` with shapes (n, n) and (n, n(n-1)/2):
    the Euler increment of lam is

        drift * dt + sqrt(2/beta) * (a_diag @ ddiag + a_tilde @ dtilde).
    """

    _, _, a_diag, a_tilde = _coupled_coefficients(
        state.lam[None, :], state.mu[None, :], beta
    )
    return a_diag[0], a_tilde[0]


# ----------------------------------------------------------------------
# proposals and validity
# ----------------------------------------------------------------------


def _interleave(lam: np.ndarray, mu: np.ndarray) -> np.ndarray:
    b, n = lam.shape
    z = np.empty((b, 2 * n - 1))
    z[:, 0::2] = lam
    z[:, 1::2] = mu
    return z


def _strictly_increasing(x: np.ndarray) -> np.ndarray:
    return np.all(np.diff(x, axis=1) > 0.0, axis=1) & np.all(
        np.isfinite(x), axis=1
    )


def _dyson_proposal(lam: np.ndarray, dt: float, beta: float, dw: np.ndarray):
    return lam + _dyson_drift_block(lam) * dt + np.sqrt(2.0 / beta) * dw


def _coupled_proposal(
    lam: np.ndarray,
    mu: np.ndarray,
    dt: float,
    beta: float,
    w_diag: np.ndarray,
    w_tilde: np.ndarray,
    w_mu: np.ndarray | None,
):
    n = lam.shape[1]
    drift_lam, _, a_diag, a_tilde = _coupled_coefficients(lam, mu, beta)
    amp = np.sqrt(2.0 / beta)
    dlam = drift_lam * dt + amp * (
        np.einsum("bnc,bc->bn", a_diag, w_diag)
        + np.einsum("bnp,bp->bn", a_tilde, w_tilde)
    )
    mu_noise = w_mu if w_mu is not None else w_diag[:, : n - 1]
    new_mu = _dyson_proposal(mu, dt, beta, mu_noise)
    return lam + dlam, new_mu


# ----------------------------------------------------------------------
# single-path adaptive steps
# ----------------------------------------------------------------------


def _advance_dyson(lam, dt, beta, rng, diag, depth=0):
    scale = np.sqrt(dt)
    prop = _dyson_proposal(lam[None, :], dt, beta, scale * rng.standard_normal(lam.size)[None, :])
    if _strictly_increasing(prop)[0]:
        return prop[0]
    diag.rejected += 1
    if depth < MAX_HALVINGS:
        diag.halvings += 1
        half = 0.5 * dt
        mid = _advance_dyson(lam, half, beta, rng, diag, depth + 1)
        return _advance_dyson(mid, half, beta, rng, diag, depth + 1)
    for _ in range(RESAMPLE_LIMIT):
        diag.resamples += 1
        prop = _dyson_proposal(
            lam[None, :], dt, beta, scale * rng.standard_normal(lam.size)[None, :]
        )
        if _strictly_increasing(prop)[0]:
            return prop[0]
    raise StepFailureError(
        "ordering could not be preserved at the minimum substep size",
        state={"lam": lam.copy()},
        dt=dt,
    )


def dyson_step(lam, dt, beta, rng, noise=None, diagnostics=None):
    """One Euler--Maruyama step of the eigenvalue SDE.

    ``noise`` may carry the Brownian increments (N(0, dt) scalars) for the
    proposal; halving and resampling always draw fresh noise from ``rng``.
    """

    lam = np.asarray(lam, dtype=float).reshape(-1)
    if dt <= 0.0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    if rng is None and noise is None:
        raise InvalidInputError("need a generator or explicit noise")
    diag = diagnostics if diagnostics is not None else StepDiagnostics()
    diag.macro_steps += 1
    if noise is not None:
        dw = np.asarray(noise, dtype=float).reshape(-1)
        prop = _dyson_proposal(lam[None, :], dt, beta, dw[None, :])
        if _strictly_increasing(prop)[0]:
            return prop[0]
        diag.rejected += 1
        if rng is None:
            raise StepFailureError(
                "explicit noise rejected and no generator available for retries",
                state={"lam": lam.copy()},
                dt=dt,
            )
    return _advance_dyson(lam, dt, beta, rng, diag)


def _advance_coupled(lam, mu, dt, beta, rng, diag, decoupled, depth=0):
    bundle = NoiseBundle.sample(lam.size, dt, rng, decoupled=decoupled)
    prop_lam, prop_mu = _coupled_proposal(
        lam[None, :],
        mu[None, :],
        dt,
        beta,
        bundle.diag[None, :],
        bundle.tilde[None, :],
        None if bundle.mu_diag is None else bundle.mu_diag[None, :],
    )
    if _strictly_increasing(_interleave(prop_lam, prop_mu))[0]:
        return prop_lam[0], prop_mu[0]
    diag.rejected += 1
    if depth < MAX_HALVINGS:
        diag.halvings += 1
        half = 0.5 * dt
        mid_lam, mid_mu = _advance_coupled(
            lam, mu, half, beta, rng, diag, decoupled, depth + 1
        )
        return _advance_coupled(
            mid_lam, mid_mu, half, beta, rng, diag, decoupled, depth + 1
        )
    for _ in range(RESAMPLE_LIMIT):
        diag.resamples += 1
        bundle = NoiseBundle.sample(lam.size, dt, rng, decoupled=decoupled)
        prop_lam, prop_mu = _coupled_proposal(
            lam[None, :],
            mu[None, :],
            dt,
            beta,
            bundle.diag[None, :],
            bundle.tilde[None, :],
            None if bundle.mu_diag is None else bundle.mu_diag[None, :],
        )
        if _strictly_increasing(_interleave(prop_lam, prop_mu))[0]:
            return prop_lam[0], prop_mu[0]
    raise StepFailureError(
        "interlacing could not be preserved at the minimum substep size",
        state={"lam": lam.copy(), "mu": mu.copy()},
        dt=dt,
    )


def coupled_step(state, dt, beta, rng, noise=None, diagnostics=None, decoupled=False):
    """One Euler--Maruyama step of the coupled (lam, mu) system."""

    if dt <= 0.0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    if rng is None and noise is None:
        raise InvalidInputError("need a generator or explicit noise")
    diag = diagnostics if diagnostics is not None else StepDiagnostics()
    diag.macro_steps += 1
    lam, mu = state.lam, state.mu
    if noise is not None:
        w_mu = noise.mu_diag if decoupled else None
        if decoupled and w_mu is None:
            raise InvalidInputError("decoupled step needs noise.mu_diag")
        prop_lam, prop_mu = _coupled_proposal(
            lam[None, :],
            mu[None, :],
            dt,
            beta,
            noise.diag[None, :],
            noise.tilde[None, :],
            None if w_mu is None else w_mu[None, :],
        )
        if _strictly_increasing(_interleave(prop_lam, prop_mu))[0]:
            return CoupledState(prop_lam[0], prop_mu[0])
        diag.rejected += 1
        if rng is None:
            raise StepFailureError(
                "explicit noise rejected and no generator available for retries",
                state={"lam": lam.copy(), "mu": mu.copy()},
                dt=dt,
            )
    new_lam, new_mu = _advance_coupled(lam, mu, dt, beta, rng, diag, decoupled)
    return CoupledState(new_lam, new_mu)


# ----------------------------------------------------------------------
# batched drivers
# ----------------------------------------------------------------------


def _step_sizes(t: float, dt: float) -> np.ndarray:
    if t <= 0.0 or dt <= 0.0:
        raise InvalidInputError("t and dt must be positive")
    steps = int(np.floor(t / dt + 1e-12))
    sizes = [dt] * steps
    rem = t - steps * dt
    if rem > 1e-12 * max(dt, 1.0):
        sizes.append(rem)
    return np.asarray(sizes)


def _record_indices(n_steps: int, stride: int | None) -> np.ndarray:
    if stride is None:
        return np.empty(0, dtype=int)
    if stride < 1:
        raise InvalidInputError(f"record_stride must be >= 1, got {stride}")
    marks = list(range(stride - 1, n_steps, stride))
    if not marks or marks[-1] != n_steps - 1:
        marks.append(n_steps - 1)
    return np.asarray(marks, dtype=int)


def _dyson_chunk(args):
    (lam0, sizes, beta, seed, start, count, record) = args
    n = lam0.shape[-1]
    gens = [path_stream(seed, start + p) for p in range(count)]
    lam = np.broadcast_to(lam0, (count, n)).copy()
    diag = StepDiagnostics()
    rec = []
    n_steps = sizes.size
    pos = 0
    while pos < n_steps:
        seg = min(_SEGMENT, n_steps - pos)
        noise = np.stack([g.standard_normal((seg, n)) for g in gens])
        for k in range(seg):
            dt = sizes[pos + k]
            diag.macro_steps += 1
            prop = _dyson_proposal(lam, dt, beta, np.sqrt(dt) * noise[:, k, :])
            ok = _strictly_increasing(prop)
            if not ok.all():
                for b in np.flatnonzero(~ok):
                    diag.fallback_paths += 1
                    diag.rejected += 1
                    prop[b] = _advance_dyson(lam[b], dt, beta, gens[b], diag)
            lam = prop
            if (pos + k) in record:
                rec.append(lam.copy())
        pos += seg
    traj = np.stack(rec, axis=1) if rec else None
    return lam, diag, traj


def _coupled_chunk(args):
    (lam0, mu0, sizes, beta, seed, start, count, record, decoupled) = args
    n = lam0.shape[-1]
    m = n + n * (n - 1) // 2 + (n - 1 if decoupled else 0)
    gens = [path_stream(seed, start + p) for p in range(count)]
    lam = np.broadcast_to(lam0, (count, n)).copy()
    mu = np.broadcast_to(mu0, (count, n - 1)).copy()
    diag = StepDiagnostics()
    rec_lam, rec_mu = [], []
    n_steps = sizes.size
    npairs = n * (n - 1) // 2
    pos = 0
    while pos < n_steps:
        seg = min(_SEGMENT, n_steps - pos)
        noise = np.stack([g.standard_normal((seg, m)) for g in gens])
        for k in range(seg):
            dt = sizes[pos + k]
            diag.macro_steps += 1
            w = np.sqrt(dt) * noise[:, k, :]
            w_diag = w[:, :n]
            w_tilde = w[:, n : n + npairs]
            w_mu = w[:, n + npairs :] if decoupled else None
            prop_lam, prop_mu = _coupled_proposal(
                lam, mu, dt, beta, w_diag, w_tilde, w_mu
            )
            ok = _strictly_increasing(_interleave(prop_lam, prop_mu))
            if not ok.all():
                for b in np.flatnonzero(~ok):
                    diag.fallback_paths += 1
                    diag.rejected += 1
                    prop_lam[b], prop_mu[b] = _advance_coupled(
                        lam[b], mu[b], dt, beta, gens[b], diag, decoupled
                    )
            lam, mu = prop_lam, prop_mu
            if (pos + k) in record:
                rec_lam.append(lam.copy())
                rec_mu.append(mu.copy())
        pos += seg
    traj_lam = np.stack(rec_lam, axis=1) if rec_lam else None
    traj_mu = np.stack(rec_mu, axis=1) if rec_mu else None
    return lam, mu, diag, traj_lam, traj_mu


def _run_jobs(worker, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [worker(job) for job in jobs]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(worker, jobs))


def _prepare_initial_spectra(lam0, paths):
    """Validate/regularize a shared (n,) or per-path (paths, n) start array."""

    lam0 = np.asarray(lam0, dtype=float)
    if lam0.ndim <= 1:
        return regularize_spectrum(lam0.reshape(-1))
    if lam0.ndim != 2 or lam0.shape[0] != paths:
        raise InvalidInputError(
            f"per-path starts must have shape (paths, n), got {lam0.shape}"
        )
    bad = ~(np.all(np.diff(lam0, axis=1) > 0.0, axis=1) & np.all(np.isfinite(lam0), axis=1))
    if not bad.any():
        return lam0
    lam0 = lam0.copy()
    for b in np.flatnonzero(bad):
        lam0[b] = regularize_spectrum(lam0[b])
    return lam0


def _prepare_initial_pairs(lam0, mu0, paths):
    """Validate/regularize shared or per-path interlaced starting pairs."""

    lam0 = np.asarray(lam0, dtype=float)
    mu0 = np.asarray(mu0, dtype=float)
    if lam0.ndim <= 1 and mu0.ndim <= 1:
        return regularize_pair(lam0.reshape(-1), mu0.reshape(-1))
    if (
        lam0.ndim != 2
        or mu0.ndim != 2
        or lam0.shape[0] != paths
        or mu0.shape[0] != paths
        or mu0.shape[1] != lam0.shape[1] - 1
    ):
        raise InvalidInputError(
            "per-path starts must have shapes (paths, n) and (paths, n-1), "
            f"got {lam0.shape} and {mu0.shape}"
        )
    z = _interleave(lam0, mu0)
    bad = ~(np.all(np.diff(z, axis=1) > 0.0, axis=1) & np.all(np.isfinite(z), axis=1))
    if not bad.any():
        return lam0, mu0
    lam0, mu0 = lam0.copy(), mu0.copy()
    for b in np.flatnonzero(bad):
        lam0[b], mu0[b] = regularize_pair(lam0[b], mu0[b])
    return lam0, mu0


def _chunk_start(arr, start, count):
    """Slice a per-path start array for one chunk; shared starts pass through."""

    return arr if arr.ndim == 1 else arr[start : start + count]


def dyson_paths(lam0, t, dt, beta, paths, seed=0, workers=1, record_stride=None):
    """Evolve ``paths`` independent spectra to time ``t``; endpoints + diagnostics.

    ``lam0`` is either one spectrum shared by every path or a per-path stack
    of shape (paths, n).
    """

    if paths < 1:
        raise InvalidInputError(f"paths must be >= 1, got {paths}")
    lam0 = _prepare_initial_spectra(lam0, paths)
    sizes = _step_sizes(t, dt)
    record = set(_record_indices(sizes.size, record_stride).tolist())
    jobs = [
        (
            _chunk_start(lam0, start, _CHUNK),
            sizes,
            beta,
            seed,
            start,
            min(_CHUNK, paths - start),
            record,
        )
        for start in range(0, paths, _CHUNK)
    ]
    parts = _run_jobs(_dyson_chunk, jobs, workers)
    diag = StepDiagnostics()
    for _, d, _ in parts:
        diag.merge(d)
    diag.macro_steps = sizes.size  # per-path grid, not per-chunk tally
    out = PathResult(
        lam=np.concatenate([p[0] for p in parts]),
        mu=None,
        diagnostics=diag,
    )
    if record_stride is not None:
        marks = _record_indices(sizes.size, record_stride)
        out.t_grid = np.cumsum(sizes)[marks]
        out.lam_path = np.concatenate([p[2] for p in parts])
    return out


def coupled_paths(
    lam0,
    mu0,
    t,
    dt,
    beta,
    paths,
    seed=0,
    workers=1,
    record_stride=None,
    decoupled=False,
):
    """Evolve the coupled system for many paths; endpoints + diagnostics.

    ``lam0``/``mu0`` are either one interlaced pair shared by every path or
    per-path stacks of shapes (paths, n) and (paths, n-1).
    """

    if paths < 1:
        raise InvalidInputError(f"paths must be >= 1, got {paths}")
    lam0, mu0 = _prepare_initial_pairs(lam0, mu0, paths)
    sizes = _step_sizes(t, dt)
    record = set(_record_indices(sizes.size, record_stride).tolist())
    jobs = [
        (
            _chunk_start(lam0, start, _CHUNK),
            _chunk_start(mu0, start, _CHUNK),
            sizes,
            beta,
            seed,
            start,
            min(_CHUNK, paths - start),
            record,
            decoupled,
        )
        for start in range(0, paths, _CHUNK)
    ]
    parts = _run_jobs(_coupled_chunk, jobs, workers)
    diag = StepDiagnostics()
    for part in parts:
        diag.merge(part[2])
    diag.macro_steps = sizes.size
    out = PathResult(
        lam=np.concatenate([p[0] for p in parts]),
        mu=np.concatenate([p[1] for p in parts]),
        diagnostics=diag,
    )
    if record_stride is not None:
        marks = _record_indices(sizes.size, record_stride)
        out.t_grid = np.cumsum(sizes)[marks]
        out.lam_path = np.concatenate([p[3] for p in parts])
        out.mu_path = np.concatenate([p[4] for p in parts])
    return out


# ----------------------------------------------------------------------
# quadratic variation
# ----------------------------------------------------------------------


def quadratic_variation_analytic(state: CoupledState, beta: float) -> np.ndarray:
    """Instantaneous covariation matrix of (lam, mu), coordinates as in
    :meth:`CoupledState.as_vector`.

    The diagonal blocks are (2/beta) I; the cross block is
    (2/beta) K_a r_g^2 / (lam_a - mu_g)^2.
    """

    n = state.n
    lam, mu = state.lam[None, :], state.mu[None, :]
    _, _, a_diag, _ = _coupled_coefficients(lam, mu, beta)
    # a_diag[0, :, g] = K_a r_g^2 / (lam_a - mu_g)^2 for g < n - 1.
    cross = a_diag[0, :, : n - 1]
    c = np.zeros((2 * n - 1, 2 * n - 1))
    np.fill_diagonal(c, 1.0)
    c[:n, n:] = cross
    c[n:, :n] = cross.T
    return (2.0 / beta) * c


def empirical_covariation(
    state: CoupledState,
    dt: float,
    beta: float,
    samples: int,
    seed: int = 0,
    decoupled: bool = False,
):
    """Monte Carlo covariation mean(dx_i dx_j)/dt of one Euler step.

    Draws ``samples`` independent one-step increments from ``state`` (one
    stream per increment) and returns ``(estimate, stderr)`` matrices over
    the (2n-1)-dimensional coordinate vector.
    """

    n = state.n
    npairs = n * (n - 1) // 2
    m = n + npairs + (n - 1 if decoupled else 0)
    lam0, mu0 = state.lam, state.mu

    def one_chunk(start: int, count: int):
        w = np.empty((count, m))
        for p in range(count):
            w[p] = path_stream(seed, start + p).standard_normal(m)
        w *= np.sqrt(dt)
        lam = np.broadcast_to(lam0, (count, n))
        mu = np.broadcast_to(mu0, (count, n - 1))
        w_mu = w[:, n + npairs :] if decoupled else None
        prop_lam, prop_mu = _coupled_proposal(
            lam, mu, dt, beta, w[:, :n], w[:, n : n + npairs], w_mu
        )
        dx = np.concatenate([prop_lam - lam, prop_mu - mu], axis=1)
        prod = dx[:, :, None] * dx[:, None, :]
        return prod.sum(axis=0), (prod * prod).sum(axis=0)

    chunks = [
        one_chunk(start, min(_CHUNK, samples - start))
        for start in range(0, samples, _CHUNK)
    ]
    s1, s2 = tree_reduce(chunks, lambda a, b: (a[0] + b[0], a[1] + b[1]))
    mean = s1 / samples
    var = np.clip(s2 / samples - mean * mean, 0.0, None)
    return mean / dt, np.sqrt(var / samples) / dt


# ----------------------------------------------------------------------
# gap drifts at (and away from) the interlacing boundary
# ----------------------------------------------------------------------


def gap_drift(lam, mu):
    """Drifts of the gaps (mu_i - lam_i) and (lam_{i+1} - mu_i).

    Evaluates the difference of the two Dyson drifts directly; this is
    finite even when one gap is exactly collapsed, because the singular
    self-terms cancel between the two lines.  Returns ``(lower, upper)``,
    each of length n - 1.
    """

    lam = np.asarray(lam, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    dl = _dyson_drift_block(lam[None, :])[0]
    dm = _dyson_drift_block(mu[None, :])[0]
    return dm - dl[:-1], dl[1:] - dm


def collapsed_lower_gap_drift(lam, mu, i):
    """Boundary drift of the gap mu_i - lam_i at a configuration with
    mu_i == lam_i, in the cancellation-free form

        sum_{j != i} (mu_j - lam_j) / ((lam_i - mu_j)(lam_i - lam_j))
        + 1 / (lam_n - lam_i),

    which is manifestly positive under (weak) interlacing: the process is
    pushed back into the open chamber.
    """

    lam = np.asarray(lam, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    n = lam.size
    if mu[i] != lam[i]:
        raise InvalidInputError("configuration must have mu_i == lam_i")
    x = lam[i]
    total = 1.0 / (lam[n - 1] - x)
    for j in range(n - 1):
        if j != i:
            total += (mu[j] - lam[j]) / ((x - mu[j]) * (x - lam[j]))
    return total


def collapsed_upper_gap_drift(lam, mu, i):
    """Boundary drift of the gap lam_{i+1} - mu_i at mu_i == lam_{i+1}:

        1 / (lam_{i+1} - lam_1)
        + sum_{j != i} (lam_{j+1} - mu_j)
          / ((lam_{i+1} - lam_{j+1})(lam_{i+1} - mu_j)),

    again positive term by term under weak interlacing.
    """

    lam = np.asarray(lam, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    n = lam.size
    if mu[i] != lam[i + 1]:
        raise InvalidInputError("configuration must have mu_i == lam_{i+1}")
    x = lam[i + 1]
    total = 1.0 / (x - lam[0])
    for j in range(n - 1):
        if j != i:
            total += (lam[j + 1] - mu[j]) / ((x - lam[j + 1]) * (x - mu[j]))
    return total


# ----------------------------------------------------------------------
# initial-data hygiene
# ----------------------------------------------------------------------


def regularize_spectrum(lam: np.ndarray, scale: float = 1e-9) -> np.ndarray:
    """Sort and, if needed, spread coincident values by ``scale * diameter``."""

    lam = np.sort(np.asarray(lam, dtype=float).reshape(-1))
    if np.all(np.diff(lam) > 0.0):
        return lam
    eps = scale * _diameter(lam)
    out = lam.copy()
    for k in range(1, out.size):
        if out[k] <= out[k - 1]:
            out[k] = out[k - 1] + eps
    logger.warning(
        "degenerate spectrum perturbed by %.1e to restore strict ordering", eps
    )
    return out


def regularize_pair(lam: np.ndarray, mu: np.ndarray, scale: float = 1e-9):
    """Restore strict interlacing by an O(scale * diameter) perturbation."""

    lam = np.sort(np.asarray(lam, dtype=float).reshape(-1))
    mu = np.sort(np.asarray(mu, dtype=float).reshape(-1))
    z = _interleave(lam[None, :], mu[None, :])[0]
    if np.all(np.diff(z) > 0.0):
        return lam, mu
    if np.any(np.diff(z) < 0.0):
        raise InterlacingError("inner values must interlace the outer ones weakly")
    eps = scale * _diameter(lam, mu)
    out = z.copy()
    for k in range(1, out.size):
        if out[k] <= out[k - 1]:
            out[k] = out[k - 1] + eps
    logger.warning(
        "degenerate interlacing perturbed by %.1e to restore strictness", eps
    )
    return out[0::2].copy(), out[1::2].copy()


def default_dt(lam, mu=None, fraction: float = 1e-3) -> float:
    """Step size heuristic: ``fraction`` times the smallest initial gap."""

    lam = np.asarray(lam, dtype=float).reshape(-1)
    if mu is None:
        gap = float(np.diff(np.sort(lam)).min())
    else:
        mu = np.asarray(mu, dtype=float).reshape(-1)
        z = _interleave(np.sort(lam)[None, :], np.sort(mu)[None, :])[0]
        gap = float(np.diff(z).min())
    if gap <= 0.0:
        gap = 1e-3
    return fraction * gap
