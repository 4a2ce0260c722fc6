"""Exact sampling of the matrix Ornstein-Uhlenbeck process.

The process solves dB_ii = -B_ii dt + sqrt(2/beta) db_ii on the diagonal and
dB_ij^(l) = -B_ij^(l) dt + sqrt(1/beta) db_ij^(l) on each off-diagonal
component.  Its transition law is Gaussian: with c = exp(-t),

    B_t  =d=  c B_0 + sqrt(1 - c^2) G,

where G is an invariant-ensemble draw (density ~ exp(-(beta/2) Tr B^2)), so
paths on a time grid are sampled exactly, with no discretization bias.

Generator, acting on smooth f(B):

    A f = sum_i [ (1/beta) d^2f/dB_ii^2 - B_ii df/dB_ii ]
        + sum_{i<j} sum_l [ (1/(2 beta)) d^2f/d(B_ij^(l))^2
                            - B_ij^(l) df/dB_ij^(l) ].
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from ._rng import path_stream
from .algebra import (
    SelfAdjointMatrix,
    free_parameter_count,
    sample_gaussian_components,
    sample_gaussian_ensemble,
)
from .errors import InvalidInputError

__all__ = [
    "MatrixPathConfig",
    "ou_step_exact",
    "ou_path",
    "ou_endpoints",
    "apply_dyson_generator",
    "generator_eigenrelation",
    "write_matrix_paths_csv",
    "read_matrix_paths_csv",
    "write_matrix_paths_frame",
    "read_matrix_paths_frame",
]

FRAME_MAGIC = b"MDYS"
FRAME_VERSION = 1
_CHUNK = 4096


@dataclass
class MatrixPathConfig:
    """Sampling plan for an ensemble of matrix OU paths."""

    n: int
    beta: int
    t_grid: np.ndarray
    seed: int = 0
    paths: int = 1
    exact: bool = True  # reserved: only the exact sampler is implemented

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float).ravel()
        if len(self.t_grid) == 0 or np.any(self.t_grid <= 0) or np.any(np.diff(self.t_grid) <= 0):
            raise InvalidInputError("t_grid must be strictly increasing and positive")
        if self.paths < 1:
            raise InvalidInputError("paths must be >= 1")
        if not self.exact:
            raise InvalidInputError("only the exact transition sampler is provided")


def ou_step_exact(matrix: SelfAdjointMatrix, t: float, rng: np.random.Generator) -> SelfAdjointMatrix:
    """One exact transition of duration t from the current matrix."""
    if t < 0:
        raise InvalidInputError("t must be nonnegative")
    if t == 0:
        return matrix.copy()
    c = math.exp(-t)
    s = math.sqrt(1.0 - c * c)
    g = sample_gaussian_ensemble(matrix.n, matrix.beta, rng)
    return c * matrix + s * g


def ou_path(b0: SelfAdjointMatrix, config: MatrixPathConfig, path_index: int = 0) -> list:
    """One exact path on the configured grid, on its own RNG stream."""
    if (b0.n, b0.beta) != (config.n, config.beta):
        raise InvalidInputError("initial matrix does not match the configuration")
    rng = path_stream(config.seed, path_index)
    out = []
    prev_t = 0.0
    current = b0
    for t in config.t_grid:
        current = ou_step_exact(current, t - prev_t, rng)
        out.append(current)
        prev_t = t
    return out


def ou_endpoints(b0: SelfAdjointMatrix, t: float, paths: int, seed: int) -> np.ndarray:
    """Component stack (paths, n, n, beta) of exact time-t samples.

    Path p draws from the stream keyed by (seed, p); results do not depend
    on internal block sizes.
    """
    if t <= 0:
        raise InvalidInputError("t must be positive")
    n, beta = b0.n, b0.beta
    c = math.exp(-t)
    s = math.sqrt(1.0 - c * c)
    out = np.empty((paths, n, n, beta))
    for start in range(0, paths, _CHUNK):
        stop = min(start + _CHUNK, paths)
        for p in range(start, stop):
            rng = path_stream(seed, p)
            out[p] = sample_gaussian_components(n, beta, rng, ())
    out *= s
    out += c * b0.components
    return out


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------


def apply_dyson_generator(f, matrix: SelfAdjointMatrix, step: float | None = None,
                          richardson: bool = True) -> float:
    """Finite-difference application of the matrix-process generator to f.

    Central differences along every free real parameter; with ``richardson``
    the step/half-step results are extrapolated, removing the O(step^2)
    error term.
    """
    value = _generator_fd(f, matrix, step)
    if not richardson:
        return value
    half = _generator_fd(f, matrix, (step or _default_step(matrix)) / 2.0)
    return (4.0 * half - value) / 3.0


def _default_step(matrix: SelfAdjointMatrix) -> float:
    scale = max(1.0, float(np.max(np.abs(matrix.components))))
    return 1e-4 * scale


def _second_symmetric(matrix: SelfAdjointMatrix) -> float:
    """e2 of the spectrum from traces: ((tr B)^2 - tr B^2) / 2."""
    comps = matrix.components
    tr = matrix.trace()
    tr_sq = float(np.trace(comps[..., 0] @ comps[..., 0]))
    for c in range(1, comps.shape[-1]):
        tr_sq -= float(np.trace(comps[..., c] @ comps[..., c]))
    return 0.5 * (tr * tr - tr_sq)


def generator_eigenrelation(matrix: SelfAdjointMatrix, step: float | None = None) -> float:
    """-(G e2 + 2 e2) at ``matrix``, with G the matrix-process generator.

    The quadratic symmetric function e2 of the spectrum satisfies
    G e2 = -2 e2 - n(n-1)/2 identically (the interaction term contributes
    the constant, the restoring drift the eigenvalue -2), so the returned
    value equals n(n-1)/2 at every matrix.  Evaluated by finite
    differences, it is a pointwise consistency check of the generator
    discretization against the minor count.
    """
    return -(apply_dyson_generator(_second_symmetric, matrix, step) + 2.0 * _second_symmetric(matrix))


def _generator_fd(f, matrix: SelfAdjointMatrix, step: float | None) -> float:
    n, beta = matrix.n, matrix.beta
    h = step if step is not None else _default_step(matrix)
    base = matrix.free_parameters()
    f0 = float(f(matrix))
    nfree = free_parameter_count(n, beta)
    # second-derivative weights: 1/beta on the diagonal, 1/(2 beta) off it
    weights = np.full(nfree, 1.0 / (2.0 * beta))
    weights[:n] = 1.0 / beta
    total = 0.0
    for p in range(nfree):
        plus = base.copy()
        minus = base.copy()
        plus[p] += h
        minus[p] -= h
        fp = float(f(SelfAdjointMatrix.from_free_parameters(plus, n, beta)))
        fm = float(f(SelfAdjointMatrix.from_free_parameters(minus, n, beta)))
        second = (fp - 2.0 * f0 + fm) / (h * h)
        first = (fp - fm) / (2.0 * h)
        total += weights[p] * second - base[p] * first
    return total


# ---------------------------------------------------------------------------
# wire formats
# ---------------------------------------------------------------------------


def write_matrix_paths_csv(fh, t_grid: np.ndarray, data: np.ndarray, n: int, beta: int) -> None:
    """CSV dump with header path,t,i,j,comp,value.

    ``data`` has shape (paths, times, n_free) in free-parameter order
    (diagonal entries first, then upper off-diagonal entries (i < j) in
    lexicographic order with their beta components).  Indices are 0-based.
    """
    fh.write("path,t,i,j,comp,value\n")
    iu, ju = np.triu_indices(n, 1)
    for p in range(data.shape[0]):
        for k, t in enumerate(t_grid):
            t_s = repr(float(t))
            vec = data[p, k]
            for i in range(n):
                fh.write(f"{p},{t_s},{i},{i},0,{float(vec[i])!r}\n")
            for e in range(len(iu)):
                for comp in range(beta):
                    value = float(vec[n + e * beta + comp])
                    fh.write(f"{p},{t_s},{iu[e]},{ju[e]},{comp},{value!r}\n")


def read_matrix_paths_csv(fh, n: int, beta: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_matrix_paths_csv`; returns (t_grid, data)."""
    header = fh.readline().strip()
    if header != "path,t,i,j,comp,value":
        raise InvalidInputError(f"unexpected CSV header: {header!r}")
    iu, ju = np.triu_indices(n, 1)
    offsets = {(int(iu[e]), int(ju[e])): n + e * beta for e in range(len(iu))}
    records: dict[tuple[int, float], np.ndarray] = {}
    times: list[float] = []
    nfree = free_parameter_count(n, beta)
    for line in fh:
        line = line.strip()
        if not line:
            continue
        p_s, t_s, i_s, j_s, c_s, v_s = line.split(",")
        key = (int(p_s), float(t_s))
        if key not in records:
            records[key] = np.empty(nfree)
            if key[0] == 0:
                times.append(float(t_s))
        i, j, comp = int(i_s), int(j_s), int(c_s)
        slot = i if i == j else offsets[(i, j)] + comp
        records[key][slot] = float(v_s)
    t_grid = np.array(times)
    paths = 1 + max(k[0] for k in records)
    data = np.empty((paths, len(t_grid), nfree))
    for (p, t), vec in records.items():
        k = int(np.argmin(np.abs(t_grid - t)))
        data[p, k] = vec
    return t_grid, data


def write_matrix_paths_frame(fh, t_grid: np.ndarray, data: np.ndarray, n: int, beta: int) -> None:
    """Compact binary frame (see README for the byte layout).

    Little-endian throughout: magic ``MDYS``, u32 version, u32 n, u32 beta,
    u64 paths, u64 times, then the time grid as f64, then the
    (paths, times, n_free) array as contiguous f64.
    """
    paths, times, nfree = data.shape
    if nfree != free_parameter_count(n, beta) or times != len(t_grid):
        raise InvalidInputError("data shape does not match grid/matrix size")
    fh.write(FRAME_MAGIC)
    fh.write(struct.pack("<III", FRAME_VERSION, n, beta))
    fh.write(struct.pack("<QQ", paths, times))
    fh.write(np.asarray(t_grid, dtype="<f8").tobytes())
    fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def _read_exact(fh, count: int) -> bytes:
    payload = fh.read(count)
    if len(payload) != count:
        raise InvalidInputError("truncated matrix-path frame")
    return payload


def read_matrix_paths_frame(fh) -> dict:
    """Read a binary frame; returns dict with n, beta, t_grid and data."""
    magic = _read_exact(fh, 4)
    if magic != FRAME_MAGIC:
        raise InvalidInputError("not a matrix-path frame")
    version, n, beta = struct.unpack("<III", _read_exact(fh, 12))
    if version != FRAME_VERSION:
        raise InvalidInputError(f"unsupported frame version {version}")
    paths, times = struct.unpack("<QQ", _read_exact(fh, 16))
    t_grid = np.frombuffer(_read_exact(fh, 8 * times), dtype="<f8").copy()
    nfree = free_parameter_count(n, beta)
    data = np.frombuffer(_read_exact(fh, 8 * paths * times * nfree), dtype="<f8").copy()
    return {
        "n": n,
        "beta": beta,
        "t_grid": t_grid,
        "data": data.reshape(paths, times, nfree),
    }
