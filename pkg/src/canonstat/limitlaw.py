"""Samplers for the limit law of canonical V-statistics.

Two independent routes:

* the multiple stochastic integral sum_J f_J prod_i dY(A_{J_i}) over a grid,
  with the increment vector dY drawn from its exact Gaussian law;
* for the IID, d = 2, symmetric case, the eigenvalue series
  sum_k lambda_k (tau_k^2 - 1), shifted by the trace for V-statistics.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .covariance import increment_matrix, uniform_edges
from .errors import CovarianceError, InputError
from .kernels import AnalyticKernel, GridKernel, contract_increments, evaluate_on_grid, midpoints, pairing_contract
from .mixing import LimitCovariance, make_rng

log = logging.getLogger(__name__)

PSD_TOL = 1e-8
BATCH = 1000
# stream namespaces; sample paths use namespace 0
STREAM_MSI = 1
STREAM_EIGEN = 2
STREAM_WIENER = 3


@dataclass(frozen=True, eq=False)
class GaussianGrid:
    n_cells: int
    increment_cov: np.ndarray
    factor: np.ndarray
    jitter: float
    lambda_min: float


def _cov_callable(C) -> Callable:
    return C.C if isinstance(C, LimitCovariance) else C


def build_gaussian_grid(C: Union[LimitCovariance, Callable], n_cells: int) -> GaussianGrid:
    """Increment covariance of Y over the uniform cells and its Cholesky factor.

    Pinned covariances are singular, so a jitter eps * I may be added: eps is
    the smallest power of ten >= 1.1 * max(-lambda_min, machine floor), raised
    tenfold until the factorization succeeds.
    """
    if n_cells < 2:
        raise InputError("n_cells must be at least 2")
    M = increment_matrix(_cov_callable(C), uniform_edges(n_cells))
    M = 0.5 * (M + M.T)
    lam_min = float(np.linalg.eigvalsh(M).min())
    if lam_min < -PSD_TOL:
        raise CovarianceError(f"increment covariance indefinite: lambda_min = {lam_min:.3e}", lam_min)
    jitter = 0.0
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        floor = max(-lam_min, np.finfo(float).eps * float(np.abs(M).max()))
        jitter = 10.0 ** math.ceil(math.log10(1.1 * floor))
        while True:
            try:
                L = np.linalg.cholesky(M + jitter * np.eye(n_cells))
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
    log.info("gaussian grid n_cells=%d lambda_min=%.3e jitter=%.1e", n_cells, lam_min, jitter)
    return GaussianGrid(n_cells, M, L, jitter, lam_min)


def map_batches(fn, reps: int, threads: int = 1) -> np.ndarray:
    batches = [(b, min(BATCH, reps - start)) for b, start in enumerate(range(0, reps, BATCH))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda a: fn(*a), batches))
    else:
        parts = [fn(*a) for a in batches]
    return np.concatenate(parts) if parts else np.empty(0)


def _key(stream) -> tuple:
    return (stream,) if np.isscalar(stream) else tuple(stream)


def draw_increments(grid: GaussianGrid, reps: int, seed: int, stream=0) -> np.ndarray:
    rng = make_rng(seed, *_key(stream))
    Z = rng.standard_normal((reps, grid.n_cells))
    return Z @ grid.factor.T


def sample_msi(kernel: GridKernel, grid: GaussianGrid, reps: int, seed: int, threads: int = 1) -> np.ndarray:
    """Replications of sum_J f_J prod_i dY_{J_i}; deterministic given ``seed``."""
    if kernel.n_cells != grid.n_cells:
        raise InputError(f"kernel grid {kernel.n_cells} does not match Gaussian grid {grid.n_cells}")
    if reps < 1:
        raise InputError("reps must be positive")

    def one(b, size):
        return contract_increments(kernel.coeffs, draw_increments(grid, size, seed, (STREAM_MSI, b)))

    return map_batches(one, reps, threads)


def msi_mean(kernel: GridKernel, grid: GaussianGrid) -> float:
    """E sum_J f_J prod dY_{J_i} by the pairing formula (zero for odd d)."""
    d = kernel.d
    return pairing_contract([(kernel.coeffs, range(d))], d, grid.increment_cov)


def coarsen_increments(incs: np.ndarray, factor: int) -> np.ndarray:
    """Sum blocks of ``factor`` adjacent fine-cell increments."""
    reps, N = incs.shape
    if N % factor:
        raise InputError("coarsening factor must divide the number of cells")
    return incs.reshape(reps, N // factor, factor).sum(axis=2)


def bridge_increments_from_wiener(n_cells: int, reps: int, seed: int, stream=0) -> np.ndarray:
    """Increments of W(t) - t W(1) from independent Wiener increments."""
    rng = make_rng(seed, *_key(stream))
    dW = rng.standard_normal((reps, n_cells)) / math.sqrt(n_cells)
    return dW - dW.sum(axis=1, keepdims=True) / n_cells


# --- eigenvalue series ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EigenSeriesSampler:
    eigenvalues: np.ndarray
    trace: float
    K_terms: int


def nystrom_eigens(kernel: AnalyticKernel, n_cells: int, K_terms: int) -> EigenSeriesSampler:
    """Eigenvalues of [f(m_i, m_j) / N] at cell midpoints, largest |lambda| first."""
    if kernel.d != 2:
        raise InputError("eigenvalue series needs a bivariate kernel")
    A = evaluate_on_grid(kernel, midpoints(n_cells)) / n_cells
    asym = float(np.abs(A - A.T).max()) * n_cells
    if asym > 1e-8:
        raise InputError(f"kernel is not symmetric (max asymmetry {asym:.2e})")
    lam = np.linalg.eigvalsh(0.5 * (A + A.T))
    lam = lam[np.argsort(-np.abs(lam), kind="stable")][:K_terms]
    trace = float(np.trace(A))
    return EigenSeriesSampler(lam, trace, len(lam))


def sample_eigen_series(es: EigenSeriesSampler, kind: str, reps: int, seed: int, threads: int = 1) -> np.ndarray:
    """U: sum lambda_k (tau_k^2 - 1).  V: the same plus the trace."""
    if kind not in ("U", "V"):
        raise InputError(f"statistic kind must be 'U' or 'V', got {kind!r}")
    if kind == "V" and (es.trace is None or not np.isfinite(es.trace)):
        raise InputError("V-kind samples need the kernel trace")
    shift = es.trace if kind == "V" else 0.0
    lam = np.asarray(es.eigenvalues, float)

    def one(b, size):
        tau = make_rng(seed, STREAM_EIGEN, b).standard_normal((size, lam.size))
        return (tau * tau - 1.0) @ lam + shift

    return map_batches(one, reps, threads)


# --- distances -----------------------------------------------------------------


def ks_distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)|."""
    a = np.sort(np.asarray(a, float))
    b = np.sort(np.asarray(b, float))
    if a.size == 0 or b.size == 0:
        raise InputError("KS distance needs two nonempty samples")
    grid = np.concatenate([a, b])
    Fa = np.searchsorted(a, grid, side="right") / a.size
    Fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(Fa - Fb)))


def ks_critical(n_a: int, n_b: int, c_alpha: float = 1.63) -> float:
    """Asymptotic two-sample KS critical value; c_alpha = 1.63 is the 1% level."""
    return c_alpha * math.sqrt((n_a + n_b) / (n_a * n_b))
