"""Empirical processes and V-/U-statistics of [0, 1]-valued samples.

The grid route evaluates V_n as sum_J f_J prod_i dS_n(A_{J_i}), the integral of
a step kernel against the product of empirical-process increments.  For a
degenerate step kernel this equals the direct n^{-d/2} sum over all index
tuples; the direct sum is kept as the oracle.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InputError, SizeError
from .kernels import AnalyticKernel, GridKernel, Kernel, cell_index, contract_increments, discretize
from .mixing import MarkovUniformGenerator, sample_paths

NAIVE_BUDGET = 10**8
_CHUNK = 2_000_000


@dataclass(frozen=True, eq=False)
class EmpiricalPath:
    xs: np.ndarray
    sorted_xs: np.ndarray

    @classmethod
    def from_sample(cls, xs) -> "EmpiricalPath":
        xs = np.array(xs, dtype=float).ravel()
        if xs.size == 0:
            raise InputError("sample must be nonempty")
        if np.any(~np.isfinite(xs)) or np.any(xs < 0) or np.any(xs > 1):
            raise InputError("sample values must lie in [0, 1]")
        xs.setflags(write=False)
        s = np.sort(xs)
        s.setflags(write=False)
        return cls(xs, s)

    @property
    def n(self) -> int:
        return self.xs.size


class VStatResult(NamedTuple):
    value: float
    n: int
    d: int
    method: str


def empirical_process(path: EmpiricalPath, t):
    """S_n(t) = sqrt(n) (F*_n(t) - t), with S_n(0) = 0 (first cell closed at 0)."""
    t = np.asarray(t, float)
    if np.any(t < 0) or np.any(t > 1):
        raise InputError("t must lie in [0, 1]")
    n = path.n
    counts = np.searchsorted(path.sorted_xs, t, side="right")
    out = math.sqrt(n) * (counts / n - t)
    out = np.where(t == 0.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def increment(path: EmpiricalPath, a: float, b: float) -> float:
    """S_n(b) - S_n(a): sqrt(n) (empirical mass of (a, b] - (b - a)); [0, b] when a = 0."""
    if not 0.0 <= a < b <= 1.0:
        raise InputError(f"invalid cell ({a}, {b}]")
    return float(empirical_process(path, b) - empirical_process(path, a))


def grid_increments(xs, n_cells: int) -> np.ndarray:
    """Empirical-process increments over the uniform cells, for each row of ``xs``.

    Cells follow :func:`canonstat.kernels.cell_index`, so they agree with
    grid-kernel evaluation at sample points bit for bit.
    """
    xs = np.atleast_2d(np.asarray(xs, float))
    reps, n = xs.shape
    idx = cell_index(xs, n_cells) + n_cells * np.arange(reps)[:, None]
    counts = np.bincount(idx.ravel(), minlength=reps * n_cells).reshape(reps, n_cells)
    return math.sqrt(n) * (counts / n - 1.0 / n_cells)


def _naive_sum(kernel: Kernel, xs: np.ndarray, d: int) -> float:
    n = xs.size
    if n**d > NAIVE_BUDGET:
        raise SizeError(f"naive V-statistic needs n^d = {n ** d} > {NAIVE_BUDGET} evaluations")
    if d == 1:
        return float(np.sum(kernel(xs)))
    rows = max(1, _CHUNK // n ** (d - 1))
    total = 0.0
    for start in range(0, n, rows):
        args = [xs[start:start + rows].reshape((-1,) + (1,) * (d - 1))]
        for k in range(1, d):
            shape = [1] * d
            shape[k] = n
            args.append(xs.reshape(shape))
        vals = np.broadcast_to(kernel(*args), (len(args[0]),) + (n,) * (d - 1))
        total += float(np.sum(vals))
    return total


def v_statistic(path: EmpiricalPath, kernel: Kernel, d: int = None, method: str = "grid",
                n_cells: int = 256) -> VStatResult:
    """V_n = n^{-d/2} sum over all d-tuples of f(X_{i_1}, ..., X_{i_d}).

    ``method="naive"`` evaluates that sum directly.  ``method="grid"`` uses the
    increments of S_n; analytic kernels are first discretized on ``n_cells``.
    """
    d = kernel.d if d is None else d
    if d != kernel.d:
        raise InputError(f"d={d} does not match kernel dimension {kernel.d}")
    n = path.n
    if method == "naive":
        value = _naive_sum(kernel, path.xs, d) / n ** (d / 2)
    elif method == "grid":
        gk = kernel if isinstance(kernel, GridKernel) else discretize(kernel, n_cells)
        value = float(contract_increments(gk.coeffs, grid_increments(path.xs, gk.n_cells))[0])
    else:
        raise InputError(f"unknown method {method!r}")
    return VStatResult(float(value), n, d, method)


def v_statistics_batch(xs: np.ndarray, kernel: GridKernel) -> np.ndarray:
    """Grid-route V_n for every row of ``xs``."""
    return contract_increments(kernel.coeffs, grid_increments(xs, kernel.n_cells))


def u_statistic(path: EmpiricalPath, kernel: AnalyticKernel, d: int = None) -> float:
    """(C(n, d))^{-1/2} sum_{i_1 < ... < i_d} f(X_{i_1}, ..., X_{i_d})."""
    d = kernel.d if d is None else d
    if d != kernel.d:
        raise InputError(f"d={d} does not match kernel dimension {kernel.d}")
    n = path.n
    if n < d:
        raise InputError("U-statistic needs n >= d")
    if n**d > NAIVE_BUDGET:
        raise SizeError(f"U-statistic needs n^d = {n ** d} > {NAIVE_BUDGET} evaluations")
    xs = path.xs
    if d == 2:
        i, j = np.triu_indices(n, k=1)
        total = float(np.sum(kernel(xs[i], xs[j])))
    else:
        total = 0.0
        combos = itertools.combinations(range(n), d)
        while True:
            block = np.array(list(itertools.islice(combos, _CHUNK)), dtype=np.int64)
            if block.size == 0:
                break
            total += float(np.sum(kernel(*(xs[block[:, k]] for k in range(d)))))
    return total / math.sqrt(math.comb(n, d))


# --- moment inequalities -------------------------------------------------------


def _check_disjoint(sets: Sequence) -> list:
    sets = [(float(a), float(b)) for a, b in sets]
    for a, b in sets:
        if not 0.0 <= a < b <= 1.0:
            raise InputError(f"invalid interval ({a}, {b}]")
    ordered = sorted(sets)
    for (a0, b0), (a1, b1) in zip(ordered, ordered[1:]):
        if a1 < b0:
            raise InputError("sets must be pairwise disjoint")
    return sets


def single_draw_moment(sets: Sequence, exponents: Sequence[int]) -> float:
    """E |prod_j (1(X in A_j) - P(A_j))^{l_j}| for a single uniform X.

    X lands in at most one of the disjoint A_j, which gives the closed form.
    """
    sets = _check_disjoint(sets)
    if len(exponents) != len(sets) or any(int(l) < 1 for l in exponents):
        raise InputError("need one positive exponent per set")
    P = np.array([b - a for a, b in sets])
    L = np.array([int(l) for l in exponents])
    base = P**L
    total = (1.0 - P.sum()) * np.prod(base)
    for j in range(len(P)):
        others = np.prod(np.delete(base, j))
        total += P[j] * (1.0 - P[j]) ** L[j] * others
    return float(total)


def single_draw_bound(sets: Sequence) -> float:
    """(q + 1) prod_j P(A_j)."""
    P = [b - a for a, b in sets]
    return float((len(P) + 1) * np.prod(P))


class ProbeResult(NamedTuple):
    ratio: float
    stderr: float
    reps: int
    degenerate: bool


def moment_bound_probe(gen: MarkovUniformGenerator, sets: Sequence, exponents: Sequence[int],
                       n: int, reps: int, stream: int = 0, batch: int = 2000) -> ProbeResult:
    """Monte Carlo |E prod_j S_n(A_j)^{l_j}| / prod_j P(A_j) with its standard error."""
    sets = _check_disjoint(sets)
    L = [int(l) for l in exponents]
    if len(L) != len(sets) or any(l < 1 for l in L):
        raise InputError("need one positive exponent per set")
    if sum(L) % 2:
        raise InputError("exponents must sum to an even number")
    if reps < 1000:
        raise InputError("probe needs reps >= 1000")
    P = np.array([b - a for a, b in sets])
    denom = float(np.prod(P))
    if denom == 0.0:
        return ProbeResult(0.0, 0.0, reps, True)
    vals = []
    for k, start in enumerate(range(0, reps, batch)):
        xs = sample_paths(gen, n, min(batch, reps - start), stream=(stream, k))
        prod = np.ones(xs.shape[0])
        for (a, b), l, p in zip(sets, L, P):
            mass = ((xs > a) & (xs <= b)).mean(axis=1) if a > 0 else (xs <= b).mean(axis=1)
            prod *= (math.sqrt(n) * (mass - p)) ** l
        vals.append(prod)
    v = np.concatenate(vals)
    mean = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(v.size))
    return ProbeResult(abs(mean) / denom, se / denom, reps, False)
