"""d-variate kernels on [0, 1]^d: step kernels on uniform grids and analytic ones.

Also the diagonal-subspace bookkeeping, the combined L2 norm over the main and
all diagonal subspaces, the covariance seminorm of a step kernel against a
Gaussian product noise, and the degeneracy projection.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .covariance import MAX_PAIRING_ARGS, CovarianceModel, increment_matrix, pair_partitions, uniform_edges
from .errors import InputError, NumericError, SizeError

MAX_PARTITION_DIM = 6
MAX_PROJECT_DIM = 4


def midpoints(n_cells: int) -> np.ndarray:
    return (np.arange(n_cells) + 0.5) / n_cells


def cell_index(x, n_cells: int) -> np.ndarray:
    """Index j of the cell (j/N, (j+1)/N] holding x; x = 0 goes to cell 0."""
    x = np.asarray(x, float)
    j = np.ceil(x * n_cells).astype(np.int64) - 1
    return np.clip(j, 0, n_cells - 1)


@dataclass(frozen=True, eq=False)
class GridKernel:
    """Step kernel sum_J coeffs[J] prod_i 1(x_i in cell J_i) on a uniform grid."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim < 1 or len(set(c.shape)) != 1:
            raise InputError(f"grid kernel needs a cubic coefficient array, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise NumericError("grid kernel coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def d(self) -> int:
        return self.coeffs.ndim

    @property
    def n_cells(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, *xs):
        idx = [cell_index(x, self.n_cells) for x in xs]
        return self.coeffs[tuple(np.broadcast_arrays(*idx))]

    def __add__(self, other: "GridKernel") -> "GridKernel":
        return GridKernel(self.coeffs + other.coeffs)

    def __sub__(self, other: "GridKernel") -> "GridKernel":
        return GridKernel(self.coeffs - other.coeffs)

    def __rmul__(self, c: float) -> "GridKernel":
        return GridKernel(c * self.coeffs)


@dataclass(frozen=True)
class AnalyticKernel:
    """Kernel given by a broadcasting callable f(x_1, ..., x_d)."""

    d: int
    f: Callable
    symmetric: bool = False
    name: str = "custom"

    def __call__(self, *xs):
        return self.f(*xs)


Kernel = Union[GridKernel, AnalyticKernel]


# --- presets -----------------------------------------------------------------


def cvm_raw() -> AnalyticKernel:
    """min(s, t); its degenerate projection is the omega^2 kernel."""
    return AnalyticKernel(2, lambda s, t: np.minimum(s, t), symmetric=True, name="cvm_raw")


def cvm_kernel() -> AnalyticKernel:
    """Closed form of the omega^2 kernel: int_0^1 (1{s<=u} - u)(1{t<=u} - u) du.

    With it, V_n equals int S_n(u)^2 du.
    """

    def f(s, t):
        s, t = np.asarray(s, float), np.asarray(t, float)
        return -np.maximum(s, t) + 0.5 * (s * s + t * t) + 1.0 / 3.0

    return AnalyticKernel(2, f, symmetric=True, name="cvm")


def rank1_raw() -> AnalyticKernel:
    return AnalyticKernel(2, lambda s, t: np.asarray(s, float) * np.asarray(t, float), symmetric=True, name="rank1_raw")


def rank1_kernel() -> AnalyticKernel:
    return AnalyticKernel(2, lambda s, t: (np.asarray(s, float) - 0.5) * (np.asarray(t, float) - 0.5),
                          symmetric=True, name="rank1")


def zero_kernel(d: int = 2) -> AnalyticKernel:
    return AnalyticKernel(d, lambda *xs: np.zeros(np.broadcast(*xs).shape), symmetric=True, name="zero")


# --- diagonal subspaces ------------------------------------------------------


@dataclass(frozen=True)
class DiagonalPartition:
    """Set partition of {1..d}; each block is a group of identified coordinates."""

    blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(sorted(b)) for b in self.blocks)
        flat = [i for b in blocks for i in b]
        if any(len(b) == 0 for b in blocks) or len(flat) != len(set(flat)):
            raise InputError("partition blocks must be nonempty and disjoint")
        if sorted(flat) != list(range(1, len(flat) + 1)):
            raise InputError("partition must cover {1, ..., d}")
        object.__setattr__(self, "blocks", tuple(sorted(blocks)))

    @property
    def d(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def r(self) -> int:
        return len(self.blocks)

    @property
    def is_main(self) -> bool:
        return self.r == self.d

    def block_of(self) -> list:
        """block_of()[i] is the block number of coordinate i + 1."""
        out = [0] * self.d
        for k, b in enumerate(self.blocks):
            for i in b:
                out[i - 1] = k
        return out


def _restricted_growth(d: int):
    def rec(prefix, m):
        if len(prefix) == d:
            yield tuple(prefix)
            return
        for v in range(m + 2):
            yield from rec(prefix + [v], max(m, v))

    yield from rec([0], 0)


def enumerate_diagonal_partitions(d: int) -> list:
    """All set partitions of {1..d}: main subspace first, then lexicographic by blocks."""
    if not 1 <= d <= MAX_PARTITION_DIM:
        raise SizeError(f"diagonal enumeration supports 1 <= d <= {MAX_PARTITION_DIM}")
    parts = []
    for rgs in _restricted_growth(d):
        blocks = {}
        for i, v in enumerate(rgs, start=1):
            blocks.setdefault(v, []).append(i)
        parts.append(DiagonalPartition(tuple(tuple(b) for b in blocks.values())))
    return sorted(parts, key=lambda p: (not p.is_main, p.blocks))


# --- evaluation helpers -------------------------------------------------------


def _axis_args(points: Sequence[np.ndarray], block_of: Sequence[int]) -> list:
    """Arguments for f on an r-dimensional mesh, with coordinates tied per block."""
    r = len(points)
    args = []
    for k in block_of:
        shape = [1] * r
        shape[k] = -1
        args.append(np.asarray(points[k]).reshape(shape))
    return args


def evaluate_on_grid(kernel: AnalyticKernel, nodes: np.ndarray) -> np.ndarray:
    """f at every node combination, shape (N,) * d."""
    return np.broadcast_to(kernel(*_axis_args([nodes] * kernel.d, range(kernel.d))),
                           (len(nodes),) * kernel.d).astype(float)


def discretize(kernel: AnalyticKernel, n_cells: int) -> GridKernel:
    """Step kernel with the value of f at cell midpoints."""
    if n_cells < 2:
        raise InputError("n_cells must be at least 2")
    return GridKernel(evaluate_on_grid(kernel, midpoints(n_cells)))


def _diag_restriction(coeffs: np.ndarray, part: DiagonalPartition) -> np.ndarray:
    """Coefficients with indices tied per block, shape (N,) * r."""
    N = coeffs.shape[0]
    idx = np.indices((N,) * part.r)
    return coeffs[tuple(idx[k] for k in part.block_of())]


def combined_norm_sq(kernel: Kernel, quad_cells: int = 64) -> float:
    """Sum over the main and all diagonal subspaces of the integral of f^2.

    On a diagonal the identified coordinates become one variable, so each term
    is an integral over the r-dimensional unit cube.  Grid kernels are summed
    exactly cell by cell; analytic kernels use the midpoint rule.
    """
    total = 0.0
    for part in enumerate_diagonal_partitions(kernel.d):
        if isinstance(kernel, GridKernel):
            vals = _diag_restriction(kernel.coeffs, part)
            h = 1.0 / kernel.n_cells
        else:
            if kernel.d > 4:
                raise SizeError("analytic combined norm supports d <= 4")
            nodes = midpoints(quad_cells)
            vals = np.asarray(kernel(*_axis_args([nodes] * part.r, part.block_of())), float)
            vals = np.broadcast_to(vals, (quad_cells,) * part.r)
            h = 1.0 / quad_cells
        if not np.all(np.isfinite(vals)):
            raise NumericError("non-finite kernel values in combined norm")
        total += float(np.sum(vals * vals)) * h**part.r
    return total


def l2_norm_sq(kernel: GridKernel) -> float:
    """Main-subspace L2 norm squared of a step kernel."""
    return float(np.sum(kernel.coeffs**2)) / kernel.n_cells**kernel.d


def symmetrize(kernel: GridKernel) -> GridKernel:
    perms = list(itertools.permutations(range(kernel.d)))
    return GridKernel(sum(np.transpose(kernel.coeffs, p) for p in perms) / len(perms))


# --- Gaussian pairing contractions --------------------------------------------


def pairing_contract(operands: Sequence, n_letters: int, M: np.ndarray) -> float:
    """Sum over pair partitions of the n_letters indices of a full contraction.

    ``operands`` is a list of (array, index_letters); each pair (a, b) of a
    pairing contributes a factor M[a, b].
    """
    total = 0.0
    for pairing in pair_partitions(n_letters):
        args = []
        for arr, letters in operands:
            args += [arr, list(letters)]
        for a, b in pairing:
            args += [M, [a, b]]
        total += float(np.einsum(*args, [], optimize="greedy"))
    return total


def seminorm_sq(kernel: GridKernel, model: CovarianceModel) -> float:
    """||f||^2 = sum_{J,K} f_J f_K m(A_J x A_K) for the d-fold Gaussian product noise."""
    d = kernel.d
    if 2 * d > MAX_PAIRING_ARGS:
        raise SizeError(f"seminorm needs 2d <= {MAX_PAIRING_ARGS} pairing arguments")
    M = increment_matrix(model.phi, uniform_edges(kernel.n_cells))
    c = kernel.coeffs
    return pairing_contract([(c, range(d)), (c, range(d, 2 * d))], 2 * d, M)


def star_norm_sq(f: Callable, model: CovarianceModel, n_cells: int) -> float:
    """Cell sum of |f(t_i) f(t_j)| |m(A_i x A_j)| for a univariate f at midpoints."""
    v = np.abs(np.asarray(f(midpoints(n_cells)), float))
    M = np.abs(increment_matrix(model.phi, uniform_edges(n_cells)))
    return float(v @ M @ v)


def contract_increments(coeffs: np.ndarray, incs: np.ndarray) -> np.ndarray:
    """sum_J coeffs[J] prod_i incs[r, J_i] for every row r of ``incs``."""
    incs = np.atleast_2d(incs)
    reps, N = incs.shape
    d = coeffs.ndim
    T = (incs @ coeffs.reshape(N, -1)).reshape(reps, N ** (d - 1))
    for k in range(1, d):
        T = np.einsum("rn,rnm->rm", incs, T.reshape(reps, N, N ** (d - 1 - k)))
    return T[:, 0]


# --- degeneracy projection ----------------------------------------------------


def _partial_mean(g: Callable, d: int, S: tuple, quad_cells: int) -> Callable:
    """x -> mean of g over the arguments in S (midpoint rule), other args kept."""
    nodes = midpoints(quad_cells)
    s = len(S)

    def h(*xs):
        kept = [np.asarray(x, float) for k, x in enumerate(xs) if k not in S]
        base = np.broadcast(*kept).shape if kept else ()
        nb = len(base)
        args, qpos, kpos = [], 0, 0
        for k in range(d):
            if k in S:
                shape = [1] * (nb + s)
                shape[nb + qpos] = quad_cells
                args.append(nodes.reshape(shape))
                qpos += 1
            else:
                args.append(kept[kpos].reshape(kept[kpos].shape + (1,) * s))
                kpos += 1
        vals = np.broadcast_to(g(*args), base + (quad_cells,) * s)
        return vals.mean(axis=tuple(range(nb, nb + s)))

    return h


def project_degenerate(raw: AnalyticKernel, quad_cells: int = None) -> AnalyticKernel:
    """prod_k (I - E_k) raw by inclusion-exclusion over argument subsets.

    E_k averages argument k against the uniform law (midpoint rule on
    ``quad_cells`` nodes; default 1024 for d <= 2, 64 above).
    """
    d = raw.d
    if d > MAX_PROJECT_DIM:
        raise SizeError(f"projection supports d <= {MAX_PROJECT_DIM}")
    if quad_cells is None:
        quad_cells = 1024 if d <= 2 else 64
    terms = []
    for size in range(d + 1):
        for S in itertools.combinations(range(d), size):
            fn = raw.f if not S else _partial_mean(raw.f, d, S, quad_cells)
            terms.append(((-1) ** size, fn))

    def f(*xs):
        shape = np.broadcast(*[np.asarray(x) for x in xs]).shape
        out = np.zeros(shape)
        for sign, fn in terms:
            out = out + sign * np.broadcast_to(fn(*xs), shape)
        return out

    return AnalyticKernel(d, f, symmetric=raw.symmetric, name=f"proj({raw.name})")


def project_grid_degenerate(kernel: GridKernel) -> GridKernel:
    """Discrete projection: center the coefficients along every axis.

    Exact counterpart of prod_k (I - E_k) for step kernels under the uniform law.
    """
    c = kernel.coeffs.copy()
    for ax in range(c.ndim):
        c = c - c.mean(axis=ax, keepdims=True)
    return GridKernel(c)


def degeneracy_defect(kernel: Kernel, n_points: int = 33, quad_cells: int = 4096) -> float:
    """max over a grid of |int f(.., x, ..) dx|, on an independent midpoint grid."""
    d = kernel.d
    pts = (np.arange(n_points) + 0.37) / n_points
    nodes = midpoints(quad_cells)
    worst = 0.0
    for k in range(d):
        args = []
        for i in range(d):
            shape = [1] * d
            if i == k:
                shape[-1] = quad_cells
                args.append(nodes.reshape(shape))
            else:
                shape[i if i < k else i - 1] = n_points
                args.append(pts.reshape(shape))
        vals = np.asarray(kernel(*args), float)
        worst = max(worst, float(np.abs(vals.mean(axis=-1)).max()))
    return worst


def kernel_asymmetry(kernel: AnalyticKernel, n_points: int = 17, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    pts = rng.random((n_points, kernel.d))
    base = kernel(*pts.T)
    worst = 0.0
    for perm in itertools.permutations(range(kernel.d)):
        worst = max(worst, float(np.max(np.abs(kernel(*pts[:, perm].T) - base))))
    return worst


# --- serialization ------------------------------------------------------------


def format_grid_kernel(kernel: GridKernel) -> str:
    lines = [f"{kernel.d} {kernel.n_cells}"]
    lines += [repr(float(x)) for x in kernel.coeffs.ravel(order="C")]
    return "\n".join(lines) + "\n"


def parse_grid_kernel(text: str, source: str = "<kernel>") -> GridKernel:
    lines = text.splitlines()
    if not lines:
        raise InputError(f"{source}: empty kernel file")
    try:
        d, n = (int(x) for x in lines[0].split())
    except ValueError:
        raise InputError(f"{source}:1: header must be 'd n_cells'") from None
    if d < 1 or n < 1:
        raise InputError(f"{source}:1: d and n_cells must be positive")
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != n**d:
        raise InputError(f"{source}: expected {n ** d} coefficients, found {len(body)}")
    vals = np.empty(len(body))
    for i, ln in enumerate(body):
        try:
            vals[i] = float(ln)
        except ValueError:
            raise InputError(f"{source}:{i + 2}: bad coefficient {ln!r}") from None
    return GridKernel(vals.reshape((n,) * d))


def save_grid_kernel(kernel: GridKernel, path) -> None:
    Path(path).write_text(format_grid_kernel(kernel))


def load_grid_kernel(path) -> GridKernel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read kernel file {path}: {exc.strerror}") from None
    return parse_grid_kernel(text, str(path))


def n_partitions(d: int) -> int:
    """Bell number B_d."""
    row = [1]
    for _ in range(d - 1):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[-1]


def isometry_factor(d: int) -> int:
    return math.factorial(d)


def embedding_constant(d: int, b_sup: float) -> float:
    """C with seminorm_sq <= C * combined_norm_sq for mixed-type product noise.

    Each of the (2d - 1)!! Gaussian pairings is a product of d factors of the
    covariance measure, which splits into the diagonal, minus the Lebesgue
    product, and the off-diagonal density b.  Expanding and bounding every
    term by Cauchy-Schwarz on the matching diagonal gives (2 + sup|b|)^d.
    """
    if d < 1:
        raise InputError("d must be >= 1")
    if not b_sup >= 0:
        raise InputError("sup |b| must be nonnegative")
    double_fact = math.prod(range(2 * d - 1, 0, -2))
    return float(double_fact * (2.0 + b_sup) ** d)
