"""Stationary psi-mixing sequences with uniform marginals.

The generator is a finite doubly stochastic Markov chain Z_n on K states,
uniformized as X_n = (Z_n + U_n) / K with U_n iid uniform.  Stationarity of
the uniform state law makes every X_n uniform on [0, 1], and all the joint
laws F_k, densities p_k and the mixing surrogate are closed form.

Throughout, Q = P - J/K (J the all-ones matrix).  For doubly stochastic P,
P^k - J/K = Q^k, so the density ratio p_k(t, s) - 1 = K (Q^k)_{ij}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConvergenceError, InputError

ROW_TOL = 1e-12
MAX_BLOCK = 64
MAX_SERIES_TERMS = 200_000


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 keyed by (seed, stream...); identical keys give identical draws."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def generator_problems(K: int, P) -> list:
    """Invariant violations of a candidate transition matrix (empty if valid)."""
    P = np.asarray(P, float)
    problems = []
    if K < 2:
        problems.append(f"K={K} must be at least 2")
    if P.shape != (K, K):
        problems.append(f"P has shape {P.shape}, expected ({K}, {K})")
        return problems
    if not np.all(np.isfinite(P)):
        problems.append("P has non-finite entries")
        return problems
    if np.any(P <= 0.0) or np.any(P >= 1.0):
        problems.append("P entries must lie strictly inside (0, 1)")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > ROW_TOL:
        problems.append("rows of P must sum to 1")
    if np.max(np.abs(P.sum(axis=0) - 1.0)) > ROW_TOL:
        problems.append("columns of P must sum to 1 (doubly stochastic)")
    return problems


@dataclass(frozen=True, eq=False)
class MarkovUniformGenerator:
    K: int
    P: np.ndarray
    seed: int = 0
    _Q: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        problems = generator_problems(int(self.K), P)
        if problems:
            raise InputError("invalid generator: " + "; ".join(problems))
        P.setflags(write=False)
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)
        Q = P - 1.0 / self.K
        Q.setflags(write=False)
        object.__setattr__(self, "_Q", Q)

    @classmethod
    def iid(cls, K: int = 2, seed: int = 0) -> "MarkovUniformGenerator":
        return cls(K, np.full((K, K), 1.0 / K), seed)

    @classmethod
    def two_state(cls, stay: float, seed: int = 0) -> "MarkovUniformGenerator":
        return cls(2, [[stay, 1 - stay], [1 - stay, stay]], seed)

    @property
    def is_iid(self) -> bool:
        return bool(np.all(np.abs(self._Q) <= ROW_TOL))

    def Q_power(self, k: int) -> np.ndarray:
        return np.linalg.matrix_power(self._Q, k)


# --- sampling ----------------------------------------------------------------


def stream_key(stream) -> tuple:
    return tuple(stream) if isinstance(stream, (tuple, list)) else (int(stream),)


def sample_paths(gen: MarkovUniformGenerator, n: int, reps: int, stream=0) -> np.ndarray:
    """``reps`` independent stationary paths of length ``n``, shape (reps, n).

    ``stream`` (an int or tuple of ints) keys the random stream together with
    the generator seed.
    """
    if n < 1 or reps < 1:
        raise InputError("n and reps must be positive")
    rng = make_rng(gen.seed, *stream_key(stream))
    K = gen.K
    z = rng.integers(K, size=reps)
    moves = rng.random((n - 1, reps))
    within = rng.random((reps, n))
    cum = np.cumsum(gen.P, axis=1)
    states = np.empty((reps, n), dtype=np.int64)
    states[:, 0] = z
    for i in range(n - 1):
        z = np.minimum((moves[i][:, None] >= cum[z]).sum(axis=1), K - 1)
        states[:, i + 1] = z
    return (states + within) / K


def sample_path(gen: MarkovUniformGenerator, n: int, stream=0) -> np.ndarray:
    return sample_paths(gen, n, 1, stream)[0]


# --- mixing coefficient surrogate ---------------------------------------------


def psi_bound(gen: MarkovUniformGenerator, m: int) -> float:
    """max_{i,j} |K (P^m)_{ij} - 1|, the density-ratio surrogate for psi(m)."""
    if m < 1:
        raise InputError("psi is only defined for lags m >= 1")
    return float(gen.K * np.max(np.abs(gen.Q_power(m))))


def lag_zero_ratio(prob) -> np.ndarray:
    """1/P(A) - 1 for A = B at lag zero; diverges as P(A) -> 0, so psi(0) = inf."""
    prob = np.asarray(prob, float)
    return 1.0 / prob - 1.0


@dataclass(frozen=True)
class PsiProfile:
    """Geometric envelope psi_bound(m) <= const * geometric_rate**m.

    ``block`` is the smallest j whose max absolute column sum ``rho`` of Q^j is
    below one; then psi_bound(m + j) <= rho * psi_bound(m) for all m >= 1.
    """

    psi_bound: Callable[[int], float]
    geometric_rate: float
    const: float
    block: int
    rho: float


def psi_profile(gen: MarkovUniformGenerator) -> PsiProfile:
    if gen.is_iid:
        return PsiProfile(lambda m: 0.0, 0.0, 0.0, 1, 0.0)
    Qj = np.eye(gen.K)
    for j in range(1, MAX_BLOCK + 1):
        Qj = Qj @ gen._Q
        rho = float(np.abs(Qj).sum(axis=0).max())
        if rho < 1.0:
            break
    else:
        raise ConvergenceError("no contracting block of Q found; psi is not geometric")
    rate = rho ** (1.0 / j)
    const = max(psi_bound(gen, r) / rate**r for r in range(1, j + 1)) if rate > 0 else 0.0
    return PsiProfile(lambda m: psi_bound(gen, m), rate, const, j, rho)


def psi_tail(gen: MarkovUniformGenerator, N: int, power: float = 0.0) -> float:
    """Upper bound for sum_{k > N} psi_bound(k) k**power."""
    prof = psi_profile(gen)
    if prof.rho == 0.0:
        return 0.0
    j, rho = prof.block, prof.rho
    theta = rho * (1.0 + j / (N + 1.0)) ** power
    if theta >= 1.0:
        return float("inf")
    head = sum(psi_bound(gen, N + r) * (N + r) ** power for r in range(1, j + 1))
    return head / (1.0 - theta)


def psi_series(gen: MarkovUniformGenerator, d: int, rel_tol: float = 1e-12) -> float:
    """Psi(d) = sum_{k >= 1} psi(k) k^{2d-2}, truncated once the tail bound is negligible."""
    if d < 1:
        raise InputError("d must be >= 1")
    prof = psi_profile(gen)
    if prof.rho == 0.0:
        return 0.0
    p = 2 * d - 2
    total = 0.0
    Qk = np.eye(gen.K)
    for k in range(1, MAX_SERIES_TERMS + 1):
        Qk = Qk @ gen._Q
        total += gen.K * np.max(np.abs(Qk)) * k**p
        if k % prof.block == 0 and psi_tail(gen, k, p) <= rel_tol * total:
            return float(total)
    raise ConvergenceError("psi series did not reach the requested tolerance")


# --- joint laws --------------------------------------------------------------


def _state_weights(K: int, t) -> np.ndarray:
    """P(X <= t | Z = a) = clip(K t - a, 0, 1), stacked on a trailing axis."""
    t = np.asarray(t, float)
    return np.clip(K * t[..., None] - np.arange(K), 0.0, 1.0)


def _state_index(K: int, t) -> np.ndarray:
    return np.minimum(np.floor(K * np.asarray(t, float)).astype(np.int64), K - 1)


def joint_cdf(gen: MarkovUniformGenerator, k: int, t, s):
    """F_k(t, s) = P(X_1 <= t, X_{k+1} <= s)."""
    if k < 1:
        raise InputError("lag k must be >= 1")
    t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
    Pk = np.linalg.matrix_power(gen.P, k)
    out = np.einsum("...a,ab,...b->...", _state_weights(gen.K, t), Pk, _state_weights(gen.K, s)) / gen.K
    return float(out) if out.ndim == 0 else out


class BDensity(NamedTuple):
    value: object
    tail_bound: float


def _lag_sum(gen: MarkovUniformGenerator, k_max: int) -> np.ndarray:
    A = np.zeros((gen.K, gen.K))
    Qk = np.eye(gen.K)
    for _ in range(k_max):
        Qk = Qk @ gen._Q
        A += Qk
    return A


def b_density(gen: MarkovUniformGenerator, t, s, k_max: int) -> BDensity:
    """Truncated series b(t, s) = sum_{k <= k_max} (p_k(t, s) + p_k(s, t) - 2)."""
    if k_max < 1:
        raise InputError("k_max must be >= 1")
    A = _lag_sum(gen, k_max)
    B = gen.K * (A + A.T)
    i, j = np.broadcast_arrays(_state_index(gen.K, t), _state_index(gen.K, s))
    val = B[i, j]
    val = float(val) if np.ndim(val) == 0 else val
    return BDensity(val, 2.0 * psi_tail(gen, k_max))


# --- limit covariance --------------------------------------------------------


@dataclass(frozen=True)
class LimitCovariance:
    """C(t, s) = min(t, s) - ts + sum_{k <= k_max} (F_k(t, s) + F_k(s, t) - 2ts)."""

    C: Callable
    k_max: int
    tail_bound: float


def truncated_limit_covariance(gen: MarkovUniformGenerator, k_max: int) -> LimitCovariance:
    K = gen.K
    A = _lag_sum(gen, k_max) if k_max > 0 else np.zeros((K, K))
    B = (A + A.T) / K

    def C(t, s):
        t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        base = np.minimum(t, s) - t * s
        if k_max == 0:
            return base
        return base + np.einsum("...a,ab,...b->...", _state_weights(K, t), B, _state_weights(K, s))

    return LimitCovariance(C, k_max, 2.0 * psi_tail(gen, k_max) if k_max > 0 else 0.0)


def limit_covariance(gen: MarkovUniformGenerator, tail_tol: float = 1e-8) -> LimitCovariance:
    """Truncated at the first k_max with 2 * sum_{k > k_max} psi_bound(k) <= tail_tol.

    Uses |F_k(t, s) - ts| <= psi_bound(k) ts.
    """
    if not tail_tol > 0:
        raise InputError("tail_tol must be positive")
    if gen.is_iid:
        return truncated_limit_covariance(gen, 0)
    for k_max in range(1, MAX_SERIES_TERMS):
        if 2.0 * psi_tail(gen, k_max) <= tail_tol:
            return truncated_limit_covariance(gen, k_max)
    raise ConvergenceError("limit covariance tail is not summable to the requested tolerance")


# --- generator specification file ---------------------------------------------


def parse_generator_spec(text: str, source: str = "<generator>", check: bool = True):
    """Parse ``K`` / K rows of P / ``seed``.

    With ``check=False`` returns (K, P, seed) without validating the chain.
    """
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise InputError(f"{source}: empty generator specification")
    lineno, first = lines[0]
    try:
        K = int(first)
    except ValueError:
        raise InputError(f"{source}:{lineno}: expected state count K, got {first!r}") from None
    if len(lines) != K + 2:
        raise InputError(f"{source}: expected {K + 2} non-empty lines, found {len(lines)}")
    rows = []
    for lineno, ln in lines[1:K + 1]:
        try:
            row = [float(x) for x in ln.replace(",", " ").split()]
        except ValueError:
            raise InputError(f"{source}:{lineno}: unparsable transition row {ln!r}") from None
        if len(row) != K:
            raise InputError(f"{source}:{lineno}: row has {len(row)} entries, expected {K}")
        rows.append(row)
    lineno, last = lines[K + 1]
    try:
        seed = int(last)
    except ValueError:
        raise InputError(f"{source}:{lineno}: expected integer seed, got {last!r}") from None
    if seed < 0 or seed >= 2**64:
        raise InputError(f"{source}:{lineno}: seed must be an unsigned 64-bit integer")
    if not check:
        return K, np.array(rows), seed
    return MarkovUniformGenerator(K, np.array(rows), seed)


def read_generator_spec(path, check: bool = True):
    path = Path(path)
    return parse_generator_spec(path.read_text(), str(path), check=check)


def format_generator_spec(gen: MarkovUniformGenerator) -> str:
    rows = [" ".join(repr(float(x)) for x in row) for row in gen.P]
    return "\n".join([str(gen.K), *rows, str(gen.seed)]) + "\n"
