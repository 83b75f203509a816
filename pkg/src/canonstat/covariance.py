"""Covariance functions on [0, 1]^2 and the covariance measures they induce.

A centered process xi(t) on [0, 1] generates the noise mu((a, b]) = xi(b) - xi(a)
(the first cell [0, b] is closed at 0).  Its covariance measure on rectangles is
the double difference of Phi; for products of Gaussian increments the measure of
a box is the sum over pair partitions of products of double differences.

Three structural variants are supported:

* ``REGULAR``     -- Phi has a density q of its double difference (FBM).
* ``FACTORIZING`` -- Phi(t, s) = G(min(t, s)) H(max(t, s)) (Gauss-Markov).
* ``MIXED``       -- covariance of the empirical-process limit of a mixing
  sequence; diagonal density p and off-diagonal series density b.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError, SizeError, UnsupportedVariantError

MAX_PAIRING_ARGS = 8


class Variant(enum.Enum):
    REGULAR = "regular"
    FACTORIZING = "factorizing"
    MIXED = "mixed"


@dataclass(frozen=True)
class CovarianceModel:
    """Covariance function Phi(t, s) with variant-specific structure.

    All callables must broadcast over numpy arrays.
    """

    variant: Variant
    phi: Callable
    name: str = "custom"
    q: Optional[Callable] = None
    G: Optional[Callable] = None
    H: Optional[Callable] = None
    Gprime: Optional[Callable] = None
    Hprime: Optional[Callable] = None
    p: Optional[Callable] = None
    b: Optional[Callable] = None
    b_sup: Optional[float] = None


@dataclass(frozen=True)
class Rectangle:
    """Product of half-open intervals (a, b] in [0, 1]; a = 0 means [0, b]."""

    axes: tuple

    def __post_init__(self):
        axes = tuple((float(a), float(b)) for a, b in self.axes)
        if not axes:
            raise InputError("rectangle needs at least one axis")
        for a, b in axes:
            if not (0.0 <= a < b <= 1.0):
                raise InputError(f"invalid interval ({a}, {b}] in [0, 1]")
        object.__setattr__(self, "axes", axes)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def __mul__(self, other: "Rectangle") -> "Rectangle":
        return Rectangle(self.axes + other.axes)

    def measure(self) -> float:
        return float(np.prod([b - a for a, b in self.axes]))


def interval(a: float, b: float) -> Rectangle:
    return Rectangle(((a, b),))


@dataclass(frozen=True)
class HahnJordanDensities:
    """Diagonal density g1 (of m+) and off-diagonal density g2."""

    g1: Callable
    g2: Callable


# --- presets -----------------------------------------------------------------


def _const(c):
    return lambda t: np.full(np.shape(t), float(c))


def _factorizing(name, G, H, Gp, Hp):
    def phi(t, s):
        t, s = np.asarray(t, float), np.asarray(s, float)
        return G(np.minimum(t, s)) * H(np.maximum(t, s))

    return CovarianceModel(Variant.FACTORIZING, phi, name=name, G=G, H=H, Gprime=Gp, Hprime=Hp)


def wiener() -> CovarianceModel:
    return _factorizing("wiener", lambda t: np.asarray(t, float), _const(1.0), _const(1.0), _const(0.0))


def brownian_bridge() -> CovarianceModel:
    return _factorizing(
        "brownian_bridge",
        lambda t: np.asarray(t, float),
        lambda t: 1.0 - np.asarray(t, float),
        _const(1.0),
        _const(-1.0),
    )


def stationary_ou(alpha: float) -> CovarianceModel:
    """Phi(t, s) = exp(-alpha |t - s|), factorized as e^{alpha t} e^{-alpha s}."""
    if not alpha > 0:
        raise InputError("OU rate alpha must be positive")
    a = float(alpha)
    return _factorizing(
        f"ou({a:g})",
        lambda t: np.exp(a * np.asarray(t, float)),
        lambda t: np.exp(-a * np.asarray(t, float)),
        lambda t: a * np.exp(a * np.asarray(t, float)),
        lambda t: -a * np.exp(-a * np.asarray(t, float)),
    )


def fbm(h: float) -> CovarianceModel:
    if not 0.5 < h <= 1.0:
        raise InputError("FBM Hurst index must lie in (1/2, 1]")
    h = float(h)

    def phi(t, s):
        t, s = np.asarray(t, float), np.asarray(s, float)
        return 0.5 * (t ** (2 * h) + s ** (2 * h) - np.abs(t - s) ** (2 * h))

    def q(t, s):
        d = np.abs(np.asarray(t, float) - np.asarray(s, float))
        if h == 1.0:
            return np.ones_like(d)
        with np.errstate(divide="ignore"):
            return h * (2 * h - 1) * d ** (2 * h - 2)

    return CovarianceModel(Variant.REGULAR, phi, name=f"fbm({h:g})", q=q)


def mixed_from_generator(gen, k_max: int) -> CovarianceModel:
    """Limit covariance of the empirical process of a uniformized Markov chain.

    Both Phi and b are truncated at ``k_max`` lags.
    """
    from . import mixing

    cov = mixing.truncated_limit_covariance(gen, k_max)
    bsum = 2.0 * sum(mixing.psi_bound(gen, k) for k in range(1, k_max + 1))
    return CovarianceModel(
        Variant.MIXED,
        cov.C,
        name=f"mixed(K={gen.K},k_max={k_max})",
        p=_const(1.0),
        b=lambda t, s: mixing.b_density(gen, t, s, k_max).value,
        b_sup=bsum,
    )


PRESETS = {
    "wiener": wiener,
    "brownian_bridge": brownian_bridge,
    "bridge": brownian_bridge,
}


# --- operations --------------------------------------------------------------


def _check_unit(*xs):
    for x in xs:
        x = np.asarray(x, float)
        if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
            raise InputError("covariance arguments must lie in [0, 1]")


def eval_cov(model: CovarianceModel, t, s):
    _check_unit(t, s)
    out = model.phi(t, s)
    return float(out) if np.ndim(out) == 0 else out


def double_difference(model: CovarianceModel, r: Rectangle) -> float:
    """Covariance measure m((t1, t2] x (s1, s2])."""
    if r.dim != 2:
        raise InputError(f"double difference needs a 2-axis rectangle, got {r.dim}")
    (t1, t2), (s1, s2) = r.axes
    phi = model.phi
    return float(phi(t2, s2) + phi(t1, s1) - phi(t2, s1) - phi(t1, s2))


def uniform_edges(n_cells: int) -> np.ndarray:
    return np.arange(n_cells + 1) / n_cells


def increment_matrix(phi: Callable, edges) -> np.ndarray:
    """Matrix of double differences of ``phi`` over all cell pairs of a partition.

    This is the covariance matrix of the increment vector over the cells.
    """
    e = np.asarray(edges, float)
    P = phi(e[:, None], e[None, :])
    return P[1:, 1:] + P[:-1, :-1] - P[1:, :-1] - P[:-1, 1:]


def variation_estimate(model: CovarianceModel, n_cells: int) -> float:
    """Sum of |double difference| over the uniform n_cells x n_cells partition.

    Nondecreasing under refinement; boundedness is judged by stabilization
    of successive estimates, not certified.
    """
    if n_cells < 2:
        raise InputError("n_cells must be at least 2")
    return float(np.abs(increment_matrix(model.phi, uniform_edges(n_cells))).sum())


def hahn_jordan_densities(model: CovarianceModel) -> HahnJordanDensities:
    if model.variant is Variant.FACTORIZING:
        G, H, Gp, Hp = model.G, model.H, model.Gprime, model.Hprime
        if Gp is None or Hp is None:
            raise InputError("factorizing model must supply analytic G' and H'")

        def g1(t):
            return H(t) * Gp(t) - G(t) * Hp(t)

        def g2(t, s):
            t, s = np.asarray(t, float), np.asarray(s, float)
            return Gp(np.minimum(t, s)) * Hp(np.maximum(t, s))

        return HahnJordanDensities(g1, g2)
    if model.variant is Variant.MIXED:
        return HahnJordanDensities(model.p, model.b)
    raise UnsupportedVariantError("regular models carry the density q directly")


@functools.lru_cache(maxsize=None)
def pair_partitions(m: int) -> tuple:
    """All partitions of {0, ..., m-1} into pairs; (m-1)!! of them, empty if m is odd."""
    if m == 0:
        return ((),)
    if m % 2:
        return ()
    out = []

    def rec(rest, acc):
        if not rest:
            out.append(tuple(acc))
            return
        first = rest[0]
        for j in range(1, len(rest)):
            rec(rest[1:j] + rest[j + 1:], acc + [(first, rest[j])])

    rec(tuple(range(m)), [])
    return tuple(out)


def product_measure_rectangle(model: CovarianceModel, rects: Sequence[Rectangle]) -> float:
    """Covariance measure of the 2k-fold Gaussian product noise on a box.

    Sum over pair partitions of the product of pairwise double differences.
    """
    rects = list(rects)
    if len(rects) % 2:
        raise InputError("product measure needs an even number of factors")
    if len(rects) > MAX_PAIRING_ARGS:
        raise SizeError(f"pairing enumeration capped at {MAX_PAIRING_ARGS} factors")
    for r in rects:
        if r.dim != 1:
            raise InputError("each factor must be a univariate interval")
    dd = {}
    total = 0.0
    for pairing in pair_partitions(len(rects)):
        prod = 1.0
        for i, j in pairing:
            if (i, j) not in dd:
                dd[(i, j)] = double_difference(model, rects[i] * rects[j])
            prod *= dd[(i, j)]
        total += prod
    return total


def _tube_product_dim(multiplicity: int) -> int:
    # smallest even dimension leaving at least one coordinate off the tube
    return multiplicity + 1 if multiplicity % 2 else multiplicity + 2


def diagonal_tube_mass(model: CovarianceModel, multiplicity: int, delta: float) -> float:
    """Total |m| of the delta-tube around a multiplicity-r diagonal.

    The tube is the set of delta-grid cells whose first ``multiplicity``
    coordinates share one cell, inside the smallest even-dimensional product
    noise that keeps at least one free coordinate.  Each cell's mass is the
    pairing formula; absolute values are summed.  Tends to 0 with delta when
    the diagonal carries no mass.
    """
    if multiplicity < 3:
        raise InputError("multiplicity must be >= 3 (multiplicity-2 diagonals carry mass g1)")
    if model.variant not in (Variant.FACTORIZING, Variant.MIXED):
        raise UnsupportedVariantError("tube mass is defined for factorizing or mixed models")
    n = int(round(1.0 / delta))
    if n < 1 or abs(n * delta - 1.0) > 1e-12:
        raise InputError("delta must divide 1")
    dim = _tube_product_dim(multiplicity)
    if dim > MAX_PAIRING_ARGS:
        raise SizeError(f"tube product dimension {dim} exceeds pairing cap")
    M = increment_matrix(model.phi, uniform_edges(n))
    free = dim - multiplicity
    grids = np.meshgrid(*([np.arange(n)] * (free + 1)), indexing="ij")
    flat = [g.ravel() for g in grids]
    idx = [flat[0]] * multiplicity + flat[1:]
    mass = np.zeros(flat[0].shape)
    for pairing in pair_partitions(dim):
        term = np.ones_like(mass)
        for a, b in pairing:
            term = term * M[idx[a], idx[b]]
        mass += term
    return float(np.abs(mass).sum())


# --- model checks ------------------------------------------------------------


def covariance_min_eigenvalue(model: CovarianceModel, points) -> float:
    pts = np.asarray(points, float)
    K = model.phi(pts[:, None], pts[None, :])
    return float(np.linalg.eigvalsh(0.5 * (K + K.T)).min())


def factorizing_ratio_ok(model: CovarianceModel, n_points: int = 257) -> bool:
    """G/H positive and nondecreasing on the open interval (grid check)."""
    if model.variant is not Variant.FACTORIZING:
        raise UnsupportedVariantError("ratio check applies to factorizing models")
    t = np.linspace(0.0, 1.0, n_points + 2)[1:-1]
    r = model.G(t) / model.H(t)
    return bool(np.all(r > 0) and np.all(np.diff(r) >= -1e-12 * np.abs(r[1:])))


__all__ = [
    "CovarianceModel",
    "Variant",
    "Rectangle",
    "interval",
    "HahnJordanDensities",
    "wiener",
    "brownian_bridge",
    "stationary_ou",
    "fbm",
    "mixed_from_generator",
    "eval_cov",
    "double_difference",
    "increment_matrix",
    "uniform_edges",
    "variation_estimate",
    "hahn_jordan_densities",
    "pair_partitions",
    "product_measure_rectangle",
    "diagonal_tube_mass",
    "covariance_min_eigenvalue",
    "factorizing_ratio_ok",
]
