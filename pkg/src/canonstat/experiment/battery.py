"""The invariant battery behind ``verify``.

Every invariant reports a measured value, a bound and a comparator; the verdict
is ``measured <= bound`` (or ``<``).  A tolerance sweep rescales all bounds by
the configured factors and records where each invariant starts to fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from ..covariance import brownian_bridge, diagonal_tube_mass, mixed_from_generator, variation_estimate, wiener
from ..empirical import single_draw_bound, single_draw_moment, moment_bound_probe
from ..errors import CanonStatError
from ..kernels import (
    GridKernel,
    combined_norm_sq,
    degeneracy_defect,
    embedding_constant,
    isometry_factor,
    l2_norm_sq,
    seminorm_sq,
    symmetrize,
)
from ..limitlaw import build_gaussian_grid, msi_mean, sample_msi
from ..mixing import MarkovUniformGenerator, joint_cdf, limit_covariance, make_rng, psi_bound, psi_profile
from .config import ExperimentConfig
from .runner import analytic_kernel, build_generator, grid_kernel

# stream namespace for the battery's own randomized configurations
STREAM_BATTERY = 4

PROBE_PATTERNS = (
    ("(4)", ((0.0, 0.5),), (4,)),
    ("(2,2)", ((0.0, 0.25), (0.5, 0.75)), (2, 2)),
    ("(2,1,1)", ((0.0, 0.25), (0.25, 0.5), (0.5, 1.0)), (2, 1, 1)),
)


@dataclass
class Invariant:
    name: str
    measured: Optional[float]
    bound: float
    comparator: str = "<="
    detail: str = ""
    error: Optional[str] = None

    def holds(self, factor: float = 1.0) -> Optional[bool]:
        if self.error is not None:
            return False
        if self.measured is None:
            return None
        b = self.bound * factor
        return bool(self.measured < b) if self.comparator == "<" else bool(self.measured <= b)

    @property
    def verdict(self) -> str:
        ok = self.holds()
        return "skip" if ok is None else ("pass" if ok else "fail")

    def as_dict(self) -> dict:
        out = {
            "name": self.name,
            "measured": self.measured,
            "bound": self.bound,
            "comparator": self.comparator,
            "verdict": self.verdict,
        }
        if self.detail:
            out["detail"] = self.detail
        if self.error:
            out["error"] = self.error
        return out


# --- individual invariants -------------------------------------------------------


def check_generator(cfg: ExperimentConfig) -> Invariant:
    problems = cfg.generator.problems
    return Invariant("mixing.generator_valid", float(len(problems)), 0.0, detail="; ".join(problems))


def check_single_draw(cfg: ExperimentConfig) -> Invariant:
    """Closed-form single-draw moment vs (q + 1) prod P(A_j) on random disjoint sets."""
    rng = make_rng(cfg.seed, STREAM_BATTERY, 0)
    worst = 0.0
    for _ in range(cfg.thresholds.single_draw_configs):
        q = int(rng.integers(1, 6))
        cuts = np.sort(rng.random(2 * q))
        sets = [(cuts[2 * j], cuts[2 * j + 1]) for j in range(q) if cuts[2 * j] < cuts[2 * j + 1]]
        if not sets:
            continue
        ls = rng.integers(1, 7, size=len(sets))
        worst = max(worst, single_draw_moment(sets, ls) / single_draw_bound(sets))
    return Invariant("empirical.single_draw_moment", worst, 1.0,
                     detail=f"max LHS/bound over {cfg.thresholds.single_draw_configs} configurations")


def check_psi_consequence(gen: MarkovUniformGenerator, cfg: ExperimentConfig) -> Invariant:
    th = cfg.thresholds
    t = np.arange(1, th.psi_grid + 1) / th.psi_grid
    T, S = np.meshgrid(t, t, indexing="ij")
    worst = -math.inf
    for k in range(1, th.psi_lags + 1):
        excess = np.abs(joint_cdf(gen, k, T, S) - T * S) - psi_bound(gen, k) * T * S
        worst = max(worst, float(excess.max()))
    return Invariant("mixing.joint_law_psi_bound", worst, th.psi_slack,
                     detail=f"max |F_k - ts| - psi(k) ts over k <= {th.psi_lags}")


def check_geometric_psi(gen: MarkovUniformGenerator) -> Invariant:
    prof = psi_profile(gen)
    return Invariant("mixing.psi_geometric", prof.geometric_rate, 1.0, "<",
                     detail=f"block {prof.block}, contraction {prof.rho!r}")


def check_limit_covariance(gen: MarkovUniformGenerator, cfg: ExperimentConfig) -> List[Invariant]:
    cov = limit_covariance(gen, cfg.tail_tol)
    grid = build_gaussian_grid(cov, cfg.n_cells)
    resid = float(np.abs(grid.factor @ grid.factor.T - grid.increment_cov).max())
    return [
        Invariant("mixing.limit_covariance_tail", cov.tail_bound, cfg.tail_tol, detail=f"k_max = {cov.k_max}"),
        Invariant("limitlaw.increment_cov_psd", max(0.0, -grid.lambda_min), cfg.thresholds.psd_tol,
                  detail=f"lambda_min = {grid.lambda_min!r}"),
        Invariant("limitlaw.cholesky_residual", resid, grid.jitter + cfg.thresholds.psd_tol,
                  detail=f"jitter = {grid.jitter!r}"),
    ]


def probe_slope(gen: MarkovUniformGenerator, sets, exponents, sizes, reps: int, stream: int) -> tuple:
    """Least-squares slope of log ratio against log n, with the ratios."""
    ratios = [moment_bound_probe(gen, sets, exponents, n, reps, stream=stream).ratio for n in sizes]
    slope = float(np.polyfit(np.log(sizes), np.log(ratios), 1)[0])
    return slope, ratios


def check_moment_probe(gen: MarkovUniformGenerator, cfg: ExperimentConfig) -> List[Invariant]:
    th = cfg.thresholds
    out = []
    for i, (label, sets, ls) in enumerate(PROBE_PATTERNS):
        slope, ratios = probe_slope(gen, sets, ls, th.probe_sizes, th.probe_reps, stream=100 + i)
        out.append(Invariant(f"empirical.moment_ratio_slope{label}", slope, th.probe_slope,
                             detail="ratios " + " ".join(f"{r:.4g}" for r in ratios)))
    return out


def tube_ratios(model, multiplicity: int = 3, deltas=(1 / 16, 1 / 32, 1 / 64, 1 / 128)) -> list:
    masses = [diagonal_tube_mass(model, multiplicity, d) for d in deltas]
    return [b / a for a, b in zip(masses, masses[1:])]


def check_tube(cfg: ExperimentConfig) -> Invariant:
    r = tube_ratios(brownian_bridge())
    return Invariant("covariance.bridge_tube_decay", max(r), cfg.thresholds.tube_factor,
                     detail="ratios " + " ".join(f"{x:.4f}" for x in r))


def check_variation(cfg: ExperimentConfig) -> Invariant:
    a, b = variation_estimate(brownian_bridge(), 64), variation_estimate(brownian_bridge(), 128)
    return Invariant("covariance.bridge_variation_stable", abs(b - a) / b, cfg.thresholds.variation_rtol)


def check_seminorms(cfg: ExperimentConfig) -> List[Invariant]:
    th = cfg.thresholds
    one = GridKernel(np.ones(8))
    out = [
        Invariant("kernels.wiener_unit_seminorm", abs(math.sqrt(seminorm_sq(one, wiener())) - 1.0), th.seminorm_tol),
        Invariant("kernels.bridge_constant_seminorm", math.sqrt(max(seminorm_sq(one, brownian_bridge()), 0.0)),
                  th.seminorm_tol),
    ]
    rng = make_rng(cfg.seed, STREAM_BATTERY, 1)
    worst = 0.0
    for d, N in ((1, 16), (2, 12), (3, 6)):
        for _ in range(10):
            c = rng.standard_normal((N,) * d)
            if d > 1:
                c = symmetrize(GridKernel(c)).coeffs.copy()
                idx = np.indices(c.shape)
                c[np.any([idx[i] == idx[j] for i in range(d) for j in range(i + 1, d)], axis=0)] = 0.0
            f = GridKernel(c)
            target = isometry_factor(d) * l2_norm_sq(f)
            worst = max(worst, abs(seminorm_sq(f, wiener()) - target) / target)
    out.append(Invariant("kernels.wiener_isometry", worst, th.isometry_rtol,
                         detail="symmetric diagonal-vanishing kernels, d = 1, 2, 3"))
    return out


def check_embedding(gen: MarkovUniformGenerator, cfg: ExperimentConfig) -> Invariant:
    cov = limit_covariance(gen, cfg.tail_tol)
    model = mixed_from_generator(gen, max(cov.k_max, 1))
    rng = make_rng(cfg.seed, STREAM_BATTERY, 2)
    worst = 0.0
    for d, N in ((1, 16), (2, 8), (3, 6)):
        C = embedding_constant(d, model.b_sup)
        for _ in range(20):
            f = GridKernel(rng.standard_normal((N,) * d))
            worst = max(worst, seminorm_sq(f, model) / (C * combined_norm_sq(f)))
    return Invariant("kernels.norm_embedding", worst, 1.0, detail="seminorm_sq / (C * combined_norm_sq)")


def check_kernel(cfg: ExperimentConfig) -> List[Invariant]:
    out = []
    k = analytic_kernel(cfg)
    if cfg.kernel.project:
        defect = degeneracy_defect(k if k is not None else grid_kernel(cfg))
        out.append(Invariant("kernels.degeneracy_defect", defect, cfg.thresholds.degeneracy_tol))
    return out


def check_msi_mean(gen: MarkovUniformGenerator, cfg: ExperimentConfig) -> Invariant:
    k = grid_kernel(cfg)
    grid = build_gaussian_grid(limit_covariance(gen, cfg.tail_tol), cfg.n_cells)
    x = sample_msi(k, grid, cfg.reps, cfg.seed, cfg.threads)
    exact = msi_mean(k, grid)
    se = float(x.std(ddof=1) / math.sqrt(x.size))
    z = abs(float(x.mean()) - exact) / se if se > 0 else abs(float(x.mean()) - exact)
    return Invariant("limitlaw.msi_mean", z, cfg.thresholds.mean_z,
                     detail=f"sample {float(x.mean())!r} vs exact {exact!r}")


# --- driver --------------------------------------------------------------------


def _guard(name: str, fn: Callable, *args) -> list:
    """Run a check; library errors become failing entries instead of aborting."""
    try:
        res = fn(*args)
    except CanonStatError as exc:
        return [Invariant(name, None, 0.0, error=f"{type(exc).__name__}: {exc}")]
    return res if isinstance(res, list) else [res]


GENERATOR_CHECKS = (
    ("mixing.joint_law_psi_bound", check_psi_consequence),
    ("mixing.psi_geometric", check_geometric_psi),
    ("mixing.limit_covariance", check_limit_covariance),
    ("empirical.moment_ratio_slope", check_moment_probe),
    ("kernels.norm_embedding", check_embedding),
    ("limitlaw.msi_mean", check_msi_mean),
)


def run_battery(cfg: ExperimentConfig, skip_probe: bool = False) -> List[Invariant]:
    results = [check_generator(cfg)]
    gen = build_generator(cfg) if not cfg.generator.problems else None
    results += _guard("empirical.single_draw_moment", check_single_draw, cfg)
    results += _guard("covariance.bridge_tube_decay", check_tube, cfg)
    results += _guard("covariance.bridge_variation_stable", check_variation, cfg)
    results += _guard("kernels.seminorm_identities", check_seminorms, cfg)
    results += _guard("kernels.degeneracy_defect", check_kernel, cfg)
    for name, fn in GENERATOR_CHECKS:
        if skip_probe and fn is check_moment_probe:
            continue
        if gen is None:
            results.append(Invariant(name, None, 0.0, detail="skipped: invalid generator"))
        else:
            args = (gen,) if fn is check_geometric_psi else (gen, cfg)
            results += _guard(name, fn, *args)
    return results


def tolerance_sweep(results: List[Invariant], factors) -> list:
    """Failures as every bound is scaled by each factor; onset is monotone in the factor."""
    rows = []
    for f in sorted(factors, reverse=True):
        failing = [r.name for r in results if r.holds(f) is False]
        rows.append({"factor": float(f), "n_fail": len(failing), "failing": failing})
    return rows


def verify_report(cfg: ExperimentConfig, skip_probe: bool = False) -> dict:
    results = run_battery(cfg, skip_probe=skip_probe)
    entries = [r.as_dict() for r in results]
    for e, r in zip(entries, results):
        onset = [f for f in sorted(cfg.thresholds.sweep, reverse=True) if r.holds(f) is False]
        e["failure_onset"] = onset[0] if onset else None
    n_fail = sum(e["verdict"] == "fail" for e in entries)
    return {
        "invariants": entries,
        "sweep": tolerance_sweep(results, cfg.thresholds.sweep),
        "n_fail": n_fail,
        "n_skip": sum(e["verdict"] == "skip" for e in entries),
        "pass": n_fail == 0 and all(e["verdict"] != "skip" for e in entries),
    }
