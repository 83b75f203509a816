"""End-to-end runs: sample V_n, sample the limit law, compare, tabulate norms.

Sample files are ``rep,value`` CSVs with repr-formatted floats; each has a JSON
sidecar carrying the run metadata (the only place a timestamp appears).
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import io
import json
import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..covariance import brownian_bridge, mixed_from_generator, wiener
from ..empirical import v_statistics_batch
from ..errors import ConsistencyError, InputError, NumericError, SizeError
from ..kernels import (
    AnalyticKernel,
    GridKernel,
    combined_norm_sq,
    cvm_kernel,
    cvm_raw,
    discretize,
    embedding_constant,
    load_grid_kernel,
    project_grid_degenerate,
    rank1_kernel,
    rank1_raw,
    seminorm_sq,
    zero_kernel,
)
from ..limitlaw import (
    BATCH,
    build_gaussian_grid,
    ks_distance,
    map_batches,
    msi_mean,
    nystrom_eigens,
    sample_eigen_series,
    sample_msi,
)
from ..mixing import MarkovUniformGenerator, limit_covariance, sample_paths
from .config import ExperimentConfig

log = logging.getLogger(__name__)

MAX_GRID_COEFFS = 2**24
QUANTILES = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)
# bumped whenever the corresponding numeric convention changes
POLICY_VERSIONS = {
    "rng": "pcg64-seedsequence-spawnkey/1",
    "batching": f"fixed-{BATCH}/1",
    "cell_index": "ceil(xN)-1-clipped/1",
    "v_statistic": "grid-increments/1",
    "limit_truncation": "psi-tail/1",
    "cholesky_jitter": "power-of-ten-escalation/1",
    "nystrom": "midpoint/1",
}

SIM_FILE = "simulate.csv"
MSI_FILE = "limit_msi.csv"
EIGEN_FILE = "limit_eigen.csv"
EIGENVALUES_FILE = "eigenvalues.csv"


# --- building blocks -----------------------------------------------------------


def build_generator(cfg: ExperimentConfig) -> MarkovUniformGenerator:
    return cfg.generator.build(seed=cfg.seed)


def analytic_kernel(cfg: ExperimentConfig) -> Optional[AnalyticKernel]:
    """The configured preset as an analytic kernel (None for grid files)."""
    p, proj = cfg.kernel.preset, cfg.kernel.project
    if p == "cvm":
        k = cvm_kernel() if proj else cvm_raw()
    elif p == "rank1":
        k = rank1_kernel() if proj else rank1_raw()
    elif p == "zero":
        k = zero_kernel(cfg.d)
    else:
        return None
    if k.d != cfg.d:
        raise InputError(f"kernel preset {p!r} is {k.d}-variate but d = {cfg.d}")
    return k


def grid_kernel(cfg: ExperimentConfig) -> GridKernel:
    if cfg.n_cells**cfg.d > MAX_GRID_COEFFS:
        raise SizeError(f"n_cells^d = {cfg.n_cells ** cfg.d} exceeds the grid budget {MAX_GRID_COEFFS}")
    k = analytic_kernel(cfg)
    if k is not None:
        return discretize(k, cfg.n_cells)
    g = load_grid_kernel(cfg.kernel.file)
    if g.d != cfg.d or g.n_cells != cfg.n_cells:
        raise InputError(
            f"kernel file {cfg.kernel.file} is d={g.d}, n_cells={g.n_cells}; config has d={cfg.d}, n_cells={cfg.n_cells}"
        )
    return project_grid_degenerate(g) if cfg.kernel.project else g


def kernel_fingerprint(k: GridKernel) -> str:
    return hashlib.sha256(np.ascontiguousarray(k.coeffs, dtype="<f8").tobytes()).hexdigest()[:16]


def require_finite(values, what: str) -> np.ndarray:
    values = np.asarray(values, float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise NumericError(f"{what}: {int(bad.sum())} non-finite values")
    return values


def metadata(cfg: ExperimentConfig, kind: str, k: GridKernel, **extra) -> dict:
    gen = cfg.generator
    meta = {
        "kind": kind,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "policies": POLICY_VERSIONS,
        "seed": cfg.seed,
        "generator": {"K": gen.K, "P": [list(r) for r in gen.P]},
        "kernel": {
            "preset": cfg.kernel.preset,
            "project": cfg.kernel.project,
            "file": cfg.kernel.file,
            "fingerprint": kernel_fingerprint(k),
        },
        "d": cfg.d,
        "n_cells": cfg.n_cells,
        "reps": cfg.reps,
    }
    meta.update(extra)
    return meta


# --- file i/o ------------------------------------------------------------------


def format_samples(values) -> str:
    buf = io.StringIO()
    buf.write("rep,value\n")
    for i, v in enumerate(values):
        buf.write(f"{i},{float(v)!r}\n")
    return buf.getvalue()


def write_samples(path: Path, values) -> None:
    path.write_text(format_samples(require_finite(values, str(path))))


def read_samples(path: Path) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if not rows or rows[0] != ["rep", "value"]:
        raise InputError(f"{path}:1: expected header 'rep,value'")
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        try:
            rep, val = int(row[0]), float(row[1])
        except (ValueError, IndexError):
            raise InputError(f"{path}:{lineno}: malformed row {row!r}") from None
        if rep != lineno - 2:
            raise InputError(f"{path}:{lineno}: replication index {rep} out of order")
        out.append(val)
    return require_finite(out, str(path))


def write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_sidecar(path: Path, meta: dict) -> None:
    meta = dict(meta, timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"))
    write_json(path.with_suffix(".json"), meta)


def read_sidecar(path: Path) -> dict:
    side = path.with_suffix(".json")
    try:
        return json.loads(side.read_text())
    except OSError as exc:
        raise InputError(f"cannot read metadata {side}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{side}:{exc.lineno}: invalid JSON") from None


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- operations ----------------------------------------------------------------


def simulate_values(cfg: ExperimentConfig, k: Optional[GridKernel] = None) -> np.ndarray:
    """V_n replications by the grid route; batch b uses path stream (0, b)."""
    gen = build_generator(cfg)
    k = grid_kernel(cfg) if k is None else k

    def one(b, size):
        return v_statistics_batch(sample_paths(gen, cfg.n, size, stream=(0, b)), k)

    return require_finite(map_batches(one, cfg.reps, cfg.threads), "V_n replications")


def run_simulate(cfg: ExperimentConfig) -> Path:
    k = grid_kernel(cfg)
    values = simulate_values(cfg, k)
    out = _outdir(cfg) / SIM_FILE
    write_samples(out, values)
    write_sidecar(out, metadata(cfg, "simulate", k, n=cfg.n))
    log.info("simulate: %d replications -> %s", cfg.reps, out)
    return out


def run_limit(cfg: ExperimentConfig) -> dict:
    """MSI replications; for IID bivariate symmetric kernels also the eigen series."""
    gen = build_generator(cfg)
    k = grid_kernel(cfg)
    cov = limit_covariance(gen, cfg.tail_tol)
    grid = build_gaussian_grid(cov, cfg.n_cells)
    msi = require_finite(sample_msi(k, grid, cfg.reps, cfg.seed, cfg.threads), "MSI replications")
    outdir = _outdir(cfg)
    paths = {"msi": outdir / MSI_FILE}
    write_samples(paths["msi"], msi)
    extra = {
        "k_max": cov.k_max,
        "tail_bound": cov.tail_bound,
        "jitter": grid.jitter,
        "lambda_min": grid.lambda_min,
        "msi_mean_exact": msi_mean(k, grid),
    }
    symmetric = cfg.d == 2 and bool(np.array_equal(k.coeffs, k.coeffs.T))
    if gen.is_iid and symmetric:
        source = analytic_kernel(cfg) or k
        es = nystrom_eigens(source, cfg.nystrom_cells, cfg.k_terms)
        eig = require_finite(sample_eigen_series(es, "V", cfg.reps, cfg.seed, cfg.threads), "eigen-series replications")
        paths["eigen"] = outdir / EIGEN_FILE
        write_samples(paths["eigen"], eig)
        paths["eigenvalues"] = outdir / EIGENVALUES_FILE
        lines = ["k,lambda"] + [f"{i},{float(v)!r}" for i, v in enumerate(require_finite(es.eigenvalues, "eigenvalues"), 1)]
        paths["eigenvalues"].write_text("\n".join(lines) + "\n")
        extra.update(nystrom_cells=cfg.nystrom_cells, k_terms=es.K_terms, kernel_trace=es.trace)
    write_sidecar(paths["msi"], metadata(cfg, "limit", k, **extra))
    log.info("limit: k_max=%d jitter=%.1e -> %s", cov.k_max, grid.jitter, outdir)
    return paths


def _se_var(x: np.ndarray) -> float:
    c = x - x.mean()
    m2, m4 = float(np.mean(c**2)), float(np.mean(c**4))
    return math.sqrt(max(m4 - m2 * m2, 0.0) / x.size)


def summarize(x: np.ndarray) -> dict:
    return {
        "mean": float(x.mean()),
        "se_mean": float(x.std(ddof=1) / math.sqrt(x.size)),
        "var": float(x.var(ddof=1)),
        "se_var": _se_var(x),
        "quantiles": {f"{q:g}": float(v) for q, v in zip(QUANTILES, np.quantile(x, QUANTILES))},
        "size": int(x.size),
    }


def check_consistency(sim_meta: dict, lim_meta: dict) -> None:
    for key in ("d", "n_cells"):
        if sim_meta.get(key) != lim_meta.get(key):
            raise ConsistencyError(f"{key} differs: simulate {sim_meta.get(key)!r} vs limit {lim_meta.get(key)!r}")
    ks, kl = sim_meta.get("kernel", {}), lim_meta.get("kernel", {})
    if ks.get("fingerprint") != kl.get("fingerprint"):
        raise ConsistencyError(
            f"kernel differs: simulate {ks.get('preset')}/{ks.get('fingerprint')} vs limit {kl.get('preset')}/{kl.get('fingerprint')}"
        )
    if sim_meta.get("generator") != lim_meta.get("generator"):
        raise ConsistencyError("generator differs between simulate and limit outputs")


def compare_samples(sim: np.ndarray, lim: np.ndarray, threshold: float, eigen: Optional[np.ndarray] = None) -> dict:
    s, l = summarize(sim), summarize(lim)
    ks = ks_distance(sim, lim)
    report = {
        "ks": ks,
        "ks_threshold": threshold,
        "quantiles_sim": s["quantiles"],
        "quantiles_limit": l["quantiles"],
        "mean_sim": s["mean"],
        "mean_limit": l["mean"],
        "se_mean_sim": s["se_mean"],
        "se_mean_limit": l["se_mean"],
        "var_sim": s["var"],
        "var_limit": l["var"],
        "se_var_sim": s["se_var"],
        "se_var_limit": l["se_var"],
        "reps_sim": s["size"],
        "reps_limit": l["size"],
        "pass": bool(ks <= threshold),
    }
    if eigen is not None:
        report["ks_limit_routes"] = ks_distance(lim, eigen)
    return report


def run_compare(cfg: ExperimentConfig, regenerate: bool = False) -> dict:
    """Compare simulate and limit outputs in ``cfg.out``, producing them if absent."""
    outdir = _outdir(cfg)
    sim_path, msi_path = outdir / SIM_FILE, outdir / MSI_FILE
    if regenerate or not sim_path.exists():
        run_simulate(cfg)
    if regenerate or not msi_path.exists():
        run_limit(cfg)
    check_consistency(read_sidecar(sim_path), read_sidecar(msi_path))
    eig_path = outdir / EIGEN_FILE
    eigen = read_samples(eig_path) if eig_path.exists() else None
    threshold = cfg.thresholds.ks_iid if cfg.generator.is_iid else cfg.thresholds.ks_dependent
    report = compare_samples(read_samples(sim_path), read_samples(msi_path), threshold, eigen)
    write_json(outdir / "compare.json", report)
    return report


def norms_table(cfg: ExperimentConfig) -> list:
    """Seminorm, combined norm and embedding bound of the kernel against each model."""
    k = grid_kernel(cfg)
    gen = build_generator(cfg)
    cov = limit_covariance(gen, cfg.tail_tol)
    models = [("wiener", wiener(), 0.0), ("brownian_bridge", brownian_bridge(), 0.0)]
    mixed = mixed_from_generator(gen, cov.k_max)
    models.append((f"chain(K={gen.K})", mixed, mixed.b_sup))
    comb = combined_norm_sq(k)
    rows = []
    for name, model, b_sup in models:
        rows.append({
            "model": name,
            "seminorm_sq": seminorm_sq(k, model),
            "combined_norm_sq": comb,
            "embedding_bound": embedding_constant(cfg.d, b_sup) * comb,
        })
    return rows


def format_norms(rows: list) -> str:
    lines = ["model,seminorm_sq,combined_norm_sq,embedding_bound"]
    for r in rows:
        lines.append(f"{r['model']},{r['seminorm_sq']!r},{r['combined_norm_sq']!r},{r['embedding_bound']!r}")
    return "\n".join(lines) + "\n"


def run_norms(cfg: ExperimentConfig) -> str:
    text = format_norms(norms_table(cfg))
    (_outdir(cfg) / "norms.csv").write_text(text)
    return text
