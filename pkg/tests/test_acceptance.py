"""Acceptance battery: ten criteria at their stated sizes and tolerances.

Each test records a one-line PASS/FAIL summary, echoed at the end of the run.
Seeds are fixed once here and never tuned.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES

from canonstat import covariance as cv
from canonstat import kernels as kn
from canonstat import limitlaw as ll
from canonstat import mixing as mx
from canonstat.empirical import single_draw_bound, single_draw_moment, moment_bound_probe, v_statistics_batch
from canonstat.experiment.battery import PROBE_PATTERNS, tube_ratios

SEED_IID = 20240601
SEED_MARKOV = 20240602
REPS = 10_000
N_CELLS = 256


def record(number: int, ok: bool, summary: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {summary}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, summary


def simulate(gen, n, kernel, reps=REPS):
    out = [v_statistics_batch(mx.sample_paths(gen, n, min(1000, reps - s), stream=(0, b)), kernel)
           for b, s in enumerate(range(0, reps, 1000))]
    return np.concatenate(out)


@pytest.fixture(scope="module")
def cvm_grid():
    return kn.discretize(kn.cvm_kernel(), N_CELLS)


@pytest.fixture(scope="module")
def bridge_msi(cvm_grid):
    gen = mx.MarkovUniformGenerator.iid(2, seed=SEED_IID)
    grid = ll.build_gaussian_grid(mx.limit_covariance(gen), N_CELLS)
    return ll.sample_msi(cvm_grid, grid, REPS, SEED_IID)


def test_criterion_01_iid_cvm_pipeline(cvm_grid):
    gen = mx.MarkovUniformGenerator.iid(2, seed=SEED_IID)
    t0 = time.perf_counter()
    v = simulate(gen, 1000, cvm_grid)
    elapsed = time.perf_counter() - t0
    ok = abs(v.mean() - 1 / 6) <= 0.01 and elapsed <= 120
    record(1, ok, f"IID CvM n=1000: mean {v.mean():.5f} (1/6 +- 0.01), {elapsed:.1f}s (<= 120s)")


def test_criterion_02_limit_routes_agree(bridge_msi):
    es = ll.nystrom_eigens(kn.cvm_kernel(), 512, 200)
    eig = ll.sample_eigen_series(es, "V", REPS, SEED_IID)
    ks = ll.ks_distance(bridge_msi, eig)
    checks = [ks <= 0.02]
    parts = [f"KS {ks:.4f} (<= 0.02)"]
    for label, x in (("msi", bridge_msi), ("eigen", eig)):
        se = x.std(ddof=1) / math.sqrt(x.size)
        var = x.var(ddof=1)
        checks += [abs(x.mean() - 1 / 6) <= 3 * se, abs(var - 1 / 45) <= 0.1 / 45]
        parts.append(f"{label} mean {x.mean():.4f} (+-{3 * se:.4f}) var {var:.5f} (1/45 +- 10%)")
    record(2, all(checks), "; ".join(parts))


def test_criterion_03_iid_convergence(cvm_grid, bridge_msi):
    gen = mx.MarkovUniformGenerator.iid(2, seed=SEED_IID)
    v = simulate(gen, 2000, cvm_grid)
    ks = ll.ks_distance(v, bridge_msi)
    record(3, ks <= 0.03, f"IID n=2000 vs MSI: KS {ks:.4f} (<= 0.03)")


def test_criterion_04_markov_convergence(cvm_grid):
    gen = mx.MarkovUniformGenerator.two_state(0.7, seed=SEED_MARKOV)
    cov = mx.limit_covariance(gen, tail_tol=1e-12)
    spot = abs(cov.C(0.5, 0.5) - 7 / 12)
    msi = ll.sample_msi(cvm_grid, ll.build_gaussian_grid(cov, N_CELLS), REPS, SEED_MARKOV)
    v = simulate(gen, 2000, cvm_grid)
    ks = ll.ks_distance(v, msi)
    record(4, ks <= 0.05 and spot <= 1e-10,
           f"Markov 0.7/0.3 n=2000 vs MSI: KS {ks:.4f} (<= 0.05); |C(1/2,1/2) - 7/12| = {spot:.1e} (<= 1e-10)")


def test_criterion_05_nystrom():
    es = ll.nystrom_eigens(kn.cvm_kernel(), 512, 10)
    k = np.arange(1, 6)
    rel = np.abs(es.eigenvalues[:5] * (np.pi * k) ** 2 - 1.0)
    lam1 = ll.nystrom_eigens(kn.rank1_kernel(), 512, 1).eigenvalues[0]
    ok = rel.max() <= 0.01 and abs(lam1 - 1 / 12) <= 1e-3
    record(5, ok, f"CvM max rel err k<=5: {rel.max():.2e} (<= 1%); rank-1 lambda_1 {lam1:.6f} (1/12 +- 1e-3)")


def test_criterion_06_single_draw_moment():
    rng = np.random.default_rng(SEED_IID)
    failures, worst = 0, 0.0
    for _ in range(1000):
        q = int(rng.integers(1, 7))
        cuts = np.sort(rng.random(2 * q))
        sets = [(cuts[2 * j], cuts[2 * j + 1]) for j in range(q)]
        ls = rng.integers(1, 7, size=q)
        ratio = single_draw_moment(sets, ls) / single_draw_bound(sets)
        worst = max(worst, ratio)
        failures += ratio > 1.0
    record(6, failures == 0, f"1000 random configurations: {failures} failures, max LHS/bound {worst:.4f}")


def test_criterion_07_moment_boundedness():
    gen = mx.MarkovUniformGenerator.two_state(0.7, seed=SEED_MARKOV)
    sizes = (100, 200, 400, 800, 1600, 3200)
    t0 = time.perf_counter()
    slopes = {}
    for i, (label, sets, ls) in enumerate(PROBE_PATTERNS):
        ratios = [moment_bound_probe(gen, sets, ls, n, 20_000, stream=100 + i).ratio for n in sizes]
        slopes[label] = float(np.polyfit(np.log(sizes), np.log(ratios), 1)[0])
    elapsed = time.perf_counter() - t0
    ok = max(slopes.values()) <= 0.05 and elapsed <= 300
    desc = ", ".join(f"{k} {v:+.4f}" for k, v in slopes.items())
    record(7, ok, f"log-log slopes {desc} (<= 0.05), {elapsed:.0f}s (<= 300s)")


def test_criterion_08_tube_decay():
    ratios = tube_ratios(cv.brownian_bridge())
    record(8, max(ratios) <= 0.75,
           "bridge multiplicity-3 tube ratios " + ", ".join(f"{r:.4f}" for r in ratios) + " (<= 0.75)")


def test_criterion_09_seminorm_identities():
    one = kn.GridKernel(np.ones(16))
    w = math.sqrt(kn.seminorm_sq(one, cv.wiener()))
    b = math.sqrt(max(kn.seminorm_sq(one, cv.brownian_bridge()), 0.0))
    rng = np.random.default_rng(SEED_IID)
    worst = 0.0
    for d, N in ((1, 32), (2, 16), (3, 8)):
        for _ in range(5):
            c = rng.standard_normal((N,) * d)
            if d > 1:
                c = kn.symmetrize(kn.GridKernel(c)).coeffs.copy()
                idx = np.indices(c.shape)
                for i in range(d):
                    for j in range(i + 1, d):
                        c[idx[i] == idx[j]] = 0.0
            f = kn.GridKernel(c)
            target = kn.isometry_factor(d) * kn.l2_norm_sq(f)
            worst = max(worst, abs(kn.seminorm_sq(f, cv.wiener()) - target) / target)
    ok = w == 1.0 and b <= 1e-10 and worst <= 1e-10
    record(9, ok, f"Wiener ||1|| = {w!r}; bridge ||1|| = {b:.1e} (<= 1e-10); isometry rel err {worst:.1e} (<= 1e-10)")


def test_criterion_10_psi_consequence():
    gen = mx.MarkovUniformGenerator.two_state(0.7, seed=SEED_MARKOV)
    t = np.linspace(0.0, 1.0, 32)
    T, S = np.meshgrid(t, t, indexing="ij")
    violations = 0
    for k in range(1, 51):
        excess = np.abs(mx.joint_cdf(gen, k, T, S) - T * S) - mx.psi_bound(gen, k) * T * S
        violations += int(np.sum(excess > 1e-12))
    record(10, violations == 0, f"k <= 50 on a 32x32 grid: {violations} violations at 1e-12 slack")
