import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from canonstat import empirical as em
from canonstat import kernels as kn
from canonstat import mixing as mx
from canonstat.errors import InputError, SizeError

unit_samples = arrays(float, st.integers(1, 40), elements=st.floats(0, 1))


@st.composite
def disjoint_sets(draw, max_sets=5):
    q = draw(st.integers(1, max_sets))
    cuts = sorted(draw(st.lists(st.floats(0, 1), min_size=2 * q, max_size=2 * q, unique=True)))
    sets = [(cuts[2 * j], cuts[2 * j + 1]) for j in range(q)]
    ls = draw(st.lists(st.integers(1, 6), min_size=q, max_size=q))
    return sets, ls


# --- empirical process --------------------------------------------------------------


@given(unit_samples)
def test_empirical_process_pinned(xs):
    path = em.EmpiricalPath.from_sample(xs)
    assert em.empirical_process(path, 0.0) == 0.0
    assert em.empirical_process(path, 1.0) == pytest.approx(0.0, abs=1e-12)


def test_empirical_process_values():
    path = em.EmpiricalPath.from_sample([0.1, 0.4, 0.4, 0.9])
    assert em.empirical_process(path, 0.4) == pytest.approx(2 * (0.75 - 0.4))
    assert em.increment(path, 0.1, 0.4) == pytest.approx(2 * (0.5 - 0.3))


@given(unit_samples, st.integers(2, 16))
def test_grid_increments_match_pointwise_increments(xs, N):
    path = em.EmpiricalPath.from_sample(xs)
    incs = em.grid_increments(xs, N)[0]
    edges = np.arange(N + 1) / N
    ref = [em.increment(path, a, b) for a, b in zip(edges[:-1], edges[1:])]
    np.testing.assert_allclose(incs, ref, atol=1e-12)
    assert incs.sum() == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("bad", [[], [0.5, 1.2], [np.nan]])
def test_sample_validation(bad):
    with pytest.raises(InputError):
        em.EmpiricalPath.from_sample(bad)


# --- V- and U-statistics ---------------------------------------------------------------


@given(unit_samples.filter(lambda x: x.size >= 2))
def test_cvm_kernel_v_statistic_is_classical_omega2(xs):
    # n int (F_n - t)^2 dt = 1/(12n) + sum (x_(i) - (2i - 1)/(2n))^2
    n = xs.size
    classical = 1 / (12 * n) + np.sum((np.sort(xs) - (2 * np.arange(1, n + 1) - 1) / (2 * n)) ** 2)
    v = em.v_statistic(em.EmpiricalPath.from_sample(xs), kn.cvm_kernel(), method="naive")
    assert v.value == pytest.approx(classical, rel=1e-9, abs=1e-12)


@given(unit_samples, st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_grid_equals_naive_for_degenerate_step_kernels(xs, N, seed):
    r = np.random.default_rng(seed)
    k = kn.project_grid_degenerate(kn.GridKernel(r.standard_normal((N, N))))
    path = em.EmpiricalPath.from_sample(xs)
    naive = em.v_statistic(path, k, method="naive").value
    grid = em.v_statistic(path, k, method="grid").value
    assert grid == pytest.approx(naive, rel=1e-9, abs=1e-9)


def test_grid_differs_from_naive_when_not_degenerate():
    xs = np.array([0.1, 0.2, 0.3])
    k = kn.GridKernel(np.ones((2, 2)))
    path = em.EmpiricalPath.from_sample(xs)
    assert em.v_statistic(path, k, method="naive").value == pytest.approx(3.0)
    assert em.v_statistic(path, k, method="grid").value == pytest.approx(0.0, abs=1e-12)


def test_three_variable_grid_route(rng):
    xs = rng.random(30)
    k = kn.project_grid_degenerate(kn.GridKernel(rng.standard_normal((4, 4, 4))))
    path = em.EmpiricalPath.from_sample(xs)
    assert em.v_statistic(path, k, method="grid").value == pytest.approx(
        em.v_statistic(path, k, method="naive").value, rel=1e-9)


def test_u_and_v_relation(rng):
    xs = rng.random(25)
    path = em.EmpiricalPath.from_sample(xs)
    h = kn.cvm_kernel()
    n = xs.size
    u = em.u_statistic(path, h)
    v = em.v_statistic(path, h, method="naive").value
    assert v == pytest.approx((2 * math.sqrt(math.comb(n, 2)) * u + h(xs, xs).sum()) / n)


def test_u_statistic_three_variables_brute_force(rng):
    xs = rng.random(9)
    f = kn.AnalyticKernel(3, lambda a, b, c: a * b - c)
    brute = sum(xs[i] * xs[j] - xs[k] for i in range(9) for j in range(i + 1, 9) for k in range(j + 1, 9))
    assert em.u_statistic(em.EmpiricalPath.from_sample(xs), f) == pytest.approx(brute / math.sqrt(math.comb(9, 3)))


def test_statistic_argument_checks():
    path = em.EmpiricalPath.from_sample(np.linspace(0, 1, 20))
    with pytest.raises(InputError):
        em.v_statistic(path, kn.cvm_kernel(), d=3)
    with pytest.raises(InputError):
        em.v_statistic(path, kn.cvm_kernel(), method="fast")
    big = em.EmpiricalPath.from_sample(np.linspace(0, 1, 20_000))
    with pytest.raises(SizeError):
        em.v_statistic(big, kn.cvm_kernel(), method="naive")


def test_cvm_mean_identity_finite_n():
    # E int S_n^2 = 1/6 for every n; grid route on 256 cells
    gen = mx.MarkovUniformGenerator.iid(2, seed=99)
    k = kn.discretize(kn.cvm_kernel(), 256)
    v = em.v_statistics_batch(mx.sample_paths(gen, 50, 20_000), k)
    assert abs(v.mean() - 1 / 6) < 4 * v.std() / math.sqrt(v.size)


# --- single-draw moment inequality ----------------------------------------------------------


@given(disjoint_sets())
def test_single_draw_moment_bound(args):
    sets, ls = args
    assert em.single_draw_moment(sets, ls) <= em.single_draw_bound(sets) * (1 + 1e-12)


@given(disjoint_sets(max_sets=3))
def test_single_draw_moment_by_integration(args):
    sets, ls = args
    x = (np.arange(200_000) + 0.5) / 200_000
    prod = np.ones_like(x)
    for (a, b), l in zip(sets, ls):
        ind = ((x > a) & (x <= b)).astype(float)
        prod *= (ind - (b - a)) ** l
    assert em.single_draw_moment(sets, ls) == pytest.approx(np.abs(prod).mean(), abs=2e-5)


def test_single_draw_argument_checks():
    with pytest.raises(InputError):
        em.single_draw_moment([(0, 0.5), (0.4, 0.6)], [1, 1])
    with pytest.raises(InputError):
        em.single_draw_moment([(0, 0.5)], [0])


# --- moment probe ---------------------------------------------------------------------------


def test_probe_second_moment_iid():
    # E S_n(A)^2 = P(A)(1 - P(A)) exactly
    gen = mx.MarkovUniformGenerator.iid(2, seed=5)
    res = em.moment_bound_probe(gen, [(0.0, 0.5)], [2], n=200, reps=20_000)
    assert abs(res.ratio - 0.5) < 4 * res.stderr


def test_probe_second_moment_markov():
    # limit variance of S(0, 1/2] for the two-state chain: C(1/2, 1/2) = 7/12
    gen = mx.MarkovUniformGenerator.two_state(0.7, seed=5)
    res = em.moment_bound_probe(gen, [(0.0, 0.5)], [2], n=2000, reps=10_000)
    assert abs(res.ratio - 2 * 7 / 12) < 4 * res.stderr + 2e-3


def test_probe_argument_checks():
    gen = mx.MarkovUniformGenerator.iid(2)
    with pytest.raises(InputError):
        em.moment_bound_probe(gen, [(0, 0.5)], [3], n=10, reps=2000)
    with pytest.raises(InputError):
        em.moment_bound_probe(gen, [(0, 0.5)], [2], n=10, reps=10)
