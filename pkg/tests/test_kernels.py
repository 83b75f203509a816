import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from canonstat import covariance as cv
from canonstat import kernels as kn
from canonstat import mixing as mx
from canonstat.errors import InputError, NumericError, SizeError


def grid_coeffs(d, n_max=6):
    return st.integers(2, n_max).flatmap(
        lambda n: arrays(float, (n,) * d, elements=st.floats(-5, 5, allow_subnormal=False))
    )


def set_partitions(items):
    """Brute-force set partitions, an oracle for the enumeration."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


# --- grid kernels --------------------------------------------------------------------


def test_cell_index_convention():
    np.testing.assert_array_equal(kn.cell_index([0.0, 0.25, 0.2500001, 1.0], 4), [0, 0, 1, 3])


def test_grid_kernel_validation():
    with pytest.raises(InputError):
        kn.GridKernel(np.zeros((3, 4)))
    with pytest.raises(NumericError):
        kn.GridKernel([[np.nan, 0], [0, 0]])


def test_grid_kernel_evaluation_and_arithmetic():
    k = kn.GridKernel([[1.0, 2.0], [3.0, 4.0]])
    assert k(0.1, 0.9) == 2.0
    np.testing.assert_array_equal(k(np.array([0.6, 0.2]), 0.3), [3.0, 1.0])
    assert ((2 * k) - k + k).coeffs[1, 1] == 8.0
    with pytest.raises(ValueError):
        k.coeffs[0, 0] = 7


def test_discretize_examples():
    np.testing.assert_allclose(kn.discretize(kn.rank1_kernel(), 2).coeffs, [[1 / 16, -1 / 16], [-1 / 16, 1 / 16]])
    c = kn.discretize(kn.AnalyticKernel(2, lambda s, t: np.full(np.broadcast(s, t).shape, 2.5)), 4).coeffs
    assert np.all(c == 2.5)


def test_discretization_is_cauchy_in_combined_norm():
    f = kn.cvm_kernel()
    gaps = []
    for n in (8, 16, 32, 64):
        coarse = np.repeat(np.repeat(kn.discretize(f, n).coeffs, 2, axis=0), 2, axis=1)
        gaps.append(kn.combined_norm_sq(kn.GridKernel(coarse) - kn.discretize(f, 2 * n)))
    assert all(b < 0.5 * a for a, b in zip(gaps, gaps[1:]))


# --- diagonal partitions ----------------------------------------------------------------


@pytest.mark.parametrize("d", range(1, 7))
def test_partitions_match_brute_force(d):
    parts = kn.enumerate_diagonal_partitions(d)
    brute = {tuple(sorted(tuple(sorted(b)) for b in p)) for p in set_partitions(list(range(1, d + 1)))}
    assert {p.blocks for p in parts} == brute
    assert len(parts) == kn.n_partitions(d)
    assert parts[0].is_main
    assert [p.blocks for p in parts[1:]] == sorted(p.blocks for p in parts[1:])


def test_partition_examples():
    assert [p.blocks for p in kn.enumerate_diagonal_partitions(2)] == [((1,), (2,)), ((1, 2),)]
    assert len(kn.enumerate_diagonal_partitions(3)) == 5
    with pytest.raises(SizeError):
        kn.enumerate_diagonal_partitions(7)
    with pytest.raises(InputError):
        kn.DiagonalPartition(((1, 2), (2, 3)))


def test_bell_numbers():
    assert [kn.n_partitions(d) for d in range(1, 8)] == [1, 2, 5, 15, 52, 203, 877]


# --- combined norm -------------------------------------------------------------------


def test_combined_norm_rank1_closed_form():
    # (1/12)^2 on the main square plus int (t - 1/2)^4 dt = 1/80 on the diagonal
    assert kn.combined_norm_sq(kn.discretize(kn.rank1_kernel(), 512)) == pytest.approx(1 / 144 + 1 / 80, rel=1e-4)
    assert kn.combined_norm_sq(kn.rank1_kernel(), quad_cells=512) == pytest.approx(1 / 144 + 1 / 80, rel=1e-4)


def test_combined_norm_zero():
    assert kn.combined_norm_sq(kn.zero_kernel(2)) == 0.0


def test_combined_norm_min_minus_st_projection_refines():
    f = kn.project_degenerate(kn.AnalyticKernel(2, lambda s, t: np.minimum(s, t) - s * t))
    a = kn.combined_norm_sq(f, quad_cells=64)
    b = kn.combined_norm_sq(f, quad_cells=128)

    def closed(s, t):
        return min(s, t) - s * t - s * (1 - s) / 2 - t * (1 - t) / 2 + 1 / 12

    main, _ = integrate.dblquad(lambda s, t: closed(t, s) ** 2, 0, 1, 0, 1)
    diag, _ = integrate.quad(lambda t: closed(t, t) ** 2, 0, 1)
    assert abs(a - b) / b < 0.01
    assert b == pytest.approx(main + diag, rel=0.01)


@given(grid_coeffs(3, n_max=4))
def test_combined_norm_grid_brute_force(c):
    N = c.shape[0]
    k = kn.GridKernel(c)
    total = 0.0
    for part in kn.enumerate_diagonal_partitions(3):
        bo = part.block_of()
        for idx in itertools.product(range(N), repeat=part.r):
            total += c[tuple(idx[b] for b in bo)] ** 2 / N**part.r
    assert kn.combined_norm_sq(k) == pytest.approx(total, rel=1e-10, abs=1e-12)


# --- projection ------------------------------------------------------------------------


def test_projection_examples():
    s, t = np.meshgrid(np.linspace(0, 1, 9), np.linspace(0, 1, 9))
    p = kn.project_degenerate(kn.rank1_raw())
    np.testing.assert_allclose(p(s, t), (s - 0.5) * (t - 0.5), atol=1e-6)
    p = kn.project_degenerate(kn.AnalyticKernel(2, lambda a, b: np.minimum(a, b) - a * b))
    expected = np.minimum(s, t) - s * t - s * (1 - s) / 2 - t * (1 - t) / 2 + 1 / 12
    np.testing.assert_allclose(p(s, t), expected, atol=1e-6)
    np.testing.assert_allclose(kn.project_degenerate(kn.cvm_raw())(s, t), kn.cvm_kernel()(s, t), atol=1e-6)


def test_projection_idempotent_on_degenerate():
    s, t = np.meshgrid(np.linspace(0, 1, 7), np.linspace(0, 1, 7))
    g = kn.cvm_kernel()
    np.testing.assert_allclose(kn.project_degenerate(g)(s, t), g(s, t), atol=1e-6)


def test_projection_three_variables():
    raw = kn.AnalyticKernel(3, lambda a, b, c: a * b * c + a * a)
    p = kn.project_degenerate(raw)
    x = np.array([0.1, 0.6, 0.9])
    np.testing.assert_allclose(p(x, x[::-1], 0.3), (x - 0.5) * (x[::-1] - 0.5) * (0.3 - 0.5), atol=1e-3)
    assert kn.degeneracy_defect(p, n_points=9, quad_cells=512) < 1e-3
    with pytest.raises(SizeError):
        kn.project_degenerate(kn.zero_kernel(5))


@given(grid_coeffs(2))
def test_grid_projection_centered_and_idempotent(c):
    p = kn.project_grid_degenerate(kn.GridKernel(c))
    np.testing.assert_allclose(p.coeffs.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(p.coeffs.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(kn.project_grid_degenerate(p).coeffs, p.coeffs, atol=1e-12)


def test_degeneracy_defect_detects_raw_kernel():
    assert kn.degeneracy_defect(kn.cvm_kernel()) < 1e-6
    assert kn.degeneracy_defect(kn.cvm_raw()) > 0.1


def test_kernel_asymmetry():
    assert kn.kernel_asymmetry(kn.cvm_kernel()) == 0.0
    assert kn.kernel_asymmetry(kn.AnalyticKernel(2, lambda s, t: s - t)) > 0.01


# --- seminorms -------------------------------------------------------------------------


def test_seminorm_examples():
    one = kn.GridKernel(np.ones(8))
    assert kn.seminorm_sq(one, cv.wiener()) == pytest.approx(1.0, abs=1e-15)
    assert abs(kn.seminorm_sq(one, cv.brownian_bridge())) <= 1e-10
    half = kn.GridKernel(np.r_[np.ones(4), np.zeros(4)])
    assert kn.seminorm_sq(half, cv.wiener()) == pytest.approx(0.5)


@given(grid_coeffs(2, n_max=5))
def test_seminorm_is_quadratic_form_moment(c):
    # Y'FY with Y ~ N(0, M): E (Y'FY)^2 = tr(FM)^2 + 2 tr(FMFM) for symmetric F
    F = 0.5 * (c + c.T)
    M = cv.increment_matrix(cv.brownian_bridge().phi, cv.uniform_edges(F.shape[0]))
    exact = np.trace(F @ M) ** 2 + 2 * np.trace(F @ M @ F @ M)
    assert kn.seminorm_sq(kn.GridKernel(F), cv.brownian_bridge()) == pytest.approx(exact, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("d,N", [(1, 16), (2, 10), (3, 6), (4, 4)])
def test_wiener_isometry_on_diagonal_free_kernels(d, N, rng):
    c = kn.symmetrize(kn.GridKernel(rng.standard_normal((N,) * d))).coeffs.copy()
    idx = np.indices(c.shape)
    for i, j in itertools.combinations(range(d), 2):
        c[idx[i] == idx[j]] = 0.0
    f = kn.GridKernel(c)
    target = kn.isometry_factor(d) * kn.l2_norm_sq(f)
    assert kn.seminorm_sq(f, cv.wiener()) == pytest.approx(target, rel=1e-10)


def test_seminorm_pairing_cap():
    with pytest.raises(SizeError):
        kn.seminorm_sq(kn.GridKernel(np.ones((2,) * 5)), cv.wiener())


def test_partition_count_embedding_bound_counterexample():
    # the bound max(1, sup|b|) * #partitions fails for a sign-changing step function
    gen = mx.MarkovUniformGenerator.two_state(0.7)
    model = cv.mixed_from_generator(gen, 80)
    f = kn.GridKernel(np.r_[np.ones(2), -np.ones(2)])
    sem = kn.seminorm_sq(f, model)
    assert sem == pytest.approx(4 * 7 / 12, rel=1e-9)
    assert sem > max(1.0, 4 / 3) * kn.n_partitions(1) * kn.combined_norm_sq(f)
    assert sem <= kn.embedding_constant(1, model.b_sup) * kn.combined_norm_sq(f)


@given(st.integers(1, 3).flatmap(lambda d: grid_coeffs(d, n_max=5 if d < 3 else 4)))
def test_norm_embedding(c):
    gen = mx.MarkovUniformGenerator.two_state(0.7)
    model = cv.mixed_from_generator(gen, 60)
    f = kn.GridKernel(c)
    C = kn.embedding_constant(f.d, model.b_sup)
    assert kn.seminorm_sq(f, model) <= C * kn.combined_norm_sq(f) * (1 + 1e-9) + 1e-12


def test_star_norm_dominates_and_fbm_embedding():
    # h = 3/4, f(t) = t^{-1/2} in L_{4/3}: int int |f f q| = (3/8) * 4 pi by a Beta integral
    model = cv.fbm(0.75)
    vals = [kn.star_norm_sq(lambda t: t**-0.5, model, n) for n in (128, 512, 2048)]
    exact = 1.5 * math.pi
    assert all(a < b < exact for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(exact, rel=0.05)
    g = kn.GridKernel(np.sin(np.arange(8.0)))
    assert kn.seminorm_sq(g, cv.brownian_bridge()) <= kn.star_norm_sq(lambda t: g(t), cv.brownian_bridge(), 8) + 1e-12


# --- contraction and serialization -------------------------------------------------------


@given(grid_coeffs(3, n_max=4), st.integers(1, 4))
def test_contract_increments_brute_force(c, reps):
    N = c.shape[0]
    incs = np.arange(reps * N, dtype=float).reshape(reps, N) % 3 - 1.0
    brute = np.einsum("ijk,ri,rj,rk->r", c, incs, incs, incs)
    np.testing.assert_allclose(kn.contract_increments(c, incs), brute, rtol=1e-12, atol=1e-10)


def test_grid_kernel_roundtrip(tmp_path, rng):
    k = kn.GridKernel(rng.standard_normal((5, 5, 5)))
    path = tmp_path / "k.txt"
    kn.save_grid_kernel(k, path)
    np.testing.assert_array_equal(kn.load_grid_kernel(path).coeffs, k.coeffs)


@pytest.mark.parametrize("text,match", [
    ("", "empty"),
    ("2\n", ":1:"),
    ("1 2\n0.5\n", "expected 2"),
    ("1 2\n0.5\nabc\n", ":3:"),
])
def test_grid_kernel_parse_errors(text, match):
    with pytest.raises(InputError, match=match):
        kn.parse_grid_kernel(text, "k")


def test_missing_kernel_file(tmp_path):
    with pytest.raises(InputError):
        kn.load_grid_kernel(tmp_path / "none.txt")
