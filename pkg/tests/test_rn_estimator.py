import numpy as np
import pytest

from covshift.errors import InputError, ParameterError
from covshift.filters import FilterSpec
from covshift.kernels import KernelSpec, SampleSet, gram
from covshift.representer import RepresenterFunction, inner
from covshift.rn_estimator import (RatioEstimate, christoffel, clipped_values, effective_dimension,
                                   estimate_beta, evaluate, kulsif_closed_form, lambda_star,
                                   n_infinity, rkhs_error)

K1 = KernelSpec.gaussian(1.0)
K5 = KernelSpec.gaussian(0.5)
TIK = FilterSpec.tikhonov()


def pts(rng, n, lo=-1.0, hi=1.0):
    return SampleSet(rng.uniform(lo, hi, (n, 1)))


def origin():
    return SampleSet(np.zeros((1, 1)))


def test_single_point_tikhonov():
    est = estimate_beta(origin(), origin(), K1, TIK, 1.0)
    assert est(np.zeros(1))[0] == pytest.approx(0.5, abs=1e-15)
    assert kulsif_closed_form(origin(), origin(), K1, 1.0)(np.zeros(1))[0] == pytest.approx(0.5, abs=1e-15)


def test_single_point_cutoff():
    est = estimate_beta(origin(), origin(), K1, FilterSpec.cutoff(), 0.5)
    assert est(np.zeros(1))[0] == pytest.approx(1.0, abs=1e-14)


def test_matches_closed_form_example(rng):
    src, tgt = pts(rng, 40), pts(rng, 40)
    x = rng.uniform(-1, 1, 100)
    a = estimate_beta(src, tgt, K5, TIK, 0.1)(x)
    b = kulsif_closed_form(src, tgt, K5, 0.1)(x)
    assert np.max(np.abs(a - b)) <= 1e-8


@pytest.mark.parametrize("trial", range(20))
def test_oracle_equivalence(trial):
    rng = np.random.default_rng([77, trial])
    N, M = rng.integers(1, 61, 2)
    lam = (1.0, 0.1, 0.01)[trial % 3]
    src, tgt = pts(rng, N), pts(rng, M, -0.5, 1.5)
    x = rng.uniform(-1.5, 1.5, 100)
    a = estimate_beta(src, tgt, K5, TIK, lam)(x)
    b = kulsif_closed_form(src, tgt, K5, lam)(x)
    assert np.max(np.abs(a - b)) <= 1e-8


def test_large_lambda_vanishes(rng):
    src, tgt = pts(rng, 10), pts(rng, 10)
    vals = kulsif_closed_form(src, tgt, K5, 1e9)(np.linspace(-1, 1, 7))
    assert np.max(np.abs(vals)) < 1e-8


def test_errors(rng):
    src = pts(rng, 5)
    with pytest.raises(ParameterError):
        estimate_beta(src, src, K5, TIK, 0.0)
    with pytest.raises(ParameterError):
        kulsif_closed_form(src, src, K5, -1.0)
    with pytest.raises(InputError):
        estimate_beta(SampleSet(np.zeros((0, 1))), src, K5, TIK, 0.1)
    with pytest.raises(ParameterError):
        christoffel(src, K5, 0.0, 0.0)
    with pytest.raises(ParameterError):
        effective_dimension(src, K5, -1.0)
    with pytest.raises(InputError):
        n_infinity(src, K5, 0.1, np.zeros((0, 1)))


def test_evaluate_examples(rng):
    assert evaluate(RepresenterFunction.zero(K5), np.array([0.3]))[0] == 0.0
    f = RepresenterFunction(np.zeros((1, 1)), [0.7], K5)
    x = np.array([0.4])
    assert evaluate(f, x)[0] == pytest.approx(0.7 * np.exp(-0.16 / 0.5), rel=1e-15)
    src, tgt = rng.normal(size=(6, 1)), rng.normal(size=(4, 1))
    c = rng.normal(size=6)
    g = RepresenterFunction(src, c, K5, tgt, 1.3)
    x = rng.normal(size=9)
    naive = []
    for xv in x:
        s = sum(c[i] * np.exp(-(xv - src[i, 0]) ** 2 / 0.5) for i in range(6)) / 6
        s += 1.3 * sum(np.exp(-(xv - tgt[j, 0]) ** 2 / 0.5) for j in range(4)) / 4
        naive.append(s)
    assert np.allclose(evaluate(g, x), naive, rtol=0, atol=1e-12)
    with pytest.raises(InputError):
        evaluate(g, np.zeros((2, 2)))


def test_clipped_values():
    f = RepresenterFunction.from_expansion(K5, [[0.0], [5.0], [10.0]], [-0.2, 0.5, 7.0])
    est = RatioEstimate(f, 1.0, TIK, clip_floor=0.0, clip_cap=5.0)
    assert np.allclose(clipped_values(est, np.array([0.0, 5.0, 10.0])), [0.0, 0.5, 5.0], atol=1e-12)
    plain = RatioEstimate(f, 1.0, TIK)
    assert np.allclose(clipped_values(plain, np.array([5.0])), f(np.array([5.0])))
    assert clipped_values(est, np.zeros((0, 1))).shape == (0,)
    with pytest.raises(InputError):
        RatioEstimate(f, 1.0, TIK, clip_floor=2.0, clip_cap=1.0)


def test_rkhs_error_examples(rng):
    f = RepresenterFunction.from_expansion(K5, [0.3], [2.5])
    g = RepresenterFunction.from_expansion(K5, [0.3], [-0.5])
    assert rkhs_error(f, f) == pytest.approx(0.0, abs=1e-7)
    assert rkhs_error(f, g) == pytest.approx(3.0, rel=1e-12)
    with pytest.raises(InputError):
        rkhs_error(f, RepresenterFunction.from_expansion(K1, [0.3], [1.0]))


def test_rkhs_error_naive_oracle(rng):
    f = RepresenterFunction(rng.normal(size=(7, 1)), rng.normal(size=7), K5, rng.normal(size=(3, 1)), 0.8)
    g = RepresenterFunction(rng.normal(size=(5, 1)), rng.normal(size=5), K5)

    def naive(a, b):
        A, w = a.expansion()
        B, v = b.expansion()
        return sum(w[i] * v[j] * np.exp(-(A[i, 0] - B[j, 0]) ** 2 / 0.5)
                   for i in range(len(w)) for j in range(len(v)))

    sq = naive(f, f) - 2 * naive(f, g) + naive(g, g)
    assert rkhs_error(f, g) ** 2 == pytest.approx(sq, rel=1e-10)


def test_christoffel_examples():
    assert christoffel(origin(), K1, 1.0, 0.0) == pytest.approx(0.5, rel=1e-14)
    src = SampleSet(np.array([[0.0], [0.4], [-0.3]]))
    lam = 1e6
    assert christoffel(src, K5, lam, 0.2) * lam == pytest.approx(1.0, rel=1e-5)


def test_christoffel_joint_span_oracle(rng):
    src = pts(rng, 12)
    lam, x = 0.05, np.array([[0.37]])
    N = len(src)
    # T_N restricted to span{K(., x_i), K(., x)} in the coordinates of that span
    Z = np.vstack([src.points, x])
    G = gram(K5, Z)
    S = G[:N, :]  # evaluation of basis elements at the sample points
    # operator (lam I + T_N) on coefficient vectors a: lam a + (1/N) e_i-expansion of S^T S a
    A = lam * G + S.T @ S / N
    e = np.zeros(N + 1)
    e[-1] = 1.0
    a = np.linalg.solve(A, G @ e)
    direct = float(e @ G @ a)
    assert christoffel(src, K5, lam, x) == pytest.approx(direct, rel=1e-9)


def test_christoffel_bounds_and_monotone(rng):
    src = pts(rng, 30)
    probes = np.linspace(-1.2, 1.2, 25)
    lams = np.geomspace(1e-4, 10, 12)
    vals = np.array([christoffel(src, K5, lam, probes) for lam in lams])
    assert np.all(vals > 0)
    assert np.all(vals <= (1.0 / lams)[:, None] * (1 + 1e-12))
    assert np.all(np.diff(vals, axis=0) < 0)


def test_effective_dimension(rng):
    assert effective_dimension(origin(), K1, 1.0) == pytest.approx(0.5)
    src = pts(rng, 10, -5, 5)
    assert effective_dimension(src, K1, 1e12) < 1e-10
    K = gram(K1, src)
    assert np.linalg.matrix_rank(K) == 10
    assert effective_dimension(src, K1, 1e-14) == pytest.approx(10, abs=1e-6)
    lams = np.geomspace(1e-5, 10, 20)
    d = [effective_dimension(src, K1, lam) for lam in lams]
    assert np.all(np.diff(d) < 0)


def test_n_infinity(rng):
    src = pts(rng, 15)
    p = np.array([[0.1]])
    assert n_infinity(src, K5, 0.1, p) == pytest.approx(christoffel(src, K5, 0.1, 0.1))
    same = np.full((4, 1), 0.1)
    assert n_infinity(src, K5, 0.1, same) == pytest.approx(christoffel(src, K5, 0.1, 0.1))
    grid = np.linspace(-1, 1, 21)
    assert n_infinity(src, K5, 0.1, grid) <= 1 / 0.1


def test_lambda_star(rng):
    src = pts(rng, 50)
    lam = lambda_star(src, K5)
    assert effective_dimension(src, K5, lam) / lam == pytest.approx(50, rel=1e-8)
