import numpy as np
import pytest

from covshift.errors import InputError, ParameterError
from covshift.filters import FilterSpec
from covshift.iwrls import (WeightVector, WeightedProblem, estimated_weights, fit, fit_embedded, fit_path,
                            rkhs_norm)
from covshift.kernels import KernelSpec, SampleSet, gram
from covshift.representer import RepresenterFunction, combine, inner
from covshift.rn_estimator import clipped_values, estimate_beta

K5 = KernelSpec.gaussian(0.5)
K1 = KernelSpec.gaussian(1.0)
TIK = FilterSpec.tikhonov()


def labeled(rng, n, noise=0.1):
    x = rng.uniform(-1, 1, (n, 1))
    return SampleSet(x, np.sin(3 * x[:, 0]) + noise * rng.standard_normal(n))


def coeffs(res):
    return res.function.expansion()[1]


def test_single_point_example():
    train = SampleSet(np.zeros((1, 1)), np.array([2.0]))
    res = fit(train, WeightVector(np.ones(1)), K1, TIK, 1.0)
    assert res(np.zeros(1))[0] == pytest.approx(1.0, rel=1e-14)


def test_zero_weights(rng):
    train = labeled(rng, 8)
    res = fit(train, WeightVector(np.zeros(8)), K5, TIK, 0.1)
    assert np.all(res(np.linspace(-1, 1, 5)) == 0)
    assert res.rkhs_norm == 0.0


def test_unweighted_dense_oracle(rng):
    train = labeled(rng, 30)
    n, lam = 30, 0.01
    K = gram(K5, train)
    alpha = np.linalg.solve(K / n + lam * np.eye(n), train.labels / n)
    res = fit(train, WeightVector.ones(n), K5, TIK, lam)
    assert np.allclose(coeffs(res), alpha, rtol=0, atol=1e-10 * np.max(np.abs(alpha)))


@pytest.mark.parametrize("trial", range(20))
def test_weighted_dense_oracle(trial):
    rng = np.random.default_rng([31, trial])
    n = int(rng.integers(2, 51))
    train = labeled(rng, n)
    b = rng.uniform(0, 3, n)
    lam = float(10 ** rng.uniform(-3, 0))
    K = gram(K5, train)
    a = np.linalg.solve(b[:, None] * K / n + lam * np.eye(n), b * train.labels / n)
    res = fit(train, WeightVector(b), K5, TIK, lam)
    assert np.allclose(coeffs(res), a, rtol=1e-8, atol=1e-8 * np.max(np.abs(a)))


def test_itik1_is_tikhonov(rng):
    train = labeled(rng, 25)
    w = WeightVector(rng.uniform(0, 2, 25))
    a = coeffs(fit(train, w, K5, TIK, 0.03))
    b = coeffs(fit(train, w, K5, FilterSpec.iterated(1), 0.03))
    assert np.allclose(a, b, rtol=0, atol=1e-10)


@pytest.mark.parametrize("nu", [1, 2, 3])
def test_literal_iteration_oracle(rng, nu):
    n, lam = 20, 0.05
    train = labeled(rng, n)
    b = rng.uniform(0.2, 2, n)
    K = gram(K5, train)
    A = lam * np.eye(n) + b[:, None] * K / n
    a = np.zeros(n)
    for _ in range(nu):
        a = np.linalg.solve(A, b * train.labels / n + lam * a)
    res = fit(train, WeightVector(b), K5, FilterSpec.iterated(nu), lam)
    assert np.allclose(coeffs(res), a, rtol=1e-8, atol=1e-8 * np.max(np.abs(a)))


@pytest.mark.parametrize("s", [0.5, 2.0])
def test_weight_scaling(rng, s):
    train = labeled(rng, 20)
    b = rng.uniform(0.1, 2, 20)
    x = np.linspace(-1, 1, 15)
    f1 = fit(train, WeightVector(b), K5, TIK, 0.02)(x)
    f2 = fit(train, WeightVector(s * b), K5, TIK, s * 0.02)(x)
    assert np.allclose(f1, f2, rtol=1e-10, atol=1e-12)


def test_zero_noise_residual_trend(rng):
    train = labeled(rng, 40, noise=0.0)
    lams = np.geomspace(1.0, 1e-6, 13)
    fits = fit_path(train, WeightVector.ones(40), K5, TIK, lams)
    res = [np.mean((f(train.points) - train.labels) ** 2) for f in fits]
    assert np.all(np.diff(res) < 0)


def test_fit_path_matches_single(rng):
    train = labeled(rng, 15)
    w = WeightVector(rng.uniform(0, 1, 15))
    for filt in (TIK, FilterSpec.iterated(2), FilterSpec.cutoff()):
        path = fit_path(train, w, K5, filt, [0.1, 0.01, 0.001])
        for r in path:
            one = fit(train, w, K5, filt, r.lam)
            assert np.allclose(coeffs(r), coeffs(one), rtol=1e-8, atol=1e-9)


def test_rkhs_norm_consistent(rng):
    train = labeled(rng, 20)
    for filt in (TIK, FilterSpec.iterated(3), FilterSpec.cutoff()):
        res = fit(train, WeightVector(rng.uniform(0, 2, 20)), K5, filt, 0.01)
        assert res.rkhs_norm == pytest.approx(rkhs_norm(res.function), rel=1e-8)


def test_errors(rng):
    train = labeled(rng, 4)
    with pytest.raises(ParameterError):
        fit(train, WeightVector.ones(4), K5, TIK, 0.0)
    with pytest.raises(InputError):
        WeightVector(np.array([1.0, -0.1]))
    with pytest.raises(InputError):
        WeightVector(np.array([1.0, np.nan]))
    with pytest.raises(InputError):
        fit(train, WeightVector.ones(3), K5, TIK, 0.1)
    with pytest.raises(InputError):
        fit(SampleSet(train.points), WeightVector.ones(4), K5, TIK, 0.1)


def test_embedded_exact_ratio_gives_exact_fit(rng):
    # a ratio estimate that is exactly a known function of x: compare against fit with those values
    train = labeled(rng, 20)
    src, tgt = SampleSet(rng.uniform(-1, 1, (30, 1))), SampleSet(rng.uniform(0, 1, (30, 1)))
    est = estimate_beta(src, tgt, K5, TIK, 0.1)
    w = WeightVector(clipped_values(est, train))
    direct = fit(train, w, K5, TIK, 0.01)
    emb = fit_embedded(train, src, tgt, K5, TIK, 0.01, TIK, 0.1)
    assert np.array_equal(coeffs(direct), coeffs(emb))


def test_embedded_all_clipped(rng):
    train = labeled(rng, 10)
    src = SampleSet(rng.uniform(-1, 1, (20, 1)))
    tgt = SampleSet(np.full((5, 1), 40.0))  # target far away: estimate <= 0 near the training set
    w, est = estimated_weights(train, src, tgt, K5, TIK, 1.0)
    assert np.all(w.values == 0)
    res = fit_embedded(train, src, tgt, K5, TIK, 0.1, TIK, 1.0)
    assert np.all(res(np.linspace(-1, 1, 9)) == 0)


def test_embedded_composition(rng):
    train = labeled(rng, 25)
    src, tgt = SampleSet(rng.uniform(-1, 1, (40, 1))), SampleSet(rng.normal(0.5, 0.3, (35, 1)))
    filt_rn = FilterSpec.iterated(2)
    est = estimate_beta(src, tgt, K5, filt_rn, 0.05)
    vals = np.clip(est(train.points), 0, None)
    manual = fit(train, WeightVector(vals), K5, FilterSpec.cutoff(), 0.01)
    emb = fit_embedded(train, src, tgt, K5, FilterSpec.cutoff(), 0.01, filt_rn, 0.05)
    assert np.allclose(coeffs(manual), coeffs(emb), rtol=0, atol=1e-12)


def test_rkhs_norm_examples(rng):
    assert rkhs_norm(RepresenterFunction.zero(K5)) == 0.0
    assert rkhs_norm(RepresenterFunction.from_expansion(K5, [0.0], [2.0])) == pytest.approx(2.0)
    A = rng.normal(size=(8, 1))
    w = rng.normal(size=8)
    f = RepresenterFunction.from_expansion(K5, A, w)
    naive = sum(w[i] * w[j] * np.exp(-(A[i, 0] - A[j, 0]) ** 2 / 0.5) for i in range(8) for j in range(8))
    assert rkhs_norm(f) ** 2 == pytest.approx(naive, rel=1e-10)


def test_rkhs_norm_with_target_block(rng):
    f = RepresenterFunction(rng.normal(size=(5, 1)), rng.normal(size=5), K5, rng.normal(size=(4, 1)), -0.7)
    A, w = f.expansion()
    G = gram(K5, A)
    assert rkhs_norm(f) == pytest.approx(np.sqrt(w @ G @ w), rel=1e-10)


def test_combine_and_inner(rng):
    f = RepresenterFunction.from_expansion(K5, rng.normal(size=(4, 1)), rng.normal(size=4))
    g = RepresenterFunction(rng.normal(size=(3, 1)), rng.normal(size=3), K5, rng.normal(size=(2, 1)), 0.4)
    h = combine([f, g], [2.0, -3.0])
    x = rng.normal(size=11)
    assert np.allclose(h(x), 2 * f(x) - 3 * g(x), atol=1e-12)
    assert inner(f, g) == pytest.approx(inner(g, f), rel=1e-12)
    with pytest.raises(InputError):
        combine([f], [1.0, 2.0])
    with pytest.raises(InputError):
        combine([], [])


def test_weighted_problem_reuse(rng):
    train = labeled(rng, 12)
    prob = WeightedProblem(train, WeightVector.ones(12), K5)
    a = prob.fit(FilterSpec.cutoff(), 0.01)
    b = prob.fit(TIK, 0.01)
    assert prob.decompose() is prob.decompose()
    assert a.lam == b.lam == 0.01
