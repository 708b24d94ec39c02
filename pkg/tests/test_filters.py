import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from covshift.errors import InputError, ParameterError
from covshift.filters import (FilterSpec, apply_spectral, apply_to_vector, filter_eval, format_filter,
                              parse_filter, residual_eval, shifted_quotient_eval, sym_eig,
                              verify_qualification)

TIK, CUT = FilterSpec.tikhonov(), FilterSpec.cutoff()
ALL = [TIK, CUT] + [FilterSpec.iterated(nu) for nu in range(1, 6)]
GRID = np.geomspace(1e-6, 1.0, 50)


def random_psd(rng, n, rank=None):
    B = rng.normal(size=(n, rank or n))
    A = B @ B.T
    return A / np.linalg.norm(A, 2)


def test_filter_examples():
    assert filter_eval(TIK, 1.0, 1.0) == 0.5
    assert filter_eval(FilterSpec.iterated(2), 1.0, 1.0) == pytest.approx(0.75, abs=1e-15)
    assert filter_eval(CUT, 0.5, 0.25) == 0.0
    assert filter_eval(FilterSpec.iterated(3), 0.2, 0.0) == pytest.approx(3 / 0.2)


def test_residual_examples():
    assert residual_eval(TIK, 1.0, 1.0) == 0.5
    assert residual_eval(FilterSpec.iterated(2), 1.0, 1.0) == 0.25
    assert residual_eval(CUT, 0.5, 1.0) == 0.0
    assert residual_eval(CUT, 0.5, 0.1) == 1.0


def test_shifted_quotient_examples():
    assert shifted_quotient_eval(TIK, 1.0, 1.0) == -0.5
    assert shifted_quotient_eval(TIK, 1.0, 0.0) == -1.0
    assert shifted_quotient_eval(CUT, 0.5, 1.0) == 1.0
    assert shifted_quotient_eval(CUT, 0.5, 0.0) == 0.0
    nu, lam = 4, 0.3
    assert shifted_quotient_eval(FilterSpec.iterated(nu), lam, 0.0) == pytest.approx(-nu * (nu + 1) / (2 * lam ** 2))


@pytest.mark.parametrize("f", ALL, ids=str)
def test_quotient_definition(f):
    lam = 0.07
    t = np.geomspace(1e-3, 1, 40)
    g0 = filter_eval(f, lam, 0.0)
    np.testing.assert_allclose(shifted_quotient_eval(f, lam, t), (filter_eval(f, lam, t) - g0) / t,
                               rtol=1e-9, atol=1e-9)


def test_nonpositive_lambda():
    for func in (filter_eval, residual_eval, shifted_quotient_eval):
        with pytest.raises(ParameterError):
            func(TIK, 0.0, 1.0)
        with pytest.raises(ParameterError):
            func(TIK, -1.0, 1.0)
    with pytest.raises(InputError):
        filter_eval(TIK, 1.0, -1.0)


@pytest.mark.parametrize("f", ALL, ids=str)
def test_three_bounds(f):
    lam, t = np.meshgrid(GRID, GRID, indexing="ij")
    g0, gh, g1 = f.constants
    g = np.array([[filter_eval(f, l, x) for x in GRID] for l in GRID])
    r = np.array([[residual_eval(f, l, x) for x in GRID] for l in GRID])
    assert np.all(np.abs(r) <= g0 * (1 + 1e-12))
    assert np.all(np.sqrt(t) * np.abs(g) <= gh / np.sqrt(lam) * (1 + 1e-12))
    assert np.all(np.abs(g) <= g1 / lam * (1 + 1e-12))


def test_iterated_one_is_tikhonov():
    lam, t = np.meshgrid(GRID, np.concatenate([[0.0], GRID]))
    it1 = FilterSpec.iterated(1)
    for func in (filter_eval, residual_eval, shifted_quotient_eval):
        a, b = func(TIK, 1.0, 0.0), func(it1, 1.0, 0.0)
        assert a == b
        np.testing.assert_allclose([func(it1, l, x) for l, x in zip(lam.ravel(), t.ravel())],
                                   [func(TIK, l, x) for l, x in zip(lam.ravel(), t.ravel())], rtol=1e-12)


@pytest.mark.parametrize("f", [TIK] + [FilterSpec.iterated(nu) for nu in range(1, 6)], ids=str)
def test_residual_identity(f):
    for lam in (1e-4, 0.1, 1.0):
        # t g + r = 1 is the identity g = (1 - r) / t without the cancellation at small t
        total = GRID * filter_eval(f, lam, GRID) + residual_eval(f, lam, GRID)
        np.testing.assert_allclose(total, 1.0, rtol=0, atol=1e-12)


@given(st.floats(1e-6, 1.0), st.floats(0.0, 1.0), st.integers(1, 6))
def test_iterated_matches_textbook_form(lam, t, nu):
    f = FilterSpec.iterated(nu)
    if t > 1e-3:
        textbook = (1 - (lam / (lam + t)) ** nu) / t
        assert filter_eval(f, lam, t) == pytest.approx(textbook, rel=1e-9)
    assert 0 <= residual_eval(f, lam, t) <= 1


def test_constants_and_qualification():
    assert TIK.constants == (1.0, 0.5, 1.0) and TIK.qualification == 1.0
    f3 = FilterSpec.iterated(3)
    assert f3.constants == (1.0, math.sqrt(3), 3.0) and f3.qualification == 3.0
    assert CUT.constants == (1.0, 1.0, 1.0) and math.isinf(CUT.qualification)
    assert TIK.gamma_nu(1) == 1.0 and math.isinf(TIK.gamma_nu(2))


def test_verify_qualification():
    lam = t = np.geomspace(1e-3, 1, 25)
    assert verify_qualification(TIK, 1, lam, t)
    assert not verify_qualification(TIK, 2, lam, t)
    assert verify_qualification(FilterSpec.iterated(3), 3, lam, t)
    assert not verify_qualification(FilterSpec.iterated(3), 4, lam, t)
    assert verify_qualification(CUT, 7, lam, t)


def test_parse_round_trip():
    for text in ("tikhonov", "itik:3", "cutoff"):
        assert format_filter(parse_filter(text)) == text
    for bad in ("itik:0", "itik:x", "landweber"):
        with pytest.raises(InputError):
            parse_filter(bad)


def test_sym_eig_examples(rng):
    d = sym_eig([[2.0]])
    assert d.eigenvalues.tolist() == [2.0] and abs(d.eigenvectors[0, 0]) == 1.0
    assert sym_eig(np.eye(2)).eigenvalues.tolist() == [1.0, 1.0]
    A = random_psd(rng, 8)
    d = sym_eig(A)
    V, L = d.eigenvectors, d.eigenvalues
    assert np.all(np.diff(L) <= 0)
    assert np.linalg.norm(V @ np.diag(L) @ V.T - A) <= 1e-8 * np.linalg.norm(A)
    assert np.linalg.norm(V.T @ V - np.eye(8)) <= 1e-8
    with pytest.raises(InputError):
        sym_eig([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(InputError):
        sym_eig(np.ones((2, 3)))


def test_apply_spectral_examples(rng):
    np.testing.assert_allclose(apply_spectral(TIK, 1.0, [[2.0]]), [[1 / 3]])
    for f in ALL:
        np.testing.assert_allclose(apply_spectral(f, 0.3, np.eye(2)), filter_eval(f, 0.3, 1.0) * np.eye(2),
                                   atol=1e-15)
    A = random_psd(rng, 10)
    dense = np.linalg.inv(0.1 * np.eye(10) + A)
    out = apply_spectral(TIK, 0.1, A)
    assert np.linalg.norm(out - dense) <= 1e-10 * np.linalg.norm(dense)
    with pytest.raises(InputError):
        apply_spectral(TIK, 0.1, 5 * A, upper=1.0)
    with pytest.raises(InputError):
        apply_spectral(TIK, 0.1, A, mode="bogus")


@pytest.mark.parametrize("f", ALL, ids=str)
def test_apply_spectral_eigenvalues(rng, f):
    A = random_psd(rng, 9, rank=6)
    out = apply_spectral(f, 0.05, A)
    expected = np.sort(filter_eval(f, 0.05, np.clip(np.linalg.eigvalsh(A), 0, None)))
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(out)), expected, atol=1e-10 * max(1, expected.max()))


@pytest.mark.parametrize("f", [TIK, FilterSpec.iterated(2), FilterSpec.iterated(5)], ids=str)
@pytest.mark.parametrize("mode", ["filter", "residual", "shifted_quotient"])
def test_cholesky_path_matches_eigen_path(rng, f, mode):
    A = random_psd(rng, 30, rank=20)
    V = rng.normal(size=(30, 2))
    lam = 0.01
    chol = apply_to_vector(f, lam, A, V, mode)
    eig = apply_to_vector(f, lam, A, V, mode, decomposition=sym_eig(A))
    np.testing.assert_allclose(chol, eig, rtol=1e-8, atol=1e-8 * np.abs(eig).max())
    np.testing.assert_allclose(eig, apply_spectral(f, lam, A, mode) @ V, rtol=1e-8, atol=1e-8 * np.abs(eig).max())
