"""Regularized Radon-Nikodym derivative (density ratio) estimation.

The estimate applies a spectral filter ``g_lam`` of the empirical source
covariance ``T_N = S_N^* S_N`` to the empirical target mean embedding
``h = (1/M) sum_j K(., x'_j)``.  Because ``h`` is not in the range of
``S_N^*``, the computation splits ``g(t) = g(0) + t psi(t)``:

    g(T_N) h = g(0) h + S_N^* psi(S_N S_N^*) S_N h

and ``S_N S_N^*`` is just ``K_NN / N`` acting on ``R^N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from covshift.errors import InputError, ParameterError
from covshift.filters import FilterSpec, apply_to_vector, filter_eval
from covshift.kernels import KernelSpec, SampleSet, as_points, diag, expand, gram
from covshift.representer import RepresenterFunction, rkhs_distance
from covshift.source_theory import invert_monotone


@dataclass(frozen=True, eq=False)
class RatioEstimate:
    function: RepresenterFunction
    lam: float
    filter: FilterSpec
    clip_floor: float = 0.0
    clip_cap: Optional[float] = None

    def __post_init__(self):
        if self.clip_floor < 0:
            raise InputError("clip floor must be nonnegative")
        if self.clip_cap is not None and self.clip_cap < self.clip_floor:
            raise InputError("clip cap below clip floor")

    def __call__(self, points) -> np.ndarray:
        return self.function(points)


def _check_lambda(lam):
    if not (lam > 0) or not math.isfinite(lam):
        raise ParameterError(f"regularization parameter must be positive, got {lam}")


def _check_samples(*sets):
    for s in sets:
        if len(s) == 0:
            raise InputError("sample sets must be nonempty")


def target_mean_at(kernel: KernelSpec, source: SampleSet, target: SampleSet) -> np.ndarray:
    """``h_N[i] = (1/M) sum_j K(x_i, x'_j)``."""
    M = len(target)
    return expand(kernel, source.points, target.points, np.full(M, 1.0 / M))


def estimate_beta(source: SampleSet, target: SampleSet, kernel: KernelSpec,
                  filt: FilterSpec, lam: float, source_gram: np.ndarray | None = None) -> RatioEstimate:
    """Filter-regularized solution of ``S_N^* S_N beta = S_M^* S_M 1``.

    ``source_gram`` may pass a precomputed ``K_NN``.
    """
    _check_lambda(lam)
    _check_samples(source, target)
    N = len(source)
    K = gram(kernel, source) if source_gram is None else source_gram
    h = target_mean_at(kernel, source, target)
    q = apply_to_vector(filt, lam, K / N, h, mode="shifted_quotient")
    fn = RepresenterFunction(source.points, q, kernel, target.points,
                             target_block_scale=filter_eval(filt, lam, 0.0))
    return RatioEstimate(fn, lam, filt)


def kulsif_closed_form(source: SampleSet, target: SampleSet, kernel: KernelSpec,
                       lam: float) -> RatioEstimate:
    """Tikhonov estimate via a direct dense solve, independent of the filter machinery."""
    _check_lambda(lam)
    _check_samples(source, target)
    N, M = len(source), len(target)
    K = gram(kernel, source.points, source.points)
    h = gram(kernel, source.points, target.points).sum(axis=1) / M
    c = np.linalg.solve(K / N + lam * np.eye(N), h)
    fn = RepresenterFunction(source.points, -c / lam, kernel, target.points,
                             target_block_scale=1.0 / lam)
    return RatioEstimate(fn, lam, FilterSpec.tikhonov())


def evaluate(f: RepresenterFunction, x) -> np.ndarray:
    return f(x)


def clipped_values(est: RatioEstimate, points) -> np.ndarray:
    """Estimated ratio values clamped to ``[clip_floor, clip_cap]``."""
    pts = points.points if isinstance(points, SampleSet) else as_points(points)
    if pts.shape[0] == 0:
        return np.zeros(0)
    vals = est(pts)
    hi = np.inf if est.clip_cap is None else est.clip_cap
    return np.clip(vals, est.clip_floor, hi)


def rkhs_error(f: RepresenterFunction, g: RepresenterFunction) -> float:
    return rkhs_distance(f, g)


def _regularized_solver(K: np.ndarray, N: int, lam: float):
    cf = scipy.linalg.cho_factor(K / N + lam * np.eye(N), lower=True, check_finite=False)
    return lambda b: scipy.linalg.cho_solve(cf, b, check_finite=False)


def christoffel(source: SampleSet, kernel: KernelSpec, lam: float, x) -> np.ndarray | float:
    """Empirical regularized Christoffel function ``<K_x, (lam I + T_N)^{-1} K_x>``.

    Evaluated as ``(1/lam) [K(x, x) - k_x^T (lam I + K_NN/N)^{-1} k_x / N]``.
    Vectorized over the rows of ``x``; a single point returns a float.
    """
    _check_lambda(lam)
    _check_samples(source)
    single = np.ndim(x) <= 1 and np.size(x) == source.dim
    X = as_points(x, source.dim)
    N = len(source)
    solve = _regularized_solver(gram(kernel, source), N, lam)
    kx = gram(kernel, source.points, X)
    quad = np.einsum("ij,ij->j", kx, solve(kx)) / N
    out = (diag(kernel, X) - quad) / lam
    return float(out[0]) if single else out


def _covariance_spectrum(source: SampleSet, kernel: KernelSpec) -> np.ndarray:
    K = gram(kernel, source)
    return np.clip(np.linalg.eigvalsh(K / len(source)), 0.0, None)


def effective_dimension(source: SampleSet, kernel: KernelSpec, lam: float,
                        spectrum: np.ndarray | None = None) -> float:
    """``trace[(lam I + K/N)^{-1} K/N]``."""
    _check_lambda(lam)
    _check_samples(source)
    mu = _covariance_spectrum(source, kernel) if spectrum is None else spectrum
    return float(np.sum(mu / (mu + lam)))


def n_infinity(source: SampleSet, kernel: KernelSpec, lam: float, probe_points) -> float:
    """Largest Christoffel value over the probes; a lower bound for the supremum."""
    probes = probe_points.points if isinstance(probe_points, SampleSet) else as_points(probe_points, source.dim)
    if probes.shape[0] == 0:
        raise InputError("probe set must be nonempty")
    return float(np.max(christoffel(source, kernel, lam, probes)))


def lambda_star(source: SampleSet, kernel: KernelSpec) -> float:
    """Solve ``N_hat(lam) / lam = N`` for the empirical capacity threshold.

    ``N_hat(lam) / lam`` decreases strictly, from infinity at ``0+`` to zero.
    """
    _check_samples(source)
    N = len(source)
    mu = _covariance_spectrum(source, kernel)
    # ratio(lam) = N_hat(lam)/lam is decreasing; invert the increasing -ratio
    hi = 1.0
    while np.sum(mu / (mu + hi)) / hi >= N:
        hi *= 2.0
    lo = hi
    while np.sum(mu / (mu + lo)) / lo < N and lo > 1e-300:
        lo *= 0.5

    def neg_ratio(lam):
        return -np.sum(mu / (mu + lam)) / lam

    return invert_monotone(neg_ratio, -float(N), lo, hi, tol=1e-10 * N)
