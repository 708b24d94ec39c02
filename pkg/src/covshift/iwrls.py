"""Importance-weighted regularized least squares with spectral filters.

For weights ``B = diag(beta)`` the approximant ``g_lam(S^* B S) S^* B y``
is computed through the symmetric matrix ``T = B^{1/2} K B^{1/2} / n``:

    f = sum_i a_i K(., x_i),   a = (1/n) B^{1/2} g_lam(T) B^{1/2} y,

which follows from ``g(A^* A) A^* = A^* g(A A^*)`` with ``A = B^{1/2} S``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from covshift.errors import InputError, ParameterError
from covshift.filters import FilterSpec, SpectralDecomposition, apply_to_vector, sym_eig
from covshift.kernels import KernelSpec, SampleSet, gram
from covshift.representer import RepresenterFunction, rkhs_norm  # noqa: F401  (re-exported)
from covshift.rn_estimator import RatioEstimate, clipped_values, estimate_beta


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Per-point importance weights.  ``source`` is ``"exact"``, ``"unit"`` or ``"estimated(...)"``."""

    values: np.ndarray
    source: str = "exact"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise InputError("weights must be finite")
        if np.any(v < 0):
            raise InputError("weights must be nonnegative; clip estimated weights upstream")
        object.__setattr__(self, "values", v)

    @classmethod
    def ones(cls, n: int) -> "WeightVector":
        return cls(np.ones(n), "unit")

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class FitResult:
    function: RepresenterFunction
    lam: float
    filter: FilterSpec
    rkhs_norm: float
    weights: WeightVector

    def __call__(self, points) -> np.ndarray:
        return self.function(points)


class WeightedProblem:
    """Shared state for fitting one weighted data set at several ``lam``.

    The Gram matrix is assembled once; the eigendecomposition of ``T`` is
    computed on first use by non-rational filters or by :meth:`decompose`.
    """

    def __init__(self, train: SampleSet, weights: WeightVector, kernel: KernelSpec,
                 K: np.ndarray | None = None):
        y = train.require_labels()
        if len(weights) != len(train):
            raise InputError(f"{len(weights)} weights for {len(train)} training points")
        if len(train) == 0:
            raise InputError("training set must be nonempty")
        self.train, self.weights, self.kernel = train, weights, kernel
        self.n = len(train)
        self.K = gram(kernel, train) if K is None else K
        self.sqrt_b = np.sqrt(weights.values)
        self.T = (self.sqrt_b[:, None] * self.K * self.sqrt_b[None, :]) / self.n
        self.rhs = self.sqrt_b * y
        self._dec: Optional[SpectralDecomposition] = None

    def decompose(self) -> SpectralDecomposition:
        if self._dec is None:
            self._dec = sym_eig(self.T)
        return self._dec

    def fit(self, filt: FilterSpec, lam: float) -> FitResult:
        if not lam > 0:
            raise ParameterError(f"regularization parameter must be positive, got {lam}")
        if not filt.is_rational:
            self.decompose()
        u = apply_to_vector(filt, lam, self.T, self.rhs, mode="filter", decomposition=self._dec)
        # stored coefficients are n * a_i under the 1/n normalization of RepresenterFunction
        coeffs = self.sqrt_b * u
        fn = RepresenterFunction(self.train.points, coeffs, self.kernel)
        a = coeffs / self.n
        norm = float(np.sqrt(max(a @ (self.K @ a), 0.0)))
        return FitResult(fn, float(lam), filt, norm, self.weights)


def fit(train: SampleSet, weights: WeightVector, kernel: KernelSpec, filt: FilterSpec,
        lam: float) -> FitResult:
    return WeightedProblem(train, weights, kernel).fit(filt, lam)


def fit_path(train: SampleSet, weights: WeightVector, kernel: KernelSpec, filt: FilterSpec,
             lambdas: Sequence[float]) -> list[FitResult]:
    """Fits for every ``lam`` sharing one Gram matrix and one eigendecomposition."""
    prob = WeightedProblem(train, weights, kernel)
    if len(lambdas) > 2 or not filt.is_rational:
        prob.decompose()
    return [prob.fit(filt, lam) for lam in lambdas]


def estimated_weights(points, rn_source: SampleSet, rn_target: SampleSet, kernel: KernelSpec,
                      filter_rn: FilterSpec, lambda_rn: float) -> tuple[WeightVector, RatioEstimate]:
    """Ratio estimate clipped at zero and evaluated at ``points``."""
    est = estimate_beta(rn_source, rn_target, kernel, filter_rn, lambda_rn)
    vals = clipped_values(est, points)
    return WeightVector(vals, f"estimated({lambda_rn!r}, {filter_rn})"), est


def fit_embedded(train: SampleSet, rn_source: SampleSet, rn_target: SampleSet,
                 kernel: KernelSpec, filter_reg: FilterSpec, lambda_reg: float,
                 filter_rn: FilterSpec, lambda_rn: float) -> FitResult:
    """Weighted fit with weights taken from a regularized ratio estimate."""
    w, _ = estimated_weights(train, rn_source, rn_target, kernel, filter_rn, lambda_rn)
    return fit(train, w, kernel, filter_reg, lambda_reg)
