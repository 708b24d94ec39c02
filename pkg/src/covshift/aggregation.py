"""Parameter choice by linear aggregation of candidate fits over a lambda grid.

Candidates ``f_k`` fitted at ``lambda_k`` are combined as ``sum_k c_k f_k``
with ``c`` solving ``G c = g``, where

    G[k, u] = (1/m) sum_j f_k(x'_j) f_u(x'_j)        (unlabeled target inputs)
    g[k]    = (1/n) sum_i beta(x_i) y_i f_k(x_i)     (weighted labeled source)

are empirical versions of the target inner products ``<f_k, f_u>`` and
``<f_k, f_q>``, so ``c`` minimizes an unbiased surrogate of the target risk.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from covshift.errors import ConfigurationError, InputError
from covshift.filters import FilterSpec
from covshift.iwrls import FitResult, WeightedProblem, WeightVector
from covshift.kernels import KernelSpec, SampleSet
from covshift.representer import RepresenterFunction, combine

CONDITION_LIMIT = 1e12
JITTER = 1e-10
AUTO_FACTOR = 10.0


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """Retained fits, the threshold used and the grid positions that were dropped."""

    candidates: tuple
    gamma_l: float
    discarded: tuple = ()
    all_norms: tuple = ()
    lambdas: tuple = ()

    def __post_init__(self):
        for c in self.candidates:
            if c.rkhs_norm > self.gamma_l:
                raise InputError(f"candidate at lambda={c.lam} exceeds gamma_l")

    def __len__(self):
        return len(self.candidates)

    def values(self, points) -> np.ndarray:
        """Matrix with one column per candidate evaluated at ``points``."""
        if not self.candidates:
            return np.zeros((np.shape(points)[0], 0))
        return np.column_stack([c(points) for c in self.candidates])


@dataclass(frozen=True, eq=False)
class AggregateResult:
    coefficients: np.ndarray
    function: RepresenterFunction
    gram_tilde: np.ndarray
    g_tilde: np.ndarray
    solver_note: str

    def __call__(self, points) -> np.ndarray:
        return self.function(points)


def geometric_grid(lo: float, hi: float, k: int) -> np.ndarray:
    """``k`` geometric points from ``hi`` down to ``lo``."""
    if not (0 < lo <= hi) or k < 1:
        raise InputError(f"bad lambda grid ({lo}, {hi}, {k})")
    return np.geomspace(hi, lo, k)


def parse_grid(text: str) -> np.ndarray:
    """``a:b:k`` as a geometric grid between ``a`` and ``b``."""
    parts = text.split(":")
    try:
        a, b, k = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError) as exc:
        raise InputError(f"cannot parse lambda grid {text!r}; expected a:b:k") from exc
    if len(parts) != 3:
        raise InputError(f"cannot parse lambda grid {text!r}; expected a:b:k")
    return geometric_grid(min(a, b), max(a, b), k)


def auto_gamma(fits: Sequence[FitResult]) -> float:
    """``10 x`` the largest norm among the three most regularized fits."""
    top = sorted(fits, key=lambda f: f.lam, reverse=True)[:3]
    return AUTO_FACTOR * max(f.rkhs_norm for f in top)


def build_candidates(train: SampleSet, weights: WeightVector, kernel: KernelSpec,
                     filt: FilterSpec, lambda_grid, gamma_l: float | str = "auto",
                     threads: int = 1) -> CandidateSet:
    """Fit every grid value and drop fits with ``rkhs_norm > gamma_l``.

    ``gamma_l="auto"`` applies :func:`auto_gamma`.  Embedded weights are
    passed in already evaluated (see :func:`covshift.iwrls.estimated_weights`).
    """
    grid = np.asarray(lambda_grid, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise InputError("lambda grid is empty")
    prob = WeightedProblem(train, weights, kernel)
    if grid.size > 2 or not filt.is_rational:
        prob.decompose()
    if threads > 1 and grid.size > 1:
        with ThreadPoolExecutor(threads) as pool:
            fits = list(pool.map(lambda lam: prob.fit(filt, float(lam)), grid))
    else:
        fits = [prob.fit(filt, float(lam)) for lam in grid]
    gamma = auto_gamma(fits) if gamma_l == "auto" else float(gamma_l)
    if math.isnan(gamma) or gamma < 0:
        raise ConfigurationError(f"gamma_l must be a nonnegative number or 'auto', got {gamma_l!r}")
    kept = [f for f in fits if f.rkhs_norm <= gamma]
    dropped = tuple(i for i, f in enumerate(fits) if f.rkhs_norm > gamma)
    norms = tuple(f.rkhs_norm for f in fits)
    if not kept:
        listing = ", ".join(f"{f.lam:.3g}:{f.rkhs_norm:.3g}" for f in fits)
        raise ConfigurationError(f"every candidate exceeds gamma_l={gamma!r} (lambda:norm {listing})")
    return CandidateSet(tuple(kept), gamma, dropped, norms, tuple(float(x) for x in grid))


def gram_tilde(cands: CandidateSet, target_unlabeled: SampleSet) -> np.ndarray:
    m = len(target_unlabeled)
    if m < 1:
        raise InputError("target sample must be nonempty")
    F = cands.values(target_unlabeled.points)
    G = F.T @ F / m
    return 0.5 * (G + G.T)


def g_tilde(cands: CandidateSet, train_labeled: SampleSet, beta_values) -> np.ndarray:
    y = train_labeled.require_labels()
    b = np.asarray(beta_values, dtype=np.float64).reshape(-1)
    if b.shape[0] != y.shape[0]:
        raise InputError(f"{b.shape[0]} weights for {y.shape[0]} labeled points")
    if np.any(b < 0):
        raise InputError("weights must be nonnegative")
    F = cands.values(train_labeled.points)
    return F.T @ (b * y) / y.shape[0]


def _solve(G: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, str]:
    l = G.shape[0]
    try:
        if np.linalg.cond(G) <= CONDITION_LIMIT:
            return scipy.linalg.solve(G, g, assume_a="sym"), "direct"
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        pass
    eps = JITTER * np.trace(G) / l
    Gj = G + eps * np.eye(l)
    try:
        if eps > 0 and np.linalg.cond(Gj) <= CONDITION_LIMIT:
            return scipy.linalg.solve(Gj, g, assume_a="sym"), "jittered"
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        pass
    return scipy.linalg.lstsq(G, g)[0], "pseudo_inverse"


def surrogate(G: np.ndarray, g: np.ndarray, c) -> float:
    """``Q(c) = c^T G c - 2 c^T g``, the accessible part of the target risk."""
    c = np.asarray(c, dtype=np.float64)
    return float(c @ G @ c - 2.0 * c @ g)


def aggregate(cands: CandidateSet, G: np.ndarray, g: np.ndarray) -> AggregateResult:
    G = np.asarray(G, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    l = len(cands)
    if G.shape != (l, l) or g.shape != (l,):
        raise InputError(f"dimension mismatch: {l} candidates, G {G.shape}, g {g.shape}")
    c, note = _solve(G, g)
    fn = combine([cand.function for cand in cands.candidates], c)
    return AggregateResult(c, fn, G, g, note)


def aggregate_fit(train: SampleSet, weights: WeightVector, target_unlabeled: SampleSet,
                  kernel: KernelSpec, filt: FilterSpec, lambda_grid, gamma_l: float | str = "auto",
                  g_weights: Optional[np.ndarray] = None, threads: int = 1
                  ) -> tuple[AggregateResult, CandidateSet]:
    """Candidates, empirical system and combination in one call.

    ``g_weights`` are the ratio values used in ``g``; they default to the
    fitting weights.
    """
    cands = build_candidates(train, weights, kernel, filt, lambda_grid, gamma_l, threads)
    G = gram_tilde(cands, target_unlabeled)
    b = weights.values if g_weights is None else g_weights
    g = g_tilde(cands, train, b)
    return aggregate(cands, G, g), cands
