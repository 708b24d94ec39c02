"""Spectral regularization filters and their application to PSD matrices.

A filter family ``g_lam(t)`` approximates ``1/t``.  Three families are
provided: Tikhonov ``1/(lam + t)``, iterated Tikhonov of order ``nu``
``(1 - (lam/(lam + t))**nu) / t`` and spectral cutoff ``1/t`` on
``t >= lam``.  Besides ``g`` we expose the residual ``r(t) = 1 - t g(t)``
and the shifted quotient ``psi(t) = (g(t) - g(0)) / t``, which lets a
filter act on functions outside the span of the sample kernels.

The iterated family is evaluated through ``r = lam/(lam + t)`` and
geometric sums, which avoids the cancellation of the textbook form for
small ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from covshift.errors import InputError, ParameterError

MODES = ("filter", "residual", "shifted_quotient")


class FilterConstants(NamedTuple):
    gamma0: float
    gamma_half_neg: float
    gamma_neg1: float


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    order: int = 1

    def __post_init__(self):
        if self.kind not in ("tikhonov", "iterated_tikhonov", "spectral_cutoff"):
            raise InputError(f"unknown filter kind {self.kind!r}")
        if self.kind == "iterated_tikhonov":
            if int(self.order) != self.order or self.order < 1:
                raise InputError(f"iterated Tikhonov order must be a positive integer, got {self.order}")
            object.__setattr__(self, "order", int(self.order))
        elif self.order != 1:
            raise InputError(f"{self.kind} takes no order")

    @classmethod
    def tikhonov(cls):
        return cls("tikhonov")

    @classmethod
    def iterated(cls, nu: int):
        return cls("iterated_tikhonov", nu)

    @classmethod
    def cutoff(cls):
        return cls("spectral_cutoff")

    @property
    def constants(self) -> FilterConstants:
        if self.kind == "tikhonov":
            return FilterConstants(1.0, 0.5, 1.0)
        if self.kind == "iterated_tikhonov":
            return FilterConstants(1.0, math.sqrt(self.order), float(self.order))
        return FilterConstants(1.0, 1.0, 1.0)

    @property
    def qualification(self) -> float:
        if self.kind == "tikhonov":
            return 1.0
        if self.kind == "iterated_tikhonov":
            return float(self.order)
        return math.inf

    def gamma_nu(self, nu: float) -> float:
        """Constant in ``t**nu |r(t)| <= gamma_nu lam**nu``; infinite past the qualification."""
        if nu <= 0:
            raise ParameterError("nu must be positive")
        return 1.0 if nu <= self.qualification else math.inf

    @property
    def is_rational(self) -> bool:
        """True when ``g`` is a rational function computable by linear solves."""
        return self.kind != "spectral_cutoff"

    def __str__(self):
        return format_filter(self)


def parse_filter(text: str) -> FilterSpec:
    """Parse ``tikhonov``, ``itik:<nu>`` or ``cutoff``."""
    s = text.strip().lower()
    if s == "tikhonov":
        return FilterSpec.tikhonov()
    if s == "cutoff":
        return FilterSpec.cutoff()
    if s.startswith("itik:"):
        try:
            nu = int(s[5:])
        except ValueError as exc:
            raise InputError(f"bad iterated Tikhonov order in {text!r}") from exc
        return FilterSpec.iterated(nu)
    raise InputError(f"cannot parse filter {text!r}; expected tikhonov, itik:<nu> or cutoff")


def format_filter(f: FilterSpec) -> str:
    if f.kind == "tikhonov":
        return "tikhonov"
    if f.kind == "iterated_tikhonov":
        return f"itik:{f.order}"
    return "cutoff"


def _check(lam, t):
    if not (lam > 0) or not math.isfinite(lam):
        raise ParameterError(f"regularization parameter must be positive, got {lam}")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise InputError("filter argument must be nonnegative")
    return t


def _scalar(out, t_in):
    return float(out) if np.ndim(t_in) == 0 else out


def _geometric(r, nu):
    # (sum_{k<nu} r^k, sum_{j<nu} (nu - j) r^j)
    s1 = np.zeros_like(r)
    s2 = np.zeros_like(r)
    p = np.ones_like(r)
    for j in range(nu):
        s1 += p
        s2 += (nu - j) * p
        p = p * r
    return s1, s2


def filter_eval(f: FilterSpec, lam: float, t):
    """``g_lam(t)``; vectorized over ``t``."""
    ta = _check(lam, t)
    if f.kind == "tikhonov":
        out = 1.0 / (lam + ta)
    elif f.kind == "iterated_tikhonov":
        r = lam / (lam + ta)
        s1, _ = _geometric(r, f.order)
        out = s1 / (lam + ta)
    else:
        with np.errstate(divide="ignore"):
            out = np.where(ta >= lam, 1.0 / np.where(ta > 0, ta, 1.0), 0.0)
    return _scalar(out, t)


def residual_eval(f: FilterSpec, lam: float, t):
    """``r_lam(t) = 1 - t g_lam(t)``."""
    ta = _check(lam, t)
    if f.kind == "tikhonov":
        out = lam / (lam + ta)
    elif f.kind == "iterated_tikhonov":
        out = (lam / (lam + ta)) ** f.order
    else:
        out = np.where(ta >= lam, 0.0, 1.0)
    return _scalar(out, t)


def shifted_quotient_eval(f: FilterSpec, lam: float, t):
    """``psi_lam(t) = (g_lam(t) - g_lam(0)) / t``, continuous at ``t = 0``."""
    ta = _check(lam, t)
    if f.kind == "tikhonov":
        out = -1.0 / (lam * (lam + ta))
    elif f.kind == "iterated_tikhonov":
        r = lam / (lam + ta)
        _, s2 = _geometric(r, f.order)
        out = -s2 / (lam * (lam + ta))
    else:
        safe = np.where(ta > 0, ta, 1.0)
        out = np.where(ta >= lam, 1.0 / (safe * safe), 0.0)
    return _scalar(out, t)


_SCALAR = {
    "filter": filter_eval,
    "residual": residual_eval,
    "shifted_quotient": shifted_quotient_eval,
}


@dataclass(frozen=True)
class SpectralDecomposition:
    """``A = V diag(eigenvalues) V^T`` with eigenvalues nonincreasing."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def clipped(self) -> np.ndarray:
        return np.maximum(self.eigenvalues, 0.0)

    def apply(self, h) -> np.ndarray:
        """Matrix ``V diag(h(Lambda)) V^T`` for a vectorized scalar function ``h``."""
        V = self.eigenvectors
        return (V * h(self.clipped())) @ V.T

    def apply_vec(self, h, v) -> np.ndarray:
        V = self.eigenvectors
        hv = h(self.clipped())
        if np.ndim(v) == 2:
            hv = hv[:, None]
        return V @ (hv * (V.T @ v))


def _as_square(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"expected a square matrix, got shape {A.shape}")
    return A


def sym_eig(A) -> SpectralDecomposition:
    A = _as_square(A)
    scale = np.linalg.norm(A)
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-10 * max(scale, 1e-300):
        raise InputError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    return SpectralDecomposition(w[::-1].copy(), np.ascontiguousarray(V[:, ::-1]))


def _check_upper(eigs, upper):
    if upper is not None and eigs.size and eigs[0] > upper * (1 + 1e-10):
        raise InputError(f"spectrum exceeds the filter domain [0, {upper}]")


def apply_spectral(f: FilterSpec, lam: float, A, mode: str = "filter", upper=None) -> np.ndarray:
    """``V h(Lambda) V^T`` where ``h`` is ``g``, ``r`` or ``psi`` per ``mode``.

    Eigenvalues are clipped at zero before ``h`` is applied.  When ``upper``
    is given the spectrum is validated against the filter domain.
    """
    if mode not in _SCALAR:
        raise InputError(f"unknown mode {mode!r}")
    _check(lam, 0.0)
    dec = A if isinstance(A, SpectralDecomposition) else sym_eig(A)
    _check_upper(dec.eigenvalues, upper)
    h = _SCALAR[mode]
    return dec.apply(lambda t: h(f, lam, t))


def apply_to_vector(f: FilterSpec, lam: float, A, v, mode: str = "filter",
                    decomposition: SpectralDecomposition | None = None) -> np.ndarray:
    """Compute ``h(A) v`` for one or more right-hand sides.

    Rational filters go through a single Cholesky factorization of
    ``lam I + A`` unless a decomposition is supplied; spectral cutoff always
    needs the eigendecomposition.
    """
    if mode not in _SCALAR:
        raise InputError(f"unknown mode {mode!r}")
    _check(lam, 0.0)
    v = np.asarray(v, dtype=np.float64)
    if decomposition is None and not f.is_rational:
        decomposition = sym_eig(A)
    if decomposition is not None:
        h = _SCALAR[mode]
        return decomposition.apply_vec(lambda t: h(f, lam, t), v)

    A = _as_square(A)
    n = A.shape[0]
    M = A + lam * np.eye(n)
    cf = scipy.linalg.cho_factor(M, lower=True, check_finite=False)

    def solve(b):
        return scipy.linalg.cho_solve(cf, b, check_finite=False)

    nu = f.order if f.kind == "iterated_tikhonov" else 1
    if mode == "residual":
        out = v
        for _ in range(nu):
            out = lam * solve(out)
        return out
    # R = lam (lam I + A)^{-1};  g(A) v = (lam I + A)^{-1} sum_{k<nu} R^k v
    #                            psi(A) v = -(1/lam) (lam I + A)^{-1} sum_j (nu - j) R^j v
    acc = np.zeros_like(v)
    p = v
    for j in range(nu):
        weight = 1.0 if mode == "filter" else float(nu - j)
        acc = acc + weight * p
        if j + 1 < nu:
            p = lam * solve(p)
    out = solve(acc)
    if mode == "shifted_quotient":
        out = -out / lam
    return out


def verify_qualification(f: FilterSpec, nu: float, lambda_grid, t_grid, gamma: float = 1.0) -> bool:
    """Check ``t**nu |r_lam(t)| <= gamma lam**nu`` on the full grid product.

    ``gamma`` defaults to 1, the declared ``gamma_nu`` of every family here.
    """
    lam = np.asarray(lambda_grid, dtype=np.float64).reshape(-1, 1)
    t = np.asarray(t_grid, dtype=np.float64).reshape(1, -1)
    ok = True
    for row in lam:
        lhs = t ** nu * np.abs(residual_eval(f, float(row[0]), t))
        rhs = gamma * row[0] ** nu
        ok = ok and bool(np.all(lhs <= rhs * (1 + 1e-12)))
    return ok
