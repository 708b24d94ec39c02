"""Index functions, regularization-parameter schedules and rate exponents.

Schedules invert ``theta(t) = phi(t) t`` (regression) or
``theta(t) = phi(t) t / xi(t)`` (ratio estimation) at the statistical
size functional ``m**-0.5 + n**-0.5`` by bisection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from covshift.errors import ConfigurationError, InputError, RangeError

# Upper end of the index-function domain.  Schedules may need theta^{-1} of
# values above 1 for tiny samples, so the domain is taken generously.
DEFAULT_UPPER = 100.0
MAX_BISECTION = 200


@dataclass(frozen=True)
class IndexFunction:
    """Monotone index function on ``[0, upper]``.

    ``power``: ``t**exponent``.  ``power_log``: ``t**exponent * log(1/t)**(-log_power)``
    on ``(0, min(upper, 1/e)]``, continued as ``phi(t0) (t/t0)**exponent`` above
    ``t0 = 1/e`` so that it stays increasing.
    """

    kind: str
    exponent: float
    log_power: float = 0.0
    upper: float = DEFAULT_UPPER

    def __post_init__(self):
        if not self.upper > 0:
            raise InputError("index-function domain must be nonempty")
        if self.kind == "power":
            if not self.exponent > 0:
                raise InputError(f"power exponent must be positive, got {self.exponent}")
        elif self.kind == "power_log":
            if not self.exponent > 1:
                raise InputError(f"power-log exponent must exceed 1, got {self.exponent}")
            if not 0 < self.log_power <= 1:
                raise InputError(f"power-log log exponent must lie in (0, 1], got {self.log_power}")
        else:
            raise InputError(f"unknown index function kind {self.kind!r}")

    @classmethod
    def power(cls, exponent: float, upper: float = DEFAULT_UPPER):
        return cls("power", float(exponent), 0.0, upper)

    @classmethod
    def power_log(cls, r: float, nu: float, upper: float = DEFAULT_UPPER):
        return cls("power_log", float(r), float(nu), upper)

    def _raw(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "power":
            return t ** self.exponent
        t0 = math.exp(-1.0)
        out = np.empty_like(t)
        low = t <= t0
        tl = t[low]
        pos = tl > 0
        vals = np.zeros_like(tl)
        vals[pos] = tl[pos] ** self.exponent * np.log(1.0 / tl[pos]) ** (-self.log_power)
        out[low] = vals
        out[~low] = t0 ** self.exponent * (t[~low] / t0) ** self.exponent
        return out

    def __call__(self, t):
        val = self._raw(t)
        return float(val) if np.ndim(t) == 0 else val

    def __str__(self):
        return format_index(self)


def parse_index(text: str, upper: float = DEFAULT_UPPER) -> IndexFunction:
    """Parse ``power:<rho>`` or ``powerlog:<r>:<nu>``."""
    parts = text.strip().lower().split(":")
    try:
        if parts[0] == "power" and len(parts) == 2:
            return IndexFunction.power(float(parts[1]), upper)
        if parts[0] == "powerlog" and len(parts) == 3:
            return IndexFunction.power_log(float(parts[1]), float(parts[2]), upper)
    except ValueError as exc:
        raise InputError(f"bad number in index function {text!r}") from exc
    raise InputError(f"cannot parse index function {text!r}")


def format_index(f: IndexFunction) -> str:
    if f.kind == "power":
        return f"power:{f.exponent!r}"
    return f"powerlog:{f.exponent!r}:{f.log_power!r}"


def eval_index(f: IndexFunction, t: float) -> float:
    if not 0 <= t <= f.upper:
        raise InputError(f"{t} outside the index-function domain [0, {f.upper}]")
    return f(t)


def invert_monotone(func: Callable[[float], float], y: float, lo: float = 0.0,
                    hi: float = 1.0, tol: float | None = None) -> float:
    """Solve ``func(t) = y`` on ``[lo, hi]`` for strictly increasing ``func``."""
    flo, fhi = func(lo), func(hi)
    if not (flo < y <= fhi):
        raise RangeError(f"value {y} outside the range ({flo}, {fhi}] of the function")
    if tol is None:
        tol = 1e-12 * max(1.0, abs(y))
    a, b = lo, hi
    mid = b
    for _ in range(MAX_BISECTION):
        mid = 0.5 * (a + b)
        fm = func(mid)
        if abs(fm - y) <= tol:
            return mid
        if fm < y:
            a = mid
        else:
            b = mid
        if b - a <= 4 * np.finfo(float).eps * max(abs(b), 1e-300):
            break
    return mid


def size_functional(a: float, b: float) -> float:
    """``a**-0.5 + b**-0.5``; infinite sizes contribute zero."""
    if a < 1 or b < 1:
        raise InputError(f"sample sizes must be at least 1, got {a}, {b}")
    return sum(0.0 if math.isinf(v) else v ** -0.5 for v in (a, b))


def _inverse(theta, y, upper):
    if y == 0:
        return 0.0
    return invert_monotone(theta, y, 0.0, upper)


def _theta(phi: IndexFunction):
    return lambda t: phi(t) * t


def _theta_ratio(phi: IndexFunction, xi: IndexFunction):
    def theta(t):
        if t == 0:
            return 0.0
        return phi(t) * t / xi(t)
    return theta


def _check_monotone(theta, upper):
    grid = np.geomspace(1e-12, upper, 400)
    vals = np.array([theta(float(t)) for t in grid])
    if not np.all(np.diff(vals) > 0):
        raise ConfigurationError(
            "phi(t) t / xi(t) is not strictly increasing; the kernel exponent is too large "
            "for the declared smoothness"
        )


def lambda_mn(phi: IndexFunction, m: float, n: float) -> float:
    """``theta^{-1}(m**-0.5 + n**-0.5)`` with ``theta(t) = phi(t) t``."""
    return _inverse(_theta(phi), size_functional(m, n), phi.upper)


def lambda_MN(phi_beta: IndexFunction, xi: IndexFunction, M: float, N: float) -> float:
    """``theta^{-1}(M**-0.5 + N**-0.5)`` with ``theta(t) = phi_beta(t) t / xi(t)``."""
    theta = _theta_ratio(phi_beta, xi)
    _check_monotone(theta, phi_beta.upper)
    return _inverse(theta, size_functional(M, N), phi_beta.upper)


def lambda_delta(phi: IndexFunction, phi_beta: IndexFunction, xi: IndexFunction,
                 m: float, n: float, M: float, N: float) -> float:
    """Composite schedule for regression with embedded ratio estimates."""
    inner = lambda_MN(phi_beta, xi, M, N)
    term = xi(inner) * phi_beta(inner) if inner > 0 else 0.0
    return _inverse(_theta(phi), size_functional(m, n) + term, phi.upper)


@dataclass(frozen=True)
class ScheduleSpec:
    """Declared smoothness of the regression function, the ratio, and the kernel."""

    phi: IndexFunction
    phi_beta: IndexFunction
    xi: IndexFunction

    def __post_init__(self):
        if self.xi.kind != "power" or not 0 < self.xi.exponent <= 0.5:
            raise ConfigurationError("xi must be power:<s> with 0 < s <= 1/2")
        # xi^2 covered by qualification 1  <=>  t / xi(t)^2 nondecreasing
        grid = np.geomspace(1e-8, 1.0, 200)
        q = grid / self.xi(grid) ** 2
        if np.any(np.diff(q) < -1e-12 * np.abs(q[1:])):
            raise ConfigurationError("xi^2 is not covered by qualification 1")

    def lambda_mn(self, m, n):
        return lambda_mn(self.phi, m, n)

    def lambda_MN(self, M, N):
        return lambda_MN(self.phi_beta, self.xi, M, N)

    def lambda_delta(self, m, n, M, N):
        return lambda_delta(self.phi, self.phi_beta, self.xi, m, n, M, N)


SETTINGS = ("regression_L2", "regression_H", "beta_rkhs", "beta_pointwise")


def rate_exponent(setting: str, r: float | None = None, eta: float | None = None,
                  varsigma: float = 0.0) -> float:
    """Exponent ``p`` of the predicted error order ``s**p`` in the size functional ``s``.

    Regression settings take ``r > 1/2`` (the source condition ``phi(t) = t**(r - 1/2)``);
    ratio settings take ``eta > 0`` and the kernel exponent ``0 <= varsigma <= 1/2``.
    """
    if setting in ("regression_L2", "regression_H"):
        if r is None or not r > 0.5:
            raise InputError(f"regression exponents need r > 1/2, got {r}")
        return (2 * r if setting == "regression_L2" else 2 * r - 1) / (2 * r + 1)
    if setting in ("beta_rkhs", "beta_pointwise"):
        if eta is None or not eta > 0:
            raise InputError(f"ratio exponents need eta > 0, got {eta}")
        if not 0 <= varsigma <= 0.5:
            raise InputError(f"kernel exponent must lie in [0, 1/2], got {varsigma}")
        num = eta if setting == "beta_rkhs" else eta + varsigma
        return num / (eta + 1 - varsigma)
    raise InputError(f"unknown setting {setting!r}; expected one of {SETTINGS}")
