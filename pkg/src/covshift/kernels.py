"""Kernel functions, sample containers and Gram-matrix assembly.

Two kernels are supported: the Gaussian kernel
``K(x, y) = exp(-|x - y|^2 / (2 sigma^2))`` and the constant-augmented
kernel ``1 + K_inner(x, y)`` whose RKHS contains the constant functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from covshift import _backend
from covshift.errors import DataError, InputError


def as_points(x, dim: Optional[int] = None) -> np.ndarray:
    """Coerce ``x`` into a C-contiguous ``(n, d)`` float array of finite values.

    A 1-D array is read as ``n`` scalar points unless ``dim`` says it is a
    single ``d``-dimensional point.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if dim is not None and dim > 1 and arr.shape[0] == dim:
            arr = arr.reshape(1, dim)
        else:
            arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise InputError(f"points must be 1-D or 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("points contain non-finite coordinates")
    if dim is not None and arr.shape[0] > 0 and arr.shape[1] != dim:
        raise InputError(f"dimension mismatch: expected {dim}, got {arr.shape[1]}")
    return np.ascontiguousarray(arr)


@dataclass(frozen=True)
class SampleSet:
    """Points with optional labels and the seed that produced them."""

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        pts = as_points(self.points)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.float64).reshape(-1)
            if lab.shape[0] != pts.shape[0]:
                raise DataError(
                    f"{lab.shape[0]} labels for {pts.shape[0]} points"
                )
            if not np.all(np.isfinite(lab)):
                raise DataError("labels contain non-finite values")
            object.__setattr__(self, "labels", lab)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise InputError("a labeled sample set is required")
        return self.labels


@dataclass(frozen=True)
class KernelSpec:
    """A reproducing kernel.

    ``kind`` is ``"gaussian"`` (with ``sigma``) or ``"constant_augmented"``
    (wrapping ``inner``).  Use :meth:`gaussian` and :meth:`augmented` to build.
    """

    kind: str
    sigma: Optional[float] = None
    inner: Optional["KernelSpec"] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.sigma is None or not (self.sigma > 0) or not math.isfinite(self.sigma):
                raise InputError(f"gaussian bandwidth must be positive, got {self.sigma}")
        elif self.kind == "constant_augmented":
            if self.inner is None:
                raise InputError("constant_augmented kernel needs an inner kernel")
        else:
            raise InputError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def gaussian(cls, sigma: float) -> "KernelSpec":
        return cls("gaussian", sigma=float(sigma))

    @classmethod
    def augmented(cls, inner: "KernelSpec") -> "KernelSpec":
        return cls("constant_augmented", inner=inner)

    @property
    def kappa0(self) -> float:
        """Uniform bound on ``sqrt(K(x, x))``."""
        if self.kind == "gaussian":
            return 1.0
        return math.sqrt(1.0 + self.inner.kappa0 ** 2)

    @property
    def offset(self) -> float:
        """Total constant added on top of the innermost Gaussian."""
        if self.kind == "gaussian":
            return 0.0
        return 1.0 + self.inner.offset

    @property
    def bandwidth(self) -> float:
        return self.sigma if self.kind == "gaussian" else self.inner.bandwidth

    def __str__(self):
        return format_kernel(self)


def parse_kernel(text: str) -> KernelSpec:
    """Parse ``gaussian:<sigma>`` or ``const+gaussian:<sigma>``.

    The ``const+`` prefix may be repeated; each occurrence adds one
    constant-augmentation layer.
    """
    s = text.strip()
    layers = 0
    while s.startswith("const+"):
        layers += 1
        s = s[len("const+"):]
    name, _, arg = s.partition(":")
    if name != "gaussian" or not arg:
        raise InputError(f"cannot parse kernel {text!r}; expected gaussian:<sigma>")
    try:
        spec = KernelSpec.gaussian(float(arg))
    except ValueError as exc:
        raise InputError(f"bad bandwidth in kernel {text!r}") from exc
    for _ in range(layers):
        spec = KernelSpec.augmented(spec)
    return spec


def format_kernel(spec: KernelSpec) -> str:
    if spec.kind == "gaussian":
        return f"gaussian:{spec.sigma!r}"
    return "const+" + format_kernel(spec.inner)


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """Evaluate ``K(x, y)`` for two single points."""
    xa = np.asarray(x, dtype=np.float64).reshape(-1)
    ya = np.asarray(y, dtype=np.float64).reshape(-1)
    if xa.shape != ya.shape:
        raise InputError(f"dimension mismatch: {xa.shape[0]} vs {ya.shape[0]}")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ya))):
        raise InputError("non-finite point")
    d2 = float(np.sum((xa - ya) ** 2))
    return spec.offset + math.exp(-d2 / (2.0 * spec.bandwidth ** 2))


def _points_of(s) -> np.ndarray:
    return s.points if isinstance(s, SampleSet) else as_points(s)


def _common_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] and b.shape[0] and a.shape[1] != b.shape[1]:
        raise InputError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")


def gram(spec: KernelSpec, rows, cols=None) -> np.ndarray:
    """Dense matrix ``K(rows_i, cols_j)``.

    With ``cols`` omitted the square Gram matrix of ``rows`` is built from
    its upper triangle, so it is exactly symmetric.
    """
    X = _points_of(rows)
    if cols is None:
        K = _backend.gaussian_gram_sym(X, spec.bandwidth)
    else:
        Y = _points_of(cols)
        _common_dim(X, Y)
        if X.shape[0] == 0 or Y.shape[0] == 0:
            return np.zeros((X.shape[0], Y.shape[0]))
        K = _backend.gaussian_gram(X, Y, spec.bandwidth)
    if spec.offset:
        K += spec.offset
    return K


def expand(spec: KernelSpec, points, anchors, weights) -> np.ndarray:
    """Evaluate ``sum_j weights[j] * K(points_i, anchors_j)`` for every point.

    Memory use is linear in the number of points and anchors.
    """
    X = _points_of(points)
    A = _points_of(anchors)
    w = np.ascontiguousarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != A.shape[0]:
        raise InputError(f"{w.shape[0]} weights for {A.shape[0]} anchors")
    if X.shape[0] == 0:
        return np.zeros(0)
    if A.shape[0] == 0:
        return np.zeros(X.shape[0])
    _common_dim(X, A)
    out = _backend.gaussian_expand(X, A, w, spec.bandwidth)
    if spec.offset:
        out += spec.offset * w.sum()
    return out


def diag(spec: KernelSpec, points) -> np.ndarray:
    """``K(x, x)`` for each point."""
    X = _points_of(points)
    return np.full(X.shape[0], 1.0 + spec.offset)
