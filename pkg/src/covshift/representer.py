"""RKHS elements stored as normalized kernel expansions.

A :class:`RepresenterFunction` has the value

    f(x) = target_block_scale * (1/M) sum_j K(x, t_j) + (1/N) sum_i source_coeffs[i] K(x, s_i)

over source anchors ``s_i`` (``N`` of them) and optional target anchors
``t_j`` (``M``).  The ``1/N`` and ``1/M`` normalizations match the adjoint
sampling operators, so ratio estimates and regression fits are stored in the
form the formulas produce.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from covshift.errors import InputError
from covshift.kernels import KernelSpec, SampleSet, as_points, expand


@dataclass(frozen=True, eq=False)
class RepresenterFunction:
    source_anchors: np.ndarray
    source_coeffs: np.ndarray
    kernel: KernelSpec
    target_anchors: Optional[np.ndarray] = None
    target_block_scale: float = 0.0
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        src = self.source_anchors.points if isinstance(self.source_anchors, SampleSet) else self.source_anchors
        src = as_points(src) if np.size(src) else np.zeros((0, _dim_hint(self.target_anchors)))
        coeffs = np.asarray(self.source_coeffs, dtype=np.float64).reshape(-1)
        if coeffs.shape[0] != src.shape[0]:
            raise InputError(f"{coeffs.shape[0]} coefficients for {src.shape[0]} source anchors")
        object.__setattr__(self, "source_anchors", src)
        object.__setattr__(self, "source_coeffs", coeffs)
        tgt = self.target_anchors
        if isinstance(tgt, SampleSet):
            tgt = tgt.points
        if tgt is not None:
            tgt = as_points(tgt)
            if tgt.shape[0] == 0:
                tgt = None
        object.__setattr__(self, "target_anchors", tgt)
        object.__setattr__(self, "target_block_scale", float(self.target_block_scale))

    @property
    def dim(self) -> int:
        if self.source_anchors.shape[0]:
            return self.source_anchors.shape[1]
        if self.target_anchors is not None:
            return self.target_anchors.shape[1]
        return self.source_anchors.shape[1]

    def expansion(self):
        """Return ``(anchors, weights)`` with ``f(x) = sum_k weights[k] K(x, anchors[k])``."""
        if "expansion" not in self._cache:
            n = self.source_anchors.shape[0]
            anchors = [self.source_anchors]
            weights = [self.source_coeffs / n if n else self.source_coeffs]
            if self.target_anchors is not None and self.target_block_scale != 0.0:
                m = self.target_anchors.shape[0]
                anchors.append(self.target_anchors)
                weights.append(np.full(m, self.target_block_scale / m))
            A = np.concatenate(anchors, axis=0) if len(anchors) > 1 else anchors[0]
            w = np.concatenate(weights) if len(weights) > 1 else weights[0]
            self._cache["expansion"] = (np.ascontiguousarray(A), np.ascontiguousarray(w))
        return self._cache["expansion"]

    def __call__(self, points) -> np.ndarray:
        pts = points.points if isinstance(points, SampleSet) else as_points(points, self.dim)
        A, w = self.expansion()
        if pts.shape[0] and A.shape[0] and pts.shape[1] != A.shape[1]:
            raise InputError(f"dimension mismatch: {pts.shape[1]} vs {A.shape[1]}")
        return expand(self.kernel, pts, A, w)

    @classmethod
    def zero(cls, kernel: KernelSpec, dim: int = 1) -> "RepresenterFunction":
        return cls(np.zeros((0, dim)), np.zeros(0), kernel)

    @classmethod
    def from_expansion(cls, kernel: KernelSpec, anchors, weights) -> "RepresenterFunction":
        """Build from unnormalized weights ``f = sum_k weights[k] K(., anchors[k])``."""
        A = as_points(anchors)
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        return cls(A, w * A.shape[0], kernel)

    def scaled(self, c: float) -> "RepresenterFunction":
        return RepresenterFunction(self.source_anchors, c * self.source_coeffs, self.kernel,
                                   self.target_anchors, c * self.target_block_scale)


def _dim_hint(tgt) -> int:
    if tgt is None:
        return 1
    pts = tgt.points if isinstance(tgt, SampleSet) else np.asarray(tgt)
    return pts.shape[1] if pts.ndim == 2 else 1


def _same_kernel(f: RepresenterFunction, g: RepresenterFunction):
    if f.kernel != g.kernel:
        raise InputError(f"kernel mismatch: {f.kernel} vs {g.kernel}")


def inner(f: RepresenterFunction, g: RepresenterFunction) -> float:
    """RKHS inner product ``<f, g>`` via the reproducing property."""
    _same_kernel(f, g)
    A, w = f.expansion()
    if w.size == 0:
        return 0.0
    B, v = g.expansion()
    if v.size == 0:
        return 0.0
    if B.shape[0] < A.shape[0]:
        return float(v @ f(B))
    return float(w @ g(A))


def rkhs_norm(f: RepresenterFunction) -> float:
    return float(np.sqrt(max(inner(f, f), 0.0)))


def rkhs_distance(f: RepresenterFunction, g: RepresenterFunction) -> float:
    """``||f - g||`` as the quadratic form over the union of both anchor sets."""
    _same_kernel(f, g)
    return rkhs_norm(combine([f, g], [1.0, -1.0]))


def combine(functions: Sequence[RepresenterFunction], coeffs) -> RepresenterFunction:
    """Linear combination ``sum_k coeffs[k] functions[k]`` keeping every anchor block.

    Target blocks are folded into plain anchors, so the result has only a
    source block; its value agrees with the combination exactly.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    if len(functions) != coeffs.shape[0]:
        raise InputError(f"{coeffs.shape[0]} coefficients for {len(functions)} functions")
    if not functions:
        raise InputError("cannot combine an empty list of functions")
    kernel = functions[0].kernel
    anchors, weights = [], []
    for f, c in zip(functions, coeffs):
        _same_kernel(functions[0], f)
        A, w = f.expansion()
        anchors.append(A)
        weights.append(c * w)
    return RepresenterFunction.from_expansion(kernel, np.concatenate(anchors, axis=0),
                                              np.concatenate(weights))
