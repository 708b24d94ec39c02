"""Synthetic covariate-shift problems with closed-form ground truth.

A problem fixes a source law on the line, a kernel, a density ratio
``beta`` and a regression function ``f_q``, both explicit kernel
expansions.  Target inputs are drawn by rejection from the source law with
acceptance probability ``beta(x) / b0``; labels are ``f_q(x)`` plus
centered Gaussian noise.

Smoothness of ``beta`` beyond membership in the RKHS is engineered by
applying powers of the source covariance operator, discretized on a
Gauss quadrature grid, to a kernel expansion (:func:`covariance_power`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from covshift.errors import ConfigurationError, DataError, InputError
from covshift.kernels import KernelSpec, SampleSet, as_points, parse_kernel
from covshift.representer import RepresenterFunction

CHECK_GRID = 2001
NORMALIZATION_TOL = 1e-10


@dataclass(frozen=True)
class SourceLaw:
    """``uniform(a, b)`` or ``gaussian(mu, sd)`` on the real line."""

    kind: str
    a: float
    b: float

    def __post_init__(self):
        if self.kind == "uniform" and not self.a < self.b:
            raise InputError(f"uniform law needs a < b, got ({self.a}, {self.b})")
        if self.kind == "gaussian" and not self.b > 0:
            raise InputError(f"gaussian law needs sd > 0, got {self.b}")
        if self.kind not in ("uniform", "gaussian"):
            raise InputError(f"unknown source law {self.kind!r}")

    @classmethod
    def uniform(cls, a=-1.0, b=1.0):
        return cls("uniform", float(a), float(b))

    @classmethod
    def gaussian(cls, mu=0.0, sd=1.0):
        return cls("gaussian", float(mu), float(sd))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, n)
        return rng.normal(self.a, self.b, n)

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "uniform":
            return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)
        z = (x - self.a) / self.b
        return np.exp(-0.5 * z * z) / (self.b * math.sqrt(2 * math.pi))

    @property
    def window(self) -> tuple[float, float]:
        """Interval carrying all but a negligible fraction of the mass."""
        if self.kind == "uniform":
            return self.a, self.b
        return self.a - 8 * self.b, self.a + 8 * self.b

    def quadrature(self, n_nodes: int = 200) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights with ``sum w f(x) ~= E f(X)``."""
        if self.kind == "uniform":
            x, w = np.polynomial.legendre.leggauss(n_nodes)
            half = 0.5 * (self.b - self.a)
            return self.a + half * (x + 1.0), 0.5 * w
        x, w = np.polynomial.hermite_e.hermegauss(n_nodes)
        return self.a + self.b * x, w / math.sqrt(2 * math.pi)

    def integrate(self, func: Callable[[np.ndarray], np.ndarray]) -> float:
        """Adaptive quadrature of ``func`` against the law."""
        lo, hi = (self.a, self.b) if self.kind == "uniform" else (-np.inf, np.inf)

        def integrand(t):
            return float(func(np.array([t]))[0] * self.pdf(t))

        breakpoints = None
        if self.kind == "uniform":
            breakpoints = list(np.linspace(self.a, self.b, 9)[1:-1])
        val, _ = integrate.quad(integrand, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=400,
                                points=breakpoints)
        return val

    def __str__(self):
        return f"{self.kind}:{self.a!r}:{self.b!r}"


def parse_law(text: str) -> SourceLaw:
    parts = text.strip().split(":")
    try:
        if parts[0] in ("uniform", "gaussian") and len(parts) == 3:
            return SourceLaw(parts[0], float(parts[1]), float(parts[2]))
    except ValueError as exc:
        raise InputError(f"bad number in source law {text!r}") from exc
    raise InputError(f"cannot parse source law {text!r}; expected uniform:a:b or gaussian:mu:sd")


def covariance_power(kernel: KernelSpec, law: SourceLaw, v: RepresenterFunction, eta: float,
                     density: Optional[Callable] = None, n_nodes: int = 200) -> RepresenterFunction:
    """``T^eta v`` for the covariance ``T = E[K(., X) <K(., X), .>]``, ``eta >= 1``.

    ``T`` is discretized with the law's Gauss quadrature; ``density`` reweights
    the law (e.g. by ``beta`` to get the target covariance).  The result is
    an expansion over the quadrature nodes.
    """
    if eta < 1:
        raise InputError("covariance powers below 1 are not supported")
    x, w = law.quadrature(n_nodes)
    if density is not None:
        w = w * np.asarray(density(x))
    if np.any(w <= 0):
        raise InputError("quadrature weights must be positive")
    b = w * v(x)  # coefficients of T v on the nodes
    if eta > 1:
        from covshift.kernels import gram
        K = gram(kernel, x)
        dh = np.sqrt(w)
        lam, U = np.linalg.eigh(dh[:, None] * K * dh[None, :])
        lam = np.clip(lam, 0.0, None)
        b = dh * (U @ (lam ** (eta - 1) * (U.T @ (b / dh))))
    return RepresenterFunction.from_expansion(kernel, x, b)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A fully specified synthetic covariate-shift problem.

    ``beta_raw`` times ``beta_norm_const`` is the density ratio; ``b0`` bounds it.
    """

    name: str
    source_law: SourceLaw
    kernel: KernelSpec
    beta_raw: RepresenterFunction
    f_q: RepresenterFunction
    b0: Optional[float] = None
    beta_norm_const: float = 1.0
    noise_sigma: float = 0.1
    dim: int = 1
    construction: str = ""
    _beta: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.dim != 1:
            raise ConfigurationError("only one-dimensional problems are supported")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise level must be nonnegative")

    @property
    def beta(self) -> RepresenterFunction:
        if "beta" not in self._beta:
            self._beta["beta"] = self.beta_raw.scaled(self.beta_norm_const)
        return self._beta["beta"]

    def check_grid(self) -> np.ndarray:
        lo, hi = self.source_law.window
        return np.linspace(lo, hi, CHECK_GRID)


def normalize_beta(draft: ProblemSpec) -> ProblemSpec:
    """Rescale ``beta`` so that it integrates to one against the source law.

    Also fills in ``b0`` from the check grid when absent and validates
    nonnegativity and the bound on that grid.
    """
    grid = draft.check_grid()
    raw = draft.beta_raw(grid)
    if np.all(np.abs(raw) == 0):
        raise ConfigurationError("density ratio is identically zero")
    total = draft.source_law.integrate(draft.beta_raw)
    if not total > 0:
        raise ConfigurationError(f"density ratio integrates to {total}")
    const = 1.0 / total
    spec = replace(draft, beta_norm_const=const)
    vals = spec.beta(grid)
    if np.min(vals) < -1e-12:
        raise ConfigurationError(f"density ratio is negative on the support (min {np.min(vals):.3g})")
    b0 = spec.b0
    if b0 is None:
        b0 = float(np.max(vals)) * 1.01
        spec = replace(spec, b0=b0)
    elif np.max(vals) > b0:
        raise ConfigurationError(f"density ratio exceeds b0={b0} (max {np.max(vals):.6g})")
    return spec


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def sample_source(spec: ProblemSpec, n: int, seed) -> SampleSet:
    if n < 0:
        raise InputError("sample size must be nonnegative")
    pts = spec.source_law.sample(_rng(seed), n)
    return SampleSet(pts.reshape(-1, 1), seed=_seed_int(seed))


def sample_target(spec: ProblemSpec, m: int, seed) -> SampleSet:
    """Rejection sampling: accept a source draw with probability ``beta(x) / b0``."""
    if spec.b0 is None:
        raise ConfigurationError("b0 is required for target sampling")
    if m < 0:
        raise InputError("sample size must be nonnegative")
    rng = _rng(seed)
    accepted = []
    have = 0
    while have < m:
        batch = int(math.ceil(1.1 * spec.b0 * (m - have))) + 16
        x = spec.source_law.sample(rng, batch)
        u = rng.uniform(0.0, 1.0, batch)
        keep = x[u * spec.b0 < spec.beta(x)]
        accepted.append(keep)
        have += keep.shape[0]
    pts = np.concatenate(accepted)[:m] if accepted else np.zeros(0)
    return SampleSet(pts.reshape(-1, 1), seed=_seed_int(seed))


def sample_labels(spec: ProblemSpec, xs, seed) -> np.ndarray:
    pts = xs.points if isinstance(xs, SampleSet) else as_points(xs)
    clean = spec.f_q(pts)
    if spec.noise_sigma == 0:
        return clean
    return clean + spec.noise_sigma * _rng(seed).standard_normal(pts.shape[0])


def labeled_source(spec: ProblemSpec, n: int, seed) -> SampleSet:
    """Source inputs with labels; inputs and noise use separate streams of ``seed``."""
    xs = sample_source(spec, n, [*_seq(seed), 0])
    y = sample_labels(spec, xs, [*_seq(seed), 1])
    return SampleSet(xs.points, y, seed=_seed_int(seed))


def mc_excess_risk(f, spec: ProblemSpec, n_mc: int, seed, root: bool = False,
                   target: SampleSet | None = None) -> float:
    """Monte-Carlo estimate of ``||f - f_q||^2`` in ``L2(rho_T)``.

    ``f`` is any callable on point arrays.  With ``root=True`` the L2
    error (the square root) is returned.  A precomputed ``target`` sample
    replaces the fresh draw.
    """
    if n_mc < 1 and target is None:
        raise InputError("n_mc must be at least 1")
    xt = sample_target(spec, n_mc, seed) if target is None else target
    diff = np.asarray(f(xt.points)) - spec.f_q(xt.points)
    risk = float(np.mean(diff * diff))
    return math.sqrt(risk) if root else risk


def _seq(seed) -> list:
    return list(seed) if isinstance(seed, (list, tuple)) else [seed]


def _seed_int(seed) -> Optional[int]:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if isinstance(seed, (list, tuple)) and seed and isinstance(seed[0], (int, np.integer)):
        return int(seed[0])
    return None


# ---------------------------------------------------------------- named problems

def _far_anchor(kernel: KernelSpec) -> float:
    """A point whose kernel section is numerically constant on the check window."""
    return 1e3 * max(1.0, kernel.bandwidth)


def _least_squares_expansion(kernel: KernelSpec, func, lo: float, hi: float, n_anchors: int,
                             ridge: float, n_grid: int = CHECK_GRID) -> RepresenterFunction:
    """Ridge least-squares fit of ``func`` on ``[lo, hi]`` by anchors on a slightly wider grid."""
    import scipy.linalg
    from covshift.kernels import gram

    grid = np.linspace(lo, hi, n_grid)
    pad = 0.15 * (hi - lo)
    anchors = np.linspace(lo - pad, hi + pad, n_anchors)
    design = gram(kernel, grid, anchors)
    lhs = np.vstack([design, math.sqrt(ridge) * np.eye(n_anchors)])
    rhs = np.concatenate([func(grid), np.zeros(n_anchors)])
    w = scipy.linalg.lstsq(lhs, rhs)[0]
    return RepresenterFunction.from_expansion(kernel, anchors, w)


def _mild() -> ProblemSpec:
    kernel = KernelSpec.gaussian(0.5)
    law = SourceLaw.uniform(-1.0, 1.0)
    v = RepresenterFunction.from_expansion(kernel, [-1.0, 0.0, 1.0], [-0.5, 1.0, -0.5])
    beta = covariance_power(kernel, law, v, 1.0)
    f_q = RepresenterFunction.from_expansion(kernel, [-0.6, 0.1, 0.7], [0.8, -0.5, 0.6])
    draft = ProblemSpec("shift1d-mild", law, kernel, beta, f_q,
                        construction="beta = T_S (K(.,0) - K(.,-1)/2 - K(.,1)/2), 200-node Gauss-Legendre")
    return normalize_beta(draft)


def _strong() -> ProblemSpec:
    kernel = KernelSpec.gaussian(0.5)
    law = SourceLaw.uniform(-1.0, 1.0)
    beta = RepresenterFunction.from_expansion(kernel, [1.15], [1.0])
    # sharp feature where the target has almost no mass; the narrow bump is
    # only reachable at tiny regularization, so unweighted fits spend their
    # bias budget on it
    def shape(x):
        return 1.5 * np.exp(-(x + 0.5) ** 2 / (2 * 0.07 ** 2)) + 0.5 * x
    f_q = _least_squares_expansion(kernel, shape, -1.0, 1.0, 61, 1e-16)
    draft = ProblemSpec("shift1d-strong", law, kernel, beta, f_q,
                        construction="beta = K(.,1.15); f_q = ridge fit of a width-0.07 bump at -0.5 plus x/2")
    return normalize_beta(draft)


def _noshift() -> ProblemSpec:
    kernel = KernelSpec.augmented(KernelSpec.gaussian(0.5))
    law = SourceLaw.uniform(-1.0, 1.0)
    beta = RepresenterFunction.from_expansion(kernel, [_far_anchor(kernel)], [1.0])
    f_q = RepresenterFunction.from_expansion(kernel, [-0.6, 0.1, 0.7], [0.8, -0.5, 0.6])
    draft = ProblemSpec("noshift", law, kernel, beta, f_q,
                        construction="beta = constant section of the augmented kernel")
    return normalize_beta(draft)


PROBLEMS = {"shift1d-mild": _mild, "shift1d-strong": _strong, "noshift": _noshift}
_problem_cache: dict = {}


def named_problem(name: str) -> ProblemSpec:
    if name not in PROBLEMS:
        raise ConfigurationError(f"unknown problem {name!r}; known: {', '.join(sorted(PROBLEMS))}")
    if name not in _problem_cache:
        _problem_cache[name] = PROBLEMS[name]()
    return _problem_cache[name]


# ---------------------------------------------------------------- problem files

def _fmt_list(values) -> str:
    return " ".join(repr(float(v)) for v in np.asarray(values).reshape(-1))


def _parse_list(text: str, key: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.replace(",", " ").split()], dtype=np.float64)
    except ValueError as exc:
        raise ConfigurationError(f"bad number list for {key}") from exc


def write_problem(spec: ProblemSpec, path) -> None:
    """Write ``spec`` as ``key = value`` lines; beta coefficients are the normalized ones."""
    from covshift.kernels import format_kernel

    b_anchors, b_w = spec.beta.expansion()
    f_anchors, f_w = spec.f_q.expansion()
    if spec.beta.kernel != spec.kernel or spec.f_q.kernel != spec.kernel:
        raise ConfigurationError("problem files need beta and f_q on the problem kernel")
    lines = [
        f"name = {spec.name}",
        f"source = {spec.source_law}",
        f"kernel = {format_kernel(spec.kernel)}",
        f"beta.anchors = {_fmt_list(b_anchors)}",
        f"beta.coeffs = {_fmt_list(b_w)}",
        f"b0 = {spec.b0!r}",
        f"fq.anchors = {_fmt_list(f_anchors)}",
        f"fq.coeffs = {_fmt_list(f_w)}",
        f"noise = {spec.noise_sigma!r}",
    ]
    if spec.construction:
        lines.insert(1, f"# {spec.construction}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_key_values(path) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment line."""
    out = {}
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_problem(path) -> ProblemSpec:
    """Load a problem file; the ratio is renormalized and checked against ``b0``."""
    kv = read_key_values(path)
    required = ("source", "kernel", "beta.anchors", "beta.coeffs", "fq.anchors", "fq.coeffs")
    missing = [k for k in required if k not in kv]
    if missing:
        raise ConfigurationError(f"problem file {path} lacks {', '.join(missing)}")
    try:
        kernel = parse_kernel(kv["kernel"])
        law = parse_law(kv["source"])
    except InputError as exc:
        raise ConfigurationError(str(exc)) from exc
    fns = {}
    for tag in ("beta", "fq"):
        a = _parse_list(kv[f"{tag}.anchors"], f"{tag}.anchors")
        c = _parse_list(kv[f"{tag}.coeffs"], f"{tag}.coeffs")
        if a.shape != c.shape or a.size == 0:
            raise ConfigurationError(f"{tag}.anchors and {tag}.coeffs must be nonempty and equally long")
        fns[tag] = RepresenterFunction.from_expansion(kernel, a, c)
    try:
        b0 = float(kv["b0"]) if "b0" in kv else None
        noise = float(kv.get("noise", 0.1))
    except ValueError as exc:
        raise ConfigurationError("b0 and noise must be numbers") from exc
    draft = ProblemSpec(kv.get("name", str(path)), law, kernel, fns["beta"], fns["fq"], b0=b0,
                        noise_sigma=noise)
    return normalize_beta(draft)


def load_problem(ref: str) -> ProblemSpec:
    """A shipped problem name or a path to a problem file."""
    return named_problem(ref) if ref in PROBLEMS else read_problem(ref)
