"""Experiment sweeps, CSV persistence and log-log rate fits.

A sweep runs every ``(size, trial)`` cell of a config in a thread pool.  A
cell draws its samples from seed ``base_seed + trial`` (streams keyed by
the size index), runs the selected pipelines and returns rows; rows are
sorted by (measure, size index, trial) before writing so the CSV does not
depend on scheduling.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.stats

from covshift import _backend
from covshift.aggregation import aggregate, build_candidates, g_tilde, gram_tilde, parse_grid, surrogate
from covshift.errors import ConfigurationError, CovshiftError, InputError
from covshift.filters import FilterSpec, format_filter, parse_filter
from covshift.iwrls import WeightedProblem, WeightVector
from covshift.representer import rkhs_distance
from covshift.rn_estimator import clipped_values, estimate_beta
from covshift.source_theory import ScheduleSpec, format_index, parse_index, rate_exponent
from covshift.synthetic import (ProblemSpec, labeled_source, load_problem, read_key_values,
                                sample_source, sample_target)

log = logging.getLogger("covshift")

COLUMNS = ("problem", "measure", "m", "n", "M", "N", "lambda", "trial", "seed", "value")
MEASUREMENTS = ("beta_rkhs", "beta_pointwise", "risk_L2_mc", "f_rkhs", "aggregate_vs_best")
AGGREGATE_ROWS = ("aggregate_L2", "best_single_L2", "aggregate_Q_gap")
RATIO_MEASURES = ("beta_rkhs", "beta_pointwise")
WEIGHT_MODES = ("embedded", "exact", "none")
MIN_MC = 1000

# sample streams within one (trial, size) cell
_TRAIN, _TARGET, _RN_SOURCE, _RN_TARGET, _MC = range(5)


@dataclass(frozen=True)
class Schedule:
    """``fixed`` with ``value``, or one of the named schedules."""

    kind: str
    value: float = 0.0

    def __str__(self):
        return f"fixed:{self.value!r}" if self.kind == "fixed" else self.kind


def parse_schedule(text: str) -> Schedule:
    text = text.strip()
    if text in ("lambda_mn", "lambda_MN", "lambda_delta"):
        return Schedule(text)
    if text.startswith("fixed:"):
        try:
            val = float(text[6:])
        except ValueError as exc:
            raise ConfigurationError(f"bad fixed schedule {text!r}") from exc
        if not val > 0:
            raise ConfigurationError("fixed regularization parameter must be positive")
        return Schedule("fixed", val)
    raise ConfigurationError(f"unknown schedule {text!r}; expected fixed:<lam>, lambda_mn, lambda_MN or lambda_delta")


def _parse_sizes(text: str) -> tuple:
    sizes = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            vals = tuple(int(v) for v in chunk.replace("x", ",").split(","))
        except ValueError as exc:
            raise ConfigurationError(f"bad size tuple {chunk!r}") from exc
        if len(vals) != 4 or min(vals) < 1:
            raise ConfigurationError(f"size tuples are m,n,M,N with positive entries, got {chunk!r}")
        sizes.append(vals)
    return tuple(sizes)


def _parse_linear(text: str) -> np.ndarray:
    parts = text.split(":")
    try:
        a, b, k = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError) as exc:
        raise ConfigurationError(f"bad probe grid {text!r}; expected a:b:k") from exc
    if len(parts) != 3 or k < 1 or not a <= b:
        raise ConfigurationError(f"bad probe grid {text!r}; expected a:b:k")
    return np.linspace(a, b, k)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    problem: str
    sizes: tuple
    trials: int = 1
    base_seed: int = 0
    filter_reg: FilterSpec = field(default_factory=FilterSpec.tikhonov)
    filter_rn: FilterSpec = field(default_factory=FilterSpec.tikhonov)
    schedule: Optional[Schedule] = None
    rn_schedule: Optional[Schedule] = None
    phi: str = "power:0.5"
    phi_beta: str = "power:1"
    xi: str = "power:0.5"
    measurements: tuple = ()
    n_mc: int = 4000
    probe_grid: str = "-1:1:201"
    lambda_grid: str = "1e-6:1:12"
    gamma_l: str = "auto"
    weights: str = "embedded"
    threads: Optional[int] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        if not self.sizes:
            raise ConfigurationError("sizes must be nonempty")
        bad = [m for m in self.measurements if m not in MEASUREMENTS]
        if bad:
            raise ConfigurationError(f"unknown measurements {bad}; choose from {MEASUREMENTS}")
        needs_mc = {"risk_L2_mc", "aggregate_vs_best"} & set(self.measurements)
        if needs_mc and self.n_mc < MIN_MC:
            raise ConfigurationError(f"n_mc must be at least {MIN_MC} for Monte-Carlo risks")
        if self.weights not in WEIGHT_MODES:
            raise ConfigurationError(f"weights must be one of {WEIGHT_MODES}")
        if self.gamma_l != "auto":
            try:
                float(self.gamma_l)
            except ValueError as exc:
                raise ConfigurationError(f"gamma_l must be a number or 'auto', got {self.gamma_l!r}") from exc
        try:
            self.schedule_spec
            _parse_linear(self.probe_grid)
            parse_grid(self.lambda_grid)
        except InputError as exc:
            raise ConfigurationError(str(exc)) from exc

    @property
    def schedule_spec(self) -> ScheduleSpec:
        return ScheduleSpec(parse_index(self.phi), parse_index(self.phi_beta), parse_index(self.xi))

    def regression_schedule(self) -> Schedule:
        """Schedule of the regression parameter."""
        if self.schedule is not None and self.schedule.kind != "lambda_MN":
            return self.schedule
        return Schedule("lambda_delta" if self.weights == "embedded" else "lambda_mn")

    def ratio_schedule(self) -> Schedule:
        """Schedule of the ratio-estimation parameter."""
        if self.rn_schedule is not None:
            return self.rn_schedule
        if self.schedule is not None and self.schedule.kind in ("fixed", "lambda_MN"):
            return self.schedule
        return Schedule("lambda_MN")

    def lambda_rn(self, size) -> float:
        _, _, M, N = size
        sch = self.ratio_schedule()
        if sch.kind == "fixed":
            return sch.value
        if sch.kind != "lambda_MN":
            raise ConfigurationError(f"{sch} cannot schedule the ratio estimate")
        return self.schedule_spec.lambda_MN(M, N)

    def lambda_reg(self, size) -> float:
        m, n, M, N = size
        sch = self.regression_schedule()
        if sch.kind == "fixed":
            return sch.value
        if sch.kind == "lambda_mn":
            return self.schedule_spec.lambda_mn(m, n)
        return self.schedule_spec.lambda_delta(m, n, M, N)

    def lambda_for(self, measure: str, size) -> float:
        """The value written to the ``lambda`` column for ``measure``."""
        if measure in RATIO_MEASURES:
            return self.lambda_rn(size)
        if measure in ("risk_L2_mc", "f_rkhs"):
            return self.lambda_reg(size)
        return self.lambda_rn(size) if self.weights == "embedded" else 0.0

    def row_measures(self) -> list:
        out = []
        for m in self.measurements:
            out.extend(AGGREGATE_ROWS if m == "aggregate_vs_best" else (m,))
        return out


CONFIG_KEYS = ("problem", "sizes", "trials", "base_seed", "filter_reg", "filter_rn", "schedule",
               "rn_schedule", "phi", "phi_beta", "xi", "measurements", "n_mc", "probe_grid",
               "lambda_grid", "gamma_l", "weights", "threads")


def config_from_mapping(kv: dict) -> ExperimentConfig:
    unknown = sorted(set(kv) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("problem", "sizes"):
        if key not in kv:
            raise ConfigurationError(f"config lacks required key {key!r}")
    try:
        args = dict(problem=kv["problem"], sizes=_parse_sizes(kv["sizes"]))
        for key in ("trials", "base_seed", "n_mc", "threads"):
            if key in kv:
                args[key] = int(kv[key])
        for key in ("filter_reg", "filter_rn"):
            if key in kv:
                args[key] = parse_filter(kv[key])
        for key in ("schedule", "rn_schedule"):
            if key in kv:
                args[key] = parse_schedule(kv[key])
        for key in ("phi", "phi_beta", "xi", "probe_grid", "lambda_grid", "gamma_l", "weights"):
            if key in kv:
                args[key] = kv[key].strip()
        if "measurements" in kv:
            args["measurements"] = tuple(t.strip() for t in kv["measurements"].split(",") if t.strip())
    except (ValueError, InputError) as exc:
        raise ConfigurationError(f"bad config value: {exc}") from exc
    return ExperimentConfig(**args)


def read_config(path) -> ExperimentConfig:
    return config_from_mapping(read_key_values(path))


def format_config(cfg: ExperimentConfig) -> str:
    lines = [
        f"problem = {cfg.problem}",
        "sizes = " + "; ".join(",".join(str(v) for v in s) for s in cfg.sizes),
        f"trials = {cfg.trials}",
        f"base_seed = {cfg.base_seed}",
        f"filter_reg = {format_filter(cfg.filter_reg)}",
        f"filter_rn = {format_filter(cfg.filter_rn)}",
    ]
    if cfg.schedule is not None:
        lines.append(f"schedule = {cfg.schedule}")
    if cfg.rn_schedule is not None:
        lines.append(f"rn_schedule = {cfg.rn_schedule}")
    lines += [
        f"phi = {cfg.phi}",
        f"phi_beta = {cfg.phi_beta}",
        f"xi = {cfg.xi}",
        "measurements = " + ", ".join(cfg.measurements),
        f"n_mc = {cfg.n_mc}",
        f"probe_grid = {cfg.probe_grid}",
        f"lambda_grid = {cfg.lambda_grid}",
        f"gamma_l = {cfg.gamma_l}",
        f"weights = {cfg.weights}",
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- sweep

def _pool_size(cfg: ExperimentConfig, threads: Optional[int]) -> int:
    if threads is not None:
        return max(1, threads)
    if cfg.threads is not None:
        return max(1, cfg.threads)
    return _backend.num_threads()


def _l2(f, xs, truth) -> float:
    diff = f(xs) - truth
    return math.sqrt(float(np.mean(diff * diff)))


def run_cell(cfg: ExperimentConfig, prob: ProblemSpec, size_index: int, trial: int) -> list:
    """Rows ``(measure, size_index, trial, lambda, value)`` for one cell.

    A failing measure is logged and skipped; the other measures still run.
    """
    size = cfg.sizes[size_index]
    m, n, M, N = size
    seed = cfg.base_seed + trial
    stream = lambda k: [seed, size_index, k]  # noqa: E731
    rows = []
    measures = set(cfg.measurements)
    regression = measures & {"risk_L2_mc", "f_rkhs", "aggregate_vs_best"}

    est = None
    if measures & set(RATIO_MEASURES) or (regression and cfg.weights == "embedded"):
        try:
            lam_rn = cfg.lambda_rn(size)
            est = estimate_beta(sample_source(prob, N, stream(_RN_SOURCE)),
                                sample_target(prob, M, stream(_RN_TARGET)),
                                prob.kernel, cfg.filter_rn, lam_rn)
        except (CovshiftError, scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
            log.warning("trial %d size %s: ratio estimate failed: %s", trial, size, exc)

    def emit(measure, func):
        try:
            rows.append((measure, size_index, trial, cfg.lambda_for(measure, size), float(func())))
        except (CovshiftError, scipy.linalg.LinAlgError, np.linalg.LinAlgError, ValueError) as exc:
            log.warning("trial %d size %s measure %s skipped: %s", trial, size, measure, exc)

    if est is not None:
        if "beta_rkhs" in measures:
            emit("beta_rkhs", lambda: rkhs_distance(est.function, prob.beta))
        if "beta_pointwise" in measures:
            probes = _parse_linear(cfg.probe_grid)
            emit("beta_pointwise", lambda: np.max(np.abs(est(probes) - prob.beta(probes))))

    if not regression:
        return rows
    if cfg.weights == "embedded" and est is None:
        return rows
    train = labeled_source(prob, n, stream(_TRAIN))
    if cfg.weights == "exact":
        weights = WeightVector(prob.beta(train.points))
    elif cfg.weights == "none":
        weights = WeightVector.ones(n)
    else:
        weights = WeightVector(clipped_values(est, train), f"estimated({est.lam!r}, {est.filter})")
    mc = sample_target(prob, cfg.n_mc, stream(_MC)).points
    truth = prob.f_q(mc)

    if measures & {"risk_L2_mc", "f_rkhs"}:
        try:
            fit = WeightedProblem(train, weights, prob.kernel).fit(cfg.filter_reg, cfg.lambda_reg(size))
        except (CovshiftError, scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
            log.warning("trial %d size %s: regression fit failed: %s", trial, size, exc)
            fit = None
        if fit is not None:
            if "risk_L2_mc" in measures:
                emit("risk_L2_mc", lambda: _l2(fit, mc, truth))
            if "f_rkhs" in measures:
                emit("f_rkhs", lambda: rkhs_distance(fit.function, prob.f_q))

    if "aggregate_vs_best" in measures:
        try:
            gamma = cfg.gamma_l if cfg.gamma_l == "auto" else float(cfg.gamma_l)
            cands = build_candidates(train, weights, prob.kernel, cfg.filter_reg,
                                     parse_grid(cfg.lambda_grid), gamma)
            G = gram_tilde(cands, sample_target(prob, m, stream(_TARGET)))
            g = g_tilde(cands, train, weights.values)
            agg = aggregate(cands, G, g)
        except (CovshiftError, scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
            log.warning("trial %d size %s: aggregation failed: %s", trial, size, exc)
        else:
            q_units = [surrogate(G, g, e) for e in np.eye(len(cands))]
            emit("aggregate_L2", lambda: _l2(agg, mc, truth))
            emit("best_single_L2", lambda: min(_l2(c, mc, truth) for c in cands.candidates))
            emit("aggregate_Q_gap", lambda: min(q_units) - surrogate(G, g, agg.coefficients))
    return rows


def sweep_rows(cfg: ExperimentConfig, threads: Optional[int] = None) -> list:
    """All rows of the sweep as dicts, in the canonical order."""
    prob = load_problem(cfg.problem)
    cells = [(s, t) for s in range(len(cfg.sizes)) for t in range(cfg.trials)]
    order = {name: i for i, name in enumerate(cfg.row_measures())}
    if not order:
        return []
    workers = _pool_size(cfg, threads)
    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(workers) as pool:
            chunks = list(pool.map(lambda c: run_cell(cfg, prob, *c), cells))
    else:
        chunks = [run_cell(cfg, prob, *c) for c in cells]
    raw = [r for chunk in chunks for r in chunk]
    raw.sort(key=lambda r: (order[r[0]], r[1], r[2]))
    out = []
    for measure, s, t, lam, value in raw:
        if not math.isfinite(value):
            log.warning("trial %d size %s measure %s: non-finite value dropped", t, cfg.sizes[s], measure)
            continue
        m, n, M, N = cfg.sizes[s]
        out.append(dict(problem=prob.name, measure=measure, m=m, n=n, M=M, N=N, **{"lambda": lam},
                        trial=t, seed=cfg.base_seed + t, value=value))
    return out


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_rows(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])


def read_rows(path) -> list:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                return []
            if tuple(reader.fieldnames) != COLUMNS:
                raise InputError(f"{path}: expected columns {','.join(COLUMNS)}")
            rows = []
            for r in reader:
                rows.append(dict(problem=r["problem"], measure=r["measure"],
                                 **{k: int(r[k]) for k in ("m", "n", "M", "N", "trial", "seed")},
                                 **{"lambda": float(r["lambda"]), "value": float(r["value"])}))
            return rows
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise InputError(f"{path}: malformed row ({exc})") from exc


def run_sweep(cfg: ExperimentConfig, out_path, threads: Optional[int] = None) -> list:
    rows = sweep_rows(cfg, threads)
    write_rows(rows, out_path)
    return rows


# ---------------------------------------------------------------- rates

SETTING_OF = {"beta_rkhs": "beta_rkhs", "beta_pointwise": "beta_pointwise",
              "risk_L2_mc": "regression_L2", "f_rkhs": "regression_H",
              "aggregate_L2": "regression_L2", "best_single_L2": "regression_L2"}


@dataclass(frozen=True, eq=False)
class RateReport:
    rows: tuple
    fitted_slope: float
    slope_stderr: float
    theoretical_exponent: Optional[float]
    intercept: float = 0.0
    points: tuple = ()

    def summary(self) -> str:
        theo = "n/a" if self.theoretical_exponent is None else f"{self.theoretical_exponent:.4f}"
        return (f"slope {self.fitted_slope:.4f} +/- {self.slope_stderr:.4f} "
                f"(theory {theo}, {len(self.points)} size points)")


def size_point(row: dict, independent: str) -> float:
    if independent == "mn":
        return row["m"] ** -0.5 + row["n"] ** -0.5
    if independent == "MN":
        return row["M"] ** -0.5 + row["N"] ** -0.5
    raise InputError(f"independent must be 'mn' or 'MN', got {independent!r}")


def medians_by_size(rows: Sequence[dict], measure: str) -> list:
    """``((m, n, M, N), median, count)`` in first-appearance order."""
    groups: dict = {}
    for r in rows:
        if r["measure"] == measure:
            groups.setdefault((r["m"], r["n"], r["M"], r["N"]), []).append(r["value"])
    return [(k, float(np.median(v)), len(v)) for k, v in groups.items()]


def theoretical_exponent(measure: str, r=None, eta=None, varsigma=0.0) -> Optional[float]:
    setting = SETTING_OF.get(measure)
    if setting is None:
        return None
    try:
        if setting.startswith("regression"):
            return None if r is None else rate_exponent(setting, r=r)
        return None if eta is None else rate_exponent(setting, eta=eta, varsigma=varsigma)
    except InputError:
        return None


def fit_rate(rows_or_path, measure: str, independent: str, r=None, eta=None,
             varsigma: float = 0.0) -> RateReport:
    """Least-squares slope of log(median value) against log(size functional)."""
    rows = read_rows(rows_or_path) if isinstance(rows_or_path, (str, os.PathLike)) else list(rows_or_path)
    sel = [row for row in rows if row["measure"] == measure]
    meds = medians_by_size(sel, measure)
    pts = {}
    for key, med, _ in meds:
        s = size_point(dict(zip(("m", "n", "M", "N"), key)), independent)
        pts.setdefault(s, []).append(med)
    if len(pts) < 3:
        raise InputError(f"need at least 3 distinct size points for {measure!r}, have {len(pts)}")
    xs = np.array(sorted(pts))
    ys = np.array([float(np.median(pts[x])) for x in xs])
    if np.any(ys <= 0):
        raise InputError("medians must be positive for a log-log fit")
    fit = scipy.stats.linregress(np.log(xs), np.log(ys))
    return RateReport(tuple(sel), float(fit.slope), float(fit.stderr),
                      theoretical_exponent(measure, r, eta, varsigma), float(fit.intercept),
                      tuple(zip(xs.tolist(), ys.tolist())))


def default_independent(measure: str) -> str:
    return "MN" if measure in RATIO_MEASURES else "mn"


def report(rows_or_path, out_dir, r=None, eta=None, varsigma: float = 0.0) -> list:
    """Write ``summary.csv`` and, when there is data, ``plots.gp``; return written paths."""
    rows = read_rows(rows_or_path) if isinstance(rows_or_path, (str, os.PathLike)) else list(rows_or_path)
    csv_name = os.path.abspath(rows_or_path) if isinstance(rows_or_path, (str, os.PathLike)) else "results.csv"
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create {out_dir}: {exc}") from exc
    measures = list(dict.fromkeys(r_["measure"] for r_ in rows))
    summary = os.path.join(out_dir, "summary.csv")
    lines = ["measure,m,n,M,N,count,median,slope,slope_stderr,theory"]
    for meas in measures:
        indep = default_independent(meas)
        try:
            rep = fit_rate(rows, meas, indep, r, eta, varsigma)
            slope, err = repr(rep.fitted_slope), repr(rep.slope_stderr)
            theo = "" if rep.theoretical_exponent is None else repr(rep.theoretical_exponent)
        except InputError:
            slope = err = theo = ""
        for key, med, cnt in medians_by_size(rows, meas):
            lines.append(",".join([meas, *map(str, key), str(cnt), repr(med), slope, err, theo]))
    written = []
    try:
        with open(summary, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        written.append(summary)
        if measures:
            script = os.path.join(out_dir, "plots.gp")
            with open(script, "w") as fh:
                fh.write(_gnuplot(csv_name, measures))
            written.append(script)
    except OSError as exc:
        raise InputError(f"cannot write into {out_dir}: {exc}") from exc
    return written


def _gnuplot(csv_name: str, measures: Sequence[str]) -> str:
    out = [
        "# log-log error plots; run with: gnuplot plots.gp",
        "set datafile separator ','",
        "set logscale xy",
        "set key left top",
        "set terminal pngcairo size 800,600",
        f"data = '{csv_name}'",
    ]
    for meas in measures:
        indep = default_independent(meas)
        xcol = "($5**-0.5 + $6**-0.5)" if indep == "MN" else "($3**-0.5 + $4**-0.5)"
        label = "M^{-1/2}+N^{-1/2}" if indep == "MN" else "m^{-1/2}+n^{-1/2}"
        out += [
            "",
            f"# {meas}",
            f"set output '{meas}.png'",
            f"set xlabel '{label}'",
            f"set ylabel '{meas}'",
            f"plot data using (strcol(2) eq '{meas}' ? {xcol} : 1/0):10 with points title '{meas}'",
        ]
    return "\n".join(out) + "\n"


def schedule_summary(cfg: ExperimentConfig) -> str:
    spec = cfg.schedule_spec
    return (f"phi={format_index(spec.phi)} phi_beta={format_index(spec.phi_beta)} "
            f"xi={format_index(spec.xi)} regression={cfg.regression_schedule()} ratio={cfg.ratio_schedule()}")
