"""Command-line entry point ``covshift``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import Optional

import numpy as np

from covshift.errors import ConfigurationError, DataError, InputError
from covshift.filters import parse_filter
from covshift.kernels import KernelSpec, SampleSet, format_kernel, parse_kernel

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

log = logging.getLogger("covshift")


# ---------------------------------------------------------------- file formats

def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_table(path) -> tuple[list, np.ndarray]:
    """Numeric CSV with an optional header row; returns ``(header, rows)``."""
    try:
        with open(path, newline="") as fh:
            raw = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    header = []
    if raw and not all(_is_number(c) for c in raw[0]):
        header = [c.strip() for c in raw[0]]
        raw = raw[1:]
    if not raw:
        raise DataError(f"{path} has no data rows")
    width = len(raw[0])
    if any(len(r) != width for r in raw):
        raise DataError(f"{path}: ragged rows")
    try:
        data = np.array([[float(c) for c in r] for r in raw], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from exc
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite entry")
    return header, data


def read_points(path) -> SampleSet:
    """Unlabeled sample: every column is a coordinate."""
    _, data = read_table(path)
    return SampleSet(data)


def read_labeled(path) -> SampleSet:
    """Labeled sample: the last column (or the one named ``y``) is the label."""
    header, data = read_table(path)
    if data.shape[1] < 2:
        raise DataError(f"{path}: labeled data needs at least two columns")
    j = header.index("y") if "y" in header else data.shape[1] - 1
    x = np.delete(data, j, axis=1)
    return SampleSet(x, data[:, j])


def read_vector(path) -> np.ndarray:
    _, data = read_table(path)
    if data.shape[1] != 1:
        raise DataError(f"{path}: expected a single column")
    return data[:, 0]


def _fmt(v) -> str:
    return repr(float(v))


def write_model(f, path_or_file) -> None:
    """Kernel line, anchor count, then ``coords..., coeff`` rows (``f = sum coeff K(., x)``)."""
    anchors, weights = f.expansion()
    lines = [format_kernel(f.kernel), str(anchors.shape[0])]
    lines += [",".join([*map(_fmt, a), _fmt(w)]) for a, w in zip(anchors, weights)]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)


def read_model(path):
    from covshift.representer import RepresenterFunction

    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(lines) < 2:
        raise DataError(f"{path}: truncated model file")
    kernel = parse_kernel(lines[0])
    try:
        count = int(lines[1])
        rows = np.array([[float(c) for c in ln.split(",")] for ln in lines[2:]], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: malformed model file ({exc})") from exc
    if rows.shape[0] != count:
        raise DataError(f"{path}: header says {count} anchors, found {rows.shape[0]}")
    if count == 0:
        return RepresenterFunction.zero(kernel)
    return RepresenterFunction.from_expansion(kernel, rows[:, :-1], rows[:, -1])


def eval_grid(text: str) -> np.ndarray:
    parts = text.split(":")
    try:
        a, b, k = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError) as exc:
        raise ConfigurationError(f"bad eval grid {text!r}; expected a:b:k") from exc
    if len(parts) != 3 or k < 1:
        raise ConfigurationError(f"bad eval grid {text!r}; expected a:b:k")
    return np.linspace(a, b, k)


def write_curve(path: Optional[str], header: str, x: np.ndarray, y: np.ndarray) -> None:
    out = [header] + [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(x, y)]
    text = "\n".join(out) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------- commands

def _kernel(text: str) -> KernelSpec:
    try:
        return parse_kernel(text)
    except InputError as exc:
        raise ConfigurationError(str(exc)) from exc


def _filter(text: str):
    try:
        return parse_filter(text)
    except InputError as exc:
        raise ConfigurationError(str(exc)) from exc


def _ratio_lambda(args, M: int, N: int) -> float:
    from covshift.source_theory import ScheduleSpec, parse_index

    if args.rn_lambda_text == "schedule":
        spec = ScheduleSpec(parse_index(args.phi), parse_index(args.phi_beta), parse_index(args.xi))
        lam = spec.lambda_MN(M, N)
        log.info("scheduled ratio parameter %r", lam)
        return lam
    try:
        return float(args.rn_lambda_text)
    except ValueError as exc:
        raise ConfigurationError(f"lambda must be a number or 'schedule', got {args.rn_lambda_text!r}") from exc


def cmd_ratio(args) -> int:
    from covshift.rn_estimator import estimate_beta

    kernel, filt = _kernel(args.kernel), _filter(args.filter)
    source, target = read_points(args.source), read_points(args.target)
    if source.dim != 1 or target.dim != 1:
        raise DataError("grid output is one-dimensional; use the library for multivariate data")
    args.rn_lambda_text = args.lam
    lam = _ratio_lambda(args, len(target), len(source))
    est = estimate_beta(source, target, kernel, filt, lam)
    if args.eval_grid:
        grid = eval_grid(args.eval_grid)
    else:
        lo = min(source.points.min(), target.points.min())
        hi = max(source.points.max(), target.points.max())
        grid = np.linspace(lo, hi, 201)
    write_curve(args.out, "x,beta_hat", grid, est(grid))
    if args.model:
        write_model(est.function, args.model)
    return EXIT_OK


def _weights(args, train: SampleSet, kernel: KernelSpec):
    from covshift.iwrls import WeightVector, estimated_weights

    spec = args.weights
    if spec == "none":
        return WeightVector.ones(len(train)), None
    if spec.startswith("exact:"):
        vals = read_vector(spec[6:])
        if vals.shape[0] != len(train):
            raise DataError(f"{vals.shape[0]} weights for {len(train)} training points")
        return WeightVector(vals), None
    if spec == "embedded":
        if not (args.rn_source and args.rn_target):
            raise ConfigurationError("embedded weights need --rn-source and --rn-target")
        src, tgt = read_points(args.rn_source), read_points(args.rn_target)
        args.rn_lambda_text = args.rn_lambda
        lam = _ratio_lambda(args, len(tgt), len(src))
        return estimated_weights(train, src, tgt, kernel, _filter(args.rn_filter), lam)
    raise ConfigurationError(f"--weights must be exact:<csv>, embedded or none, got {spec!r}")


def cmd_fit(args) -> int:
    from covshift.iwrls import fit

    kernel, filt = _kernel(args.kernel), _filter(args.filter)
    train = read_labeled(args.train)
    w, _ = _weights(args, train, kernel)
    res = fit(train, w, kernel, filt, args.lam)
    write_model(res.function, args.out if args.out else sys.stdout)
    if args.eval_grid:
        grid = eval_grid(args.eval_grid)
        write_curve(args.eval_out, "x,f_hat", grid, res(grid))
    return EXIT_OK


def cmd_aggregate(args) -> int:
    from covshift.aggregation import aggregate, build_candidates, g_tilde, gram_tilde, parse_grid

    kernel, filt = _kernel(args.kernel), _filter(args.filter)
    train = read_labeled(args.train)
    target = read_points(args.target_unlabeled)
    w, _ = _weights(args, train, kernel)
    try:
        grid = parse_grid(args.lambda_grid)
    except InputError as exc:
        raise ConfigurationError(str(exc)) from exc
    gamma = "auto" if args.gamma_l == "auto" else float(args.gamma_l)
    cands = build_candidates(train, w, kernel, filt, grid, gamma, _threads(args))
    G = gram_tilde(cands, target)
    g = g_tilde(cands, train, w.values)
    agg = aggregate(cands, G, g)
    write_model(agg.function, args.out if args.out else sys.stdout)
    kept_lams = [c.lam for c in cands.candidates]
    coeff_of = dict(zip(kept_lams, agg.coefficients.tolist()))
    dropped = set(cands.discarded)
    records = []
    for k, (lam, norm) in enumerate(zip(cands.lambdas, cands.all_norms)):
        kept = k not in dropped
        records.append(json.dumps({"lambda_k": lam, "norm_k": norm, "kept": kept,
                                   "c_k": coeff_of.get(lam) if kept else None,
                                   "solver_note": agg.solver_note}))
    text = "\n".join(records) + "\n"
    if args.diagnostics:
        with open(args.diagnostics, "w") as fh:
            fh.write(text)
    else:
        sys.stderr.write(text)
    return EXIT_OK


def _threads(args) -> int:
    from covshift import _backend

    return args.threads if args.threads else _backend.num_threads()


def cmd_sweep(args) -> int:
    from covshift.harness import read_config, run_sweep

    cfg = read_config(args.config)
    rows = run_sweep(cfg, args.out, args.threads)
    log.info("wrote %d rows to %s", len(rows), args.out)
    return EXIT_OK


def cmd_rates(args) -> int:
    from covshift.harness import default_independent, fit_rate

    indep = args.independent or default_independent(args.measure)
    rep = fit_rate(args.csv, args.measure, indep, r=args.r, eta=args.eta, varsigma=args.varsigma)
    print(f"{args.measure} vs {indep}: {rep.summary()}")
    return EXIT_OK


def cmd_report(args) -> int:
    from covshift.harness import report

    for path in report(args.csv, args.out_dir, r=args.r, eta=args.eta, varsigma=args.varsigma):
        print(path)
    return EXIT_OK


def _add_inputs(p, ratio_only=False):
    p.add_argument("--kernel", default="gaussian:0.5", help="gaussian:<sigma>, optionally prefixed by const+")
    p.add_argument("--filter", default="tikhonov", help="tikhonov, itik:<nu> or cutoff")
    p.add_argument("--phi", default="power:0.5")
    p.add_argument("--phi-beta", default="power:1")
    p.add_argument("--xi", default="power:0.5")
    if ratio_only:
        return
    p.add_argument("--train", required=True, help="labeled CSV x,y")
    p.add_argument("--weights", default="embedded", help="exact:<csv>, embedded or none")
    p.add_argument("--rn-source")
    p.add_argument("--rn-target")
    p.add_argument("--rn-filter", default="tikhonov")
    p.add_argument("--rn-lambda", default="schedule", help="number or 'schedule'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covshift", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default COVSHIFT_THREADS or 1)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ratio", help="estimate the density ratio")
    _add_inputs(p, ratio_only=True)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--lambda", dest="lam", default="schedule", help="number or 'schedule'")
    p.add_argument("--eval-grid", help="a:b:k evaluation grid")
    p.add_argument("--out", help="CSV x,beta_hat (default stdout)")
    p.add_argument("--model", help="also write the estimate as a model file")
    p.set_defaults(func=cmd_ratio)

    p = sub.add_parser("fit", help="importance-weighted regularized least squares")
    _add_inputs(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out", help="model file (default stdout)")
    p.add_argument("--eval-grid", help="a:b:k evaluation grid")
    p.add_argument("--eval-out", help="CSV x,f_hat (default stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("aggregate", help="aggregate fits over a lambda grid")
    _add_inputs(p)
    p.add_argument("--target-unlabeled", required=True)
    p.add_argument("--lambda-grid", default="1e-6:1:12", help="a:b:k geometric grid")
    p.add_argument("--gamma-l", default="auto")
    p.add_argument("--out", help="model file (default stdout)")
    p.add_argument("--diagnostics", help="JSON-lines file (default stderr)")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("sweep", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    for name, func, help_ in (("rates", cmd_rates, "log-log slope of one measure"),
                              ("report", cmd_report, "summary table and gnuplot script")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--csv", required=True)
        p.add_argument("--r", type=float, help="declared regression smoothness r > 1/2")
        p.add_argument("--eta", type=float, help="declared ratio smoothness")
        p.add_argument("--varsigma", type=float, default=0.0, help="declared kernel exponent")
        if name == "rates":
            p.add_argument("--measure", required=True)
            p.add_argument("--independent", choices=("mn", "MN"))
        else:
            p.add_argument("--out-dir", required=True)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="covshift: %(levelname)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be positive")
        os.environ["COVSHIFT_THREADS"] = str(args.threads)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"covshift: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"covshift: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
