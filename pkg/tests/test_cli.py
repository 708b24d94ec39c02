import json

import numpy as np
import pytest

from covshift.cli import main, read_model, write_model
from covshift.kernels import KernelSpec, SampleSet
from covshift.representer import RepresenterFunction
from covshift.rn_estimator import estimate_beta
from covshift.filters import FilterSpec


def write_csv(path, cols, header=None):
    data = np.column_stack(cols)
    lines = [header] if header else []
    lines += [",".join(repr(float(v)) for v in row) for row in data]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def data(tmp_path, rng):
    x = rng.uniform(-1, 1, 60)
    y = np.sin(3 * x) + 0.1 * rng.standard_normal(60)
    return dict(
        train=write_csv(tmp_path / "train.csv", [x, y], "x,y"),
        weights=write_csv(tmp_path / "w.csv", [rng.uniform(0.5, 1.5, 60)]),
        source=write_csv(tmp_path / "src.csv", [rng.uniform(-1, 1, 50)]),
        target=write_csv(tmp_path / "tgt.csv", [rng.uniform(-0.2, 1, 40)]),
        dir=tmp_path,
    )


def read_curve(path):
    lines = open(path).read().splitlines()
    return lines[0], np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


def test_ratio(data):
    out = str(data["dir"] / "beta.csv")
    model = str(data["dir"] / "beta.model")
    assert main(["ratio", "--source", data["source"], "--target", data["target"], "--lambda", "0.1",
                 "--eval-grid=-1:1:5", "--out", out, "--model", model]) == 0
    header, curve = read_curve(out)
    assert header == "x,beta_hat" and curve.shape == (5, 2)
    src = SampleSet(np.loadtxt(data["source"]).reshape(-1, 1))
    tgt = SampleSet(np.loadtxt(data["target"]).reshape(-1, 1))
    est = estimate_beta(src, tgt, KernelSpec.gaussian(0.5), FilterSpec.tikhonov(), 0.1)
    assert np.allclose(curve[:, 1], est(curve[:, 0]), rtol=0, atol=1e-14)
    assert np.allclose(read_model(model)(curve[:, 0]), curve[:, 1], rtol=0, atol=1e-12)


def test_ratio_schedule_stdout(data, capsys):
    assert main(["ratio", "--source", data["source"], "--target", data["target"], "--filter", "itik:2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "x,beta_hat" and len(lines) == 202


@pytest.mark.parametrize("weights", ["exact", "none", "embedded"])
def test_fit(data, weights):
    model, curve = str(data["dir"] / "f.model"), str(data["dir"] / "f.csv")
    spec = {"exact": f"exact:{data['weights']}", "none": "none", "embedded": "embedded"}[weights]
    argv = ["fit", "--train", data["train"], "--weights", spec, "--lambda", "0.01", "--out", model,
            "--eval-grid=-1:1:7", "--eval-out", curve]
    if weights == "embedded":
        argv += ["--rn-source", data["source"], "--rn-target", data["target"], "--rn-lambda", "0.1"]
    assert main(argv) == 0
    f = read_model(model)
    header, vals = read_curve(curve)
    assert header == "x,f_hat"
    assert np.allclose(f(vals[:, 0]), vals[:, 1], rtol=0, atol=1e-12)


def test_aggregate(data):
    model, diag = str(data["dir"] / "a.model"), str(data["dir"] / "d.jsonl")
    assert main(["aggregate", "--train", data["train"], "--weights", f"exact:{data['weights']}",
                 "--target-unlabeled", data["target"], "--lambda-grid", "1e-4:1:6",
                 "--out", model, "--diagnostics", diag]) == 0
    recs = [json.loads(ln) for ln in open(diag)]
    assert len(recs) == 6
    assert set(recs[0]) == {"lambda_k", "norm_k", "kept", "c_k", "solver_note"}
    assert all((r["c_k"] is None) != r["kept"] for r in recs)
    assert read_model(model)(np.zeros(1)).shape == (1,)


def test_sweep_rates_report(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("problem = shift1d-mild\nsizes = 40,40,40,40; 80,80,80,80; 160,160,160,160\n"
                   "trials = 2\nmeasurements = beta_rkhs\nschedule = lambda_MN\n")
    out = str(tmp_path / "r.csv")
    assert main(["--threads", "2", "sweep", "--config", str(cfg), "--out", out]) == 0
    assert main(["rates", "--csv", out, "--measure", "beta_rkhs", "--eta", "1"]) == 0
    assert "beta_rkhs vs MN: slope" in capsys.readouterr().out
    assert main(["report", "--csv", out, "--out-dir", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "summary.csv").exists()


def test_exit_codes(data, tmp_path, capsys):
    assert main(["ratio", "--source", data["source"], "--target", data["target"], "--kernel", "poly:2"]) == 2
    assert main(["ratio", "--source", data["source"], "--target", data["target"], "--lambda", "big"]) == 2
    assert main(["ratio", "--source", str(tmp_path / "missing.csv"), "--target", data["target"]]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3\n")
    assert main(["fit", "--train", str(bad), "--weights", "none", "--lambda", "0.1"]) == 3
    assert main(["fit", "--train", data["train"], "--weights", "embedded", "--lambda", "0.1"]) == 2
    assert main(["fit", "--train", data["train"], "--weights", "sometimes", "--lambda", "0.1"]) == 2
    short = write_csv(tmp_path / "short.csv", [np.ones(3)])
    assert main(["fit", "--train", data["train"], "--weights", f"exact:{short}", "--lambda", "0.1"]) == 3
    cfg = tmp_path / "c.cfg"
    cfg.write_text("problem = shift1d-mild\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 2
    capsys.readouterr()


def test_model_round_trip(tmp_path):
    k = KernelSpec.augmented(KernelSpec.gaussian(0.3))
    f = RepresenterFunction(np.array([[0.1], [0.5]]), [1.0, -2.0], k, np.array([[0.2]]), 0.7)
    path = tmp_path / "m.txt"
    write_model(f, str(path))
    g = read_model(str(path))
    x = np.linspace(-1, 1, 9)
    assert np.allclose(f(x), g(x), rtol=0, atol=1e-15)
    zero = RepresenterFunction.zero(k)
    write_model(zero, str(path))
    assert np.all(read_model(str(path))(x) == 0)
