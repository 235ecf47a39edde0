import json

import numpy as np
import pytest

from sppa import cli
from sppa import experiment as ex
from sppa.config import CHECKS, KEYS, load_config, parse_config
from sppa.engine import run_ensemble
from sppa.errors import ConfigError
from sppa.geometry import Euclidean, write_points
from sppa.io import read_manifest, read_trace, run_config_from_manifest, write_trace

MINIMAL = """\
# single anchor, no diagnostics
run.space = euclidean(2)
run.iterations = 10
run.x0 = 1,1
integrand.anchors = 0,0
output.dir = out
"""


def _write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.fixture
def full_config(tmp_path):
    E = Euclidean(3)
    rng = np.random.default_rng(0)
    write_points(E, tmp_path / "anchors.txt", [E.random_point(rng, 1.0) for _ in range(12)])
    text = """\
run.space = euclidean(3)
run.iterations = 2000
run.trace_stride = 100
run.replicas = 20
run.seed = 7
integrand.anchor_file = anchors.txt
baseline.kind = auto
diagnostics.checks = step_bound, convergence, quasi_fejer, quasi_fejer_exact, boundedness, asymptotic_center
diagnostics.mc_samples = 500
diagnostics.states = 20
diagnostics.min_fraction = 0.5
output.dir = out
"""
    return _write(tmp_path, text)


# --- config parsing


@pytest.mark.parametrize(
    "text,msg",
    [
        ("run.spaec = euclidean(2)\n", "unknown key"),
        ("run.space = euclidean(2)\nrun.space = spider(2)\n", "duplicate"),
        ("run.iterations = many\n", "bad value"),
        ("just words\n", "key = value"),
        ("run.mode = splitting\n", "splitting requires"),
        ("integrand.anchor_file = nope.txt\n", "does not exist"),
        ("diagnostics.checks = step_bound, vibes\n", "unknown diagnostics"),
        ("run.reference = baseline\n", "needs baseline"),
        ("diagnostics.eps = tiny\n", "eps"),
    ],
)
def test_config_rejections(tmp_path, text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text, tmp_path)


def test_config_defaults_and_comments(tmp_path):
    cfg = parse_config("run.seed = 3  # trailing comment\n\n# whole line\n", tmp_path)
    assert cfg["run.seed"] == 3 and cfg["run.schedule.p"] == 0.75
    assert set(CHECKS) >= set(cfg["diagnostics.checks"])
    assert all("." in k for k in KEYS)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


# --- experiments


def test_minimal_experiment(tmp_path):
    out = ex.run_experiment(load_config(_write(tmp_path, MINIMAL)), workers=1)
    assert out.exit_code == 0, out.message
    rows = (tmp_path / "out" / "trace.csv").read_text().splitlines()
    assert len(rows) == 12  # header + 11 rows
    assert rows[0].split(",")[:9] == ["replica", "n", "lambda", "event", "step_len", "step_bound", "dist_ref", "F_hat", "F_se"]


def test_rejected_schedule_exit_code(tmp_path):
    out = ex.run_experiment(load_config(_write(tmp_path, MINIMAL + "run.schedule.p = 0.5\n")))
    assert out.exit_code == 2 and "Robbins-Monro" in out.message


def test_internal_error_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(ex, "run_ensemble", boom)
    out = ex.run_experiment(load_config(_write(tmp_path, MINIMAL)))
    assert out.exit_code == 3 and "disk on fire" in out.message


def test_failed_check_exit_code(tmp_path):
    text = MINIMAL + "baseline.kind = auto\ndiagnostics.checks = convergence\ndiagnostics.eps = 1e-12\n"
    out = ex.run_experiment(load_config(_write(tmp_path, text)), workers=1)
    assert out.exit_code == 1 and "convergence" in out.message


def test_full_pipeline(full_config, tmp_path):
    out = ex.run_experiment(load_config(full_config), workers=1)
    assert out.exit_code == 0, out.message
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["passed"]
    assert report["checks"]["quasi_fejer"]["summary"]["pass_rate"] >= 0.99
    assert (tmp_path / "out" / "detail" / "quasi_fejer.csv").exists()


def test_reproducible_and_manifest_complete(full_config, tmp_path):
    cfg = load_config(full_config)
    ex.run_experiment(cfg, workers=1)
    first = (tmp_path / "out" / "trace.csv").read_bytes()
    verdicts = json.loads((tmp_path / "out" / "report.json").read_text())["checks"]
    ex.run_experiment(cfg, workers=2)
    assert (tmp_path / "out" / "trace.csv").read_bytes() == first
    again = json.loads((tmp_path / "out" / "report.json").read_text())["checks"]
    assert {k: v["passed"] for k, v in again.items()} == {k: v["passed"] for k, v in verdicts.items()}
    # rebuild from the manifest alone
    rc, R, split = run_config_from_manifest(read_manifest(tmp_path / "out" / "manifest.json"))
    write_trace(tmp_path / "rebuilt.csv", run_ensemble(rc, R, splitting=split, workers=1))
    assert (tmp_path / "rebuilt.csv").read_bytes() == first


def test_trace_round_trip(full_config, tmp_path):
    out = ex.run_experiment(load_config(full_config), workers=1)
    back = read_trace(out.paths["trace"])
    for a, b in zip(out.ensemble.traces, back.traces):
        np.testing.assert_array_equal(a.step_len, b.step_len)
        np.testing.assert_array_equal(a.F_hat, b.F_hat)
        np.testing.assert_allclose(a.alpha[:-1], b.alpha[:-1], rtol=1e-12)


def test_splitting_config(tmp_path):
    text = """\
run.space = spider(3)
run.mode = splitting
run.x0 = 1,1
run.iterations = 3000
run.replicas = 5
integrand.family = distance
integrand.layout = sum
integrand.anchors = 1,1 | 2,1 | 3,1
baseline.kind = exhaustive-search
diagnostics.checks = convergence, step_bound
diagnostics.eps = 0.05
"""
    out = ex.run_experiment(load_config(_write(tmp_path, text)), workers=1)
    assert out.exit_code == 0, out.message
    assert out.baseline.min_sum == pytest.approx(3.0)


# --- command line


def test_cli_validate_schedule(capsys):
    assert cli.main(["validate-schedule", "--p", "0.75"]) == 0
    assert cli.main(["validate-schedule", "--p", "1.2"]) == 1
    assert "rejected" in capsys.readouterr().out
    assert cli.main(["validate-schedule", "--p", "0.75", "--n0", "0"]) == 2


def test_cli_run_and_diagnose(full_config, tmp_path, capsys):
    assert cli.main(["run", "--config", str(full_config), "--workers", "1"]) == 0
    trace, manifest = tmp_path / "out" / "trace.csv", tmp_path / "out" / "manifest.json"
    code = cli.main(
        ["diagnose", "--trace", str(trace), "--manifest", str(manifest), "--checks", "step_bound,boundedness,quasi_fejer_exact", "--states", "10", "--out", str(tmp_path / "d.json")]
    )
    assert code == 0
    assert json.loads((tmp_path / "d.json").read_text())["passed"]
    # sequence checks run from the trace; at this short horizon only their summaries are asserted
    cli.main(["diagnose", "--trace", str(trace), "--manifest", str(manifest), "--checks", "summability,lipschitz_sum", "--out", str(tmp_path / "s.json")])
    checks = json.loads((tmp_path / "s.json").read_text())["checks"]
    assert checks["summability"]["summary"]["S_stable"]
    assert checks["lipschitz_sum"]["summary"]["clip_events"] == 0
    assert cli.main(["diagnose", "--trace", str(trace), "--checks", "convergence", "--eps", "0.5"]) == 0
    # iterate checks without a manifest are a usage error
    assert cli.main(["diagnose", "--trace", str(trace), "--checks", "quasi_fejer"]) == 2
    # a trace that no longer matches its manifest is refused
    lines = trace.read_text().splitlines()
    cols = lines[5].split(",")
    cols[4] = "0.5"
    lines[5] = ",".join(cols)
    trace.write_text("\n".join(lines) + "\n")
    assert cli.main(["diagnose", "--trace", str(trace), "--manifest", str(manifest), "--checks", "quasi_fejer"]) == 2
    assert "does not match" in capsys.readouterr().err


def test_cli_baseline(tmp_path, capsys):
    text = "run.space = euclidean(2)\nintegrand.anchors = 0,0 | 2,0\nbaseline.kind = auto\n"
    assert cli.main(["baseline", "--config", str(_write(tmp_path, text))]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["argmin"] == "1,0" and data["min_sum"] == 1.0 and data["method"] == "closed-form"
    assert cli.main(["baseline", "--config", str(_write(tmp_path, "run.space = euclidean(2)\nintegrand.anchors = 0,0\n", "b.cfg"))]) == 2


@pytest.mark.parametrize(
    "lemma,extra,status",
    [
        ("two-series", "simulate.N = 4000\nsimulate.replicas = 20\n", None),
        ("lipschitz-sum", "simulate.N = 4000\nsimulate.replicas = 20\n", "converged"),
        ("lipschitz-sum", "simulate.N = 4000\nsimulate.replicas = 10\nsimulate.beta = persistent\nsimulate.admissible = false\n", "hypothesis-violated"),
    ],
)
def test_cli_simulate(tmp_path, capsys, lemma, extra, status):
    p = _write(tmp_path, extra + "output.dir = sim\n")
    assert cli.main(["simulate", "--lemma", lemma, "--config", str(p)]) == 0
    summary = json.loads(capsys.readouterr().out)
    if status:
        assert summary["status"] == status
    else:
        assert summary["shrinks"] and not summary["flagged"]
    assert list((tmp_path / "sim").glob("*.json"))


def test_cli_simulate_adversarial_two_series(tmp_path, capsys):
    p = _write(tmp_path, "simulate.N = 4000\nsimulate.replicas = 10\nsimulate.schedule.p = 0.5\nsimulate.adversarial = true\noutput.dir = sim\n")
    assert cli.main(["simulate", "--lemma", "two-series", "--config", str(p)]) == 0
    assert json.loads(capsys.readouterr().out)["flagged"]
    p = _write(tmp_path, "simulate.schedule.p = 0.5\noutput.dir = sim\n", "b.cfg")
    assert cli.main(["simulate", "--lemma", "two-series", "--config", str(p)]) == 2
