import csv
import io
import json
import math

import numpy as np
import pytest

from cuspflow import cli, harness
from cuspflow.harness import (
    CSV_COLUMNS,
    Check,
    ConfigError,
    ExperimentConfig,
    InsufficientSamples,
    NonPositiveValue,
    RunReport,
    emit_report,
    parse_config,
    rate_fit,
    report_csv,
    report_json,
    run_experiment,
)

# --- rate fit ---------------------------------------------------------------


def test_rate_fit_exact_power_law():
    ts = np.geomspace(0.03, 0.2, 9)
    p, c, r2 = rate_fit([(t, 5 / t**2) for t in ts], (0.03, 0.2))
    assert p == pytest.approx(2.0, abs=1e-12)
    assert c == pytest.approx(5.0, rel=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_rate_fit_constant():
    p, c, r2 = rate_fit([(t, 3.0) for t in np.linspace(0.1, 1, 6)], (0.1, 1))
    assert p == pytest.approx(0.0, abs=1e-12)
    assert c == pytest.approx(3.0)


def test_rate_fit_wobbly_power_law():
    ts = np.geomspace(0.03, 0.2, 12)
    samples = [(t, (1 + 0.05 * math.sin(10 * math.log(t))) / t**2) for t in ts]
    p, _, _ = rate_fit(samples, (0.03, 0.2))
    # independent regression on the same data
    slope = np.polyfit(np.log(ts), np.log([y for _, y in samples]), 1)[0]
    assert p == pytest.approx(-slope, rel=1e-12)
    assert 1.9 <= p <= 2.1


def test_rate_fit_window_and_errors():
    ts = np.geomspace(0.01, 1.0, 20)
    # samples outside the window are ignored
    samples = [(t, 1 / t**2 if t <= 0.2 else 1.0) for t in ts]
    assert rate_fit(samples, (0.01, 0.2))[0] == pytest.approx(2.0)
    with pytest.raises(InsufficientSamples):
        rate_fit(samples, (0.5, 0.6))
    with pytest.raises(NonPositiveValue):
        rate_fit([(t, -1.0) for t in ts], (0.01, 1.0))


# --- configuration ----------------------------------------------------------


def test_parse_config_values():
    cfg = parse_config(
        """
        # comment
        experiment = contract
        r0 = exp(-20), exp(-30)
        grid = 1024
        t-samples = 0.2, 0.05, 0.1   # trailing comment
        r_out = 0.8
        """
    )
    assert cfg.r0 == (math.exp(-20), math.exp(-30))
    assert cfg.grid == 1024
    assert cfg.t_samples == (0.05, 0.1, 0.2)
    assert cfg.r_out == 0.8


def test_parse_config_overrides_and_defaults():
    cfg = parse_config("grid = 512", grid=2048, out=None)
    assert cfg.grid == 2048
    assert cfg.out == ExperimentConfig().out
    assert ExperimentConfig().check() is not None


@pytest.mark.parametrize(
    "text",
    [
        "nonsense",
        "colour = blue",
        "grid = 12.5",
        "r0 = exp(-0.5)",
        "r0 = 0.5",
        "c1 = 30",
        "mu = 0.5",
        "alpha = 0.9",
        "experiment = sideways",
        "t_samples = 0.1, -0.2",
        "fit_window = 0.2, 0.1",
        "format = xml",
        "grid = 8",
        "r_out = 1.0",
        "r0 = exp(abc)",
    ],
)
def test_parse_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        harness.load_config(tmp_path / "nope.cfg")


def test_threads_env(monkeypatch):
    monkeypatch.setenv("CUSPFLOW_THREADS", "3")
    assert harness._threads() == 3
    monkeypatch.setenv("CUSPFLOW_THREADS", "zero")
    with pytest.raises(ConfigError):
        harness._threads()
    monkeypatch.setenv("CUSPFLOW_THREADS", "0")
    with pytest.raises(ConfigError):
        harness._threads()


# --- reports ----------------------------------------------------------------


def _fake_report():
    rng = np.random.default_rng(7)
    rows = []
    for t in (0.05, 0.1, 0.2):
        row = {k: float(rng.normal()) * 10 ** float(rng.integers(-12, 12)) for k in CSV_COLUMNS}
        row["t"] = t
        row["witness_K0"] = math.nan
        rows.append(row)
    return RunReport(
        "contract",
        harness._config_echo(ExperimentConfig()),
        rows=rows,
        fit={"p": 2.0, "c": 0.1 + 0.2, "r2": 0.99},
        checks=[Check("a", True, 1 / 3, "<= 1"), Check("b", False, math.inf, ">= 0")],
    )


def test_report_json_roundtrip_bit_exact():
    rep = _fake_report()
    data = json.loads(report_json(rep))
    assert data["schema"] == 1
    assert data["first_failure"] == "b"
    assert data["passed"] is False
    for got, row in zip(data["rows"], rep.rows):
        assert list(got) == list(CSV_COLUMNS)
        for k in CSV_COLUMNS:
            if math.isnan(row[k]):
                assert got[k] is None
            else:
                assert got[k] == row[k]
                assert np.float64(got[k]).tobytes() == np.float64(row[k]).tobytes()
    assert data["fit"]["c"] == 0.1 + 0.2
    assert data["checks"][1]["value"] is None


def test_report_csv_schema():
    rep = _fake_report()
    text = report_csv(rep)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(CSV_COLUMNS) == 17
    assert all(len(r) == len(CSV_COLUMNS) for r in rows)
    assert float(rows[1][CSV_COLUMNS.index("r0")]) == rep.rows[0]["r0"]
    assert "\r" not in text


def test_emit_report_is_deterministic(tmp_path):
    a = emit_report(_fake_report(), "both", tmp_path / "a")
    b = emit_report(_fake_report(), "both", tmp_path / "b")
    assert [p.name for p in a] == ["report.json", "series.csv"]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    only = emit_report(_fake_report(), "csv", tmp_path / "c")
    assert [p.name for p in only] == ["series.csv"]
    with pytest.raises(ValueError):
        emit_report(_fake_report(), "xml", tmp_path)


def test_emit_report_surfaces_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError) as info:
        emit_report(_fake_report(), "json", blocker / "sub")
    assert str(blocker) in str(info.value)


# --- suites and CLI ---------------------------------------------------------


@pytest.fixture(scope="module")
def lemma_report():
    return run_experiment(ExperimentConfig(experiment="lemmas"))


def test_lemma_battery_contents(lemma_report):
    checks = {c.name: c for c in lemma_report.checks}
    for name in ("cigar_touch", "cigar_tangency_residual", "sphere_tangency_residual"):
        assert checks[name].passed and checks[name].value <= 1e-10
    assert checks["envelope_identity"].passed
    assert checks["origin_bound_closed_vs_numeric"].passed
    assert checks["sphere_K0_lower_bound"].passed
    # two checks fail on mathematical grounds, see the README
    assert not checks["sphere_K0_lower_bound_2_over_alpha"].passed
    assert not checks["cusp_part_limit_at_1e-8"].passed
    assert lemma_report.first_failure == "cusp_part_limit_at_1e-8"


def test_lemma_battery_is_deterministic():
    a = run_experiment(ExperimentConfig(experiment="lemmas", seed=3))
    b = run_experiment(ExperimentConfig(experiment="lemmas", seed=3))
    assert report_json(a) == report_json(b)


SMALL = """
r0 = exp(-8), exp(-10)
grid = 384
t_samples = 0.03, 0.04, 0.05, 0.06, 0.08, 0.1, 0.14, 0.2
window_points = 1
"""


@pytest.fixture(scope="module")
def small_contract():
    return run_experiment(parse_config(SMALL))


def test_small_contract_rows(small_contract):
    rep = small_contract
    ts = [row["t"] for row in rep.rows]
    assert ts == sorted(ts)
    assert {row["r0"] for row in rep.rows} == {math.exp(-8), math.exp(-10)}
    names = [c.name for c in rep.checks]
    assert "r0_independence" in names and "rate_exponent" in names
    for row in rep.rows:
        if math.isfinite(row["witness_K0"]):
            assert row["t"] < (1.05**2 - 1) / 2
            assert row["witness_K0"] <= row["max_K"] * (1 + 1e-6)
    assert rep.fit["n"] >= 5


def test_cli_bad_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("c1 = 10\n")
    assert cli.main(["lemmas", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "configuration error" in capsys.readouterr().err
    assert cli.main(["lemmas", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_cli_lemmas_exit_1_names_failure(tmp_path, capsys):
    cfg = tmp_path / "l.cfg"
    cfg.write_text("# defaults\n")
    code = cli.main(["lemmas", "--config", str(cfg), "--out", str(tmp_path / "o"), "--format", "json"])
    out = capsys.readouterr().out
    assert code == 1
    assert "first failing check: cusp_part_limit_at_1e-8" in out
    assert (tmp_path / "o" / "report.json").exists()
    assert not (tmp_path / "o" / "series.csv").exists()


def test_cli_solver_failure_exit_3(tmp_path, monkeypatch):
    from cuspflow.solver import StepFailure

    def boom(cfg):
        raise StepFailure("forced", 0.01, 1.0)

    monkeypatch.setattr(harness, "run_experiment", boom)
    cfg = tmp_path / "c.cfg"
    cfg.write_text("")
    assert cli.main(["contract", "--config", str(cfg), "--out", str(tmp_path)]) == 3


def test_cli_overrides(tmp_path, monkeypatch):
    seen = {}

    def capture(cfg):
        seen["cfg"] = cfg
        return RunReport(cfg.experiment, {}, checks=[Check("ok", True, 0.0, "")])

    monkeypatch.setattr(harness, "run_experiment", capture)
    cfg = tmp_path / "c.cfg"
    cfg.write_text("grid = 512\n")
    code = cli.main(["contract", "--config", str(cfg), "--out", str(tmp_path), "--grid", "1024",
                     "--r0", "exp(-12),exp(-14)", "--t-samples", "0.2,0.1"])
    assert code == 0
    c = seen["cfg"]
    assert c.grid == 1024 and c.r0 == (math.exp(-12), math.exp(-14)) and c.t_samples == (0.1, 0.2)
