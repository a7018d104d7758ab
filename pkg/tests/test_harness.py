import json
from pathlib import Path

import numpy as np
import pytest

from lcbvm.cli import main
from lcbvm.errors import ConfigError
from lcbvm.harness import (ROW_FIELDS, emit_outputs, load_config, parse_config, read_rows,
                           regime_report, run_experiment, summarize)

CONFIGS = Path(__file__).resolve().parents[1] / "src" / "lcbvm" / "configs"
FIXTURES = Path(__file__).resolve().parent / "fixtures"

SMALL = {
    "name": "small",
    "model": {"id": "gaussian-location", "params": {"dim": 1}},
    "theta_bar": [0.0],
    "n_list": [16, 256],
    "seeds": [0, 1, 2, 3, 4],
}


def test_gaussian_sweep_is_exact():
    rows, summary = run_experiment(SMALL)
    assert len(rows) == 10
    assert all(r["tv"] < 2e-3 for r in rows)
    assert not summary["partial"]
    assert [p["n"] for p in summary["per_n"]] == [16, 256]


@pytest.mark.parametrize("patch", [
    {"n_list": [256, 16]},
    {"n_list": []},
    {"seeds": [1, 1]},
    {"theta_bar": None},
])
def test_invalid_configs(patch):
    raw = {**SMALL, **patch}
    if raw["theta_bar"] is None:
        del raw["theta_bar"]
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_theta_bar_outside_domain():
    raw = {**SMALL, "model": {"id": "exponential-rate"}, "theta_bar": [float("nan")]}
    with pytest.raises(ConfigError):
        run_experiment(raw)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_regime_dossiers():
    ball = regime_report(CONFIGS / "ball_misspec_d2.json")["geometry"]
    assert ball["J_star"] == [0] and ball["lambda"] == pytest.approx([0.5])
    assert ball["alpha_finite"] == pytest.approx(1.0) and ball["dim_L"] == 1
    orth = regime_report(CONFIGS / "orthant_misspec_d2.json")["geometry"]
    assert orth["lambda"] == pytest.approx([1.0, 2.0])
    half = regime_report(CONFIGS / "gaussian_halfspace_d2.json")
    assert half["regime"]["regime"] == "NearlyMisspecified"
    assert half["geometry"]["J_tilde"] == [0]


def test_csv_header_and_line_counts(tmp_path):
    paths = emit_outputs([], {"per_n": []}, tmp_path / "empty")
    assert paths["rows"].read_text() == ",".join(ROW_FIELDS) + "\n"
    rows, summary = run_experiment({**SMALL, "n_list": [16], "seeds": [0, 1]})
    paths = emit_outputs(rows, summary, tmp_path / "two")
    assert len(paths["rows"].read_text().splitlines()) == 3
    assert paths["plot"].read_text().splitlines()[0] == "n,median_tv,q25,q75"


def test_rerun_is_byte_identical(tmp_path):
    cfg = CONFIGS / "laplace_wellspec_d1.json"
    outs = []
    for k in range(2):
        rows, summary = run_experiment(cfg)
        paths = emit_outputs(rows, summary, tmp_path / str(k))
        outs.append([paths[p].read_bytes() for p in ("rows", "summary", "plot")])
    assert outs[0] == outs[1]


def test_threads_do_not_change_results(monkeypatch):
    cfg = CONFIGS / "laplace_wellspec_d1.json"
    rows1, _ = run_experiment(cfg, threads=1)
    rows4, _ = run_experiment(cfg, threads=4)
    assert rows1 == rows4


def test_trend_recomputable_from_csv(tmp_path):
    cfg = load_config(CONFIGS / "laplace_wellspec_d1.json")
    rows, summary = run_experiment(cfg)
    paths = emit_outputs(rows, summary, tmp_path)
    again = summarize(read_rows(paths["rows"]), cfg)
    assert again["per_n"] == summary["per_n"]
    assert again["trend"] == summary["trend"]


def test_row_isolation_with_failing_stage():
    rows, summary = run_experiment(FIXTURES / "envelope_wedge.json")
    assert summary["partial"]
    assert all(e["stage"] == "sample" for e in summary["errors"])
    assert len(rows) == len(summary["errors"])


def test_rows_hold_schema_and_range():
    rows, _ = run_experiment(SMALL)
    for r in rows:
        assert tuple(r) == ROW_FIELDS
        assert 0.0 <= r["tv"] <= 1.0
        assert r["runtime_ms"] == 0


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["list-models"]) == 0
    assert "gaussian-location" in capsys.readouterr().out
    assert main(["geometry", str(CONFIGS / "ball_misspec_d2.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["regime"]["regime"] == "Misspecified"
    assert main(["run", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    assert main(["geometry", str(bad)]) == 1
    assert main(["run", str(FIXTURES / "envelope_wedge.json")]) == 2
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps(SMALL))
    assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "rows.csv").exists()


def test_cli_selftest_subset(capsys):
    assert main(["selftest", "--criteria", "6", "7"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2 and all(l.startswith("[PASS]") for l in lines)


def test_builtin_configs_all_parse():
    names = sorted(p.name for p in CONFIGS.glob("*.json"))
    assert len(names) >= 8
    for name in names:
        cfg = load_config(CONFIGS / name)
        assert np.all(np.diff(cfg.n_list) > 0)
