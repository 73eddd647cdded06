import json
from pathlib import Path

import numpy as np
import pytest

from divform.cli import load_config, main
from divform.experiments import (
    ConfigError,
    ResultRow,
    merge_config,
    rows_to_csv,
    run_experiment,
    run_garding,
    summary_json,
    sweep_svg,
)

PRESETS = Path(__file__).resolve().parents[1] / "presets"

LAPLACIAN_ONLY = {
    "garding": {
        "tensors": ["laplacian"],
        "rho_values": [],
        "rho_endpoints": [],
        "check_monotone": False,
        "run_convergence": False,
    }
}


# -- config plumbing ------------------------------------------------------------

def test_merge_config_overlays_and_rejects_unknown_keys():
    defaults = {"a": 1, "nested": {"x": 1.0, "y": 2.0}}
    merged = merge_config(defaults, {"nested": {"y": 7.0}}, "sec")
    assert merged == {"a": 1, "nested": {"x": 1.0, "y": 7.0}}
    assert defaults["nested"]["y"] == 2.0          # input untouched
    with pytest.raises(ConfigError, match=r"\[sec\]"):
        merge_config(defaults, {"typo": 3}, "sec")
    with pytest.raises(ConfigError, match=r"\[sec\.nested\]"):
        merge_config(defaults, {"nested": {"z": 3}}, "sec")


def test_run_experiment_rejects_unknown_name():
    with pytest.raises(ConfigError):
        run_experiment("spectra", {})


def test_load_config_missing_and_malformed(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = [unclosed\n")
    with pytest.raises(ConfigError, match="malformed TOML"):
        load_config(bad)
    stray = tmp_path / "stray.toml"
    stray.write_text("volume = 11\n")
    with pytest.raises(ConfigError, match="unknown top-level"):
        load_config(stray)


# -- writers ----------------------------------------------------------------------

def _rows():
    return [
        ResultRow("demo", "first", {"p": 2.0, "s": 0.5}, {"ratio": 1.0 / 3.0},
                  "ratio <= 1", True),
        ResultRow("demo", "second", {"p": 2.0}, {"slope": 0.93, "n": 4},
                  "slope near 1", False),
    ]


def test_rows_to_csv_layout():
    text = rows_to_csv(_rows())
    lines = text.splitlines()
    assert lines[0] == (
        "experiment,name,param_p,param_s,value_n,value_ratio,value_slope,"
        "criterion,passed,schema"
    )
    assert lines[1].startswith("demo,first,2,0.5,,0.333333333333,")
    assert lines[1].endswith("ratio <= 1,true,resultrow-v1")
    assert ",false," in lines[2]
    assert text == rows_to_csv(_rows())               # pure function of rows


def test_summary_json_counts_and_parses():
    obj = json.loads(summary_json("demo", {"seed": 5}, _rows(), 0.25))
    assert obj["n_rows"] == 2 and obj["n_pass"] == 1 and obj["n_fail"] == 1
    assert obj["runtime_seconds"] == 0.25
    assert obj["rows"][0]["value_ratio"] == pytest.approx(1.0 / 3.0)


def test_sweep_svg_structure():
    mat = np.array([[0.5, 1.1], [0.2, 0.9]])
    bad = np.array([[False, True], [False, False]])
    svg = sweep_svg([0.25, 0.75], [0.5, 1.0], [("eps = 0.02", mat, bad)])
    assert svg.startswith("<svg ") and svg.rstrip().endswith("</svg>")
    assert svg.count("<rect") == 1 + 4                # background + cells
    assert svg.count('fill="black"') == 1
    assert "eps = 0.02" in svg


# -- a cheap end-to-end runner ------------------------------------------------------

def test_run_garding_laplacian_row():
    rows = run_garding(LAPLACIAN_ONLY)
    assert len(rows) == 1
    row = rows[0]
    assert row.experiment == "garding" and row.name == "laplacian"
    assert row.passed
    assert row.values["lambda_hat"] == pytest.approx(1.0, abs=1e-8)


# -- command-line behaviour -----------------------------------------------------------

def test_cli_runs_preset_and_writes_artifacts(tmp_path, capsys):
    code = main(["garding", "--config", str(PRESETS / "laplacian.toml"),
                 "--out", str(tmp_path)])
    assert code == 0
    csv_text = (tmp_path / "garding.csv").read_text()
    assert csv_text.count("\n") == 2                  # header + one row
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["experiments"]["garding"]["fail"] == 0
    assert "garding: 1 rows" in capsys.readouterr().out


def test_cli_usage_errors_exit_2(capsys):
    assert main(["spectra"]) == 2
    assert main(["garding", "--format", "yaml"]) == 2
    capsys.readouterr()


def test_cli_config_errors_exit_3(tmp_path, capsys):
    assert main(["garding", "--config", str(tmp_path / "missing.toml")]) == 3
    bad = tmp_path / "bad.toml"
    bad.write_text("[garding]\nbogus_knob = 1\n")
    assert main(["garding", "--config", str(bad), "--out", str(tmp_path)]) == 3
    assert "config error" in capsys.readouterr().err


def test_cli_json_format(tmp_path, capsys):
    code = main(["garding", "--config", str(PRESETS / "laplacian.toml"),
                 "--format", "json", "--out", str(tmp_path)])
    assert code == 0
    rows = json.loads((tmp_path / "garding.json").read_text())
    assert isinstance(rows, list) and rows[0]["name"] == "laplacian"
    assert not (tmp_path / "garding.csv").exists()
    capsys.readouterr()


def test_cli_output_is_byte_deterministic(tmp_path, capsys):
    texts = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        code = main(["garding", "--config", str(PRESETS / "laplacian.toml"),
                     "--seed", "7", "--out", str(out)])
        assert code == 0
        texts.append((out / "garding.csv").read_bytes())
    assert texts[0] == texts[1]
    capsys.readouterr()


def test_cli_env_var_sets_output_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("DIVFORM_OUT", str(tmp_path / "env_out"))
    code = main(["garding", "--config", str(PRESETS / "laplacian.toml")])
    assert code == 0
    assert (tmp_path / "env_out" / "garding.csv").exists()
    capsys.readouterr()
