"""Tests for the command-line front end: config validation, output files,
exit codes, and byte-level determinism."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from starscatter.asymptotics import build_coefficient_table
from starscatter.cli import load_config, main
from starscatter.errors import ConfigError
from starscatter.potential import star


def base_config(**overrides):
    cfg = {
        "schema_version": 1,
        "potential": {
            "edges": [
                {"family": "exponential", "c": -0.5, "a": 1.5},
                {"family": "sech2", "c": -1.1, "a": 1.0},
            ]
        },
        "scan": {"k_min": 1e-3, "k_max": 60.0, "npoints": 300},
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_defaults_resolve(tmp_path):
    path = write_config(tmp_path, base_config(scan={}))
    cfg = load_config(path)
    assert cfg.tol == 1e-10
    assert cfg.scan_kwargs == {"k_min": 1e-3, "k_max": 100.0, "npoints": 2000}
    assert cfg.trace_orders == [0.5, 1.0, 1.5]
    assert cfg.fg_s == [0.25]
    assert cfg.decay_orders == [1]
    assert cfg.levinson is True  # auto resolves to true for two edges
    assert cfg.resolved["trace"]["levinson"] is True


@pytest.mark.parametrize(
    "mutate",
    [
        lambda c: c.update(schema_version=2),
        lambda c: c.update(extra_section={}),
        lambda c: c.update(potential={"edges": [{"family": "sech2", "c": -1.0}]}),
        lambda c: c["potential"]["edges"].append({"family": "morse", "c": -1.0}),
        lambda c: c["potential"]["edges"].append({"family": "sech2", "c": -1.0, "width": 2}),
        lambda c: c.update(solver={"tol": 1e-3}),
        lambda c: c.update(solver={"tolerance": 1e-10}),
        lambda c: c.update(asymptotics={"order": 9}),
        lambda c: c.update(trace={"orders": [0.7]}),
        lambda c: c.update(trace={"fg_s": [0.6]}),
        lambda c: c.update(trace={"decay_orders": [9]}),
        lambda c: c.update(trace={"levinson": "yes"}),
    ],
    ids=[
        "schema-version", "unknown-top-key", "one-edge", "bad-family",
        "unknown-edge-key", "tol-range", "unknown-solver-key", "order-range",
        "bad-trace-order", "bad-fg-power", "bad-decay-order", "bad-levinson",
    ],
)
def test_config_rejection(tmp_path, mutate):
    cfg = base_config()
    mutate(cfg)
    path = write_config(tmp_path, cfg)
    with pytest.raises(ConfigError):
        load_config(path)


def test_levinson_needs_two_edges_in_config(tmp_path):
    cfg = base_config(trace={"levinson": True})
    cfg["potential"]["edges"].append({"family": "sech2", "c": -0.5})
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, cfg))
    # auto quietly turns it off instead
    cfg["trace"] = {"levinson": "auto"}
    assert load_config(write_config(tmp_path, cfg)).levinson is False


def test_scan_command(tmp_path):
    path = write_config(tmp_path, base_config())
    out = tmp_path / "out"
    assert main(["scan", "--config", str(path), "--out", str(out)]) == 0
    lines = (out / "scan.csv").read_text().strip().splitlines()
    assert lines[0] == "k,re_D,im_D,a,eta"
    assert len(lines) == 301


def test_scan_csv_matches_golden(tmp_path):
    # frozen output of the scan command on the stored two-edge config; if a
    # deliberate numeric change lands, regenerate by rerunning the command
    # on tests/golden/scan_config.json and copying scan.csv over
    golden = Path(__file__).parent / "golden"
    out = tmp_path / "out"
    assert main(["scan", "--config", str(golden / "scan_config.json"),
                 "--out", str(out)]) == 0
    assert (out / "scan.csv").read_bytes() == (golden / "scan.csv").read_bytes()


def test_spectrum_command_with_oracle(tmp_path):
    cfg = base_config(spectrum={"oracle_h": 0.02})
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["spectrum", "--config", str(path), "--out", str(out)]) == 0
    payload = json.loads((out / "spectrum.json").read_text())
    ev = payload["spectrum"]["eigenvalues"]
    assert len(ev) == 1
    assert ev[0]["lambda"] == pytest.approx(-0.2539952469, abs=1e-6)
    assert ev[0]["multiplicity"] == 1
    assert payload["oracle"]["max_abs_difference"] < 4e-3


def test_coefficients_command(tmp_path):
    cfg = base_config(asymptotics={"order": 5})
    path = write_config(tmp_path, cfg)
    out = tmp_path / "out"
    assert main(["coefficients", "--config", str(path), "--out", str(out)]) == 0
    payload = json.loads((out / "coefficients.json").read_text())
    run_cfg = load_config(path)
    table = build_coefficient_table(run_cfg.potential, 5)
    assert payload["coefficients"]["L"] == pytest.approx(table.L.tolist(), rel=1e-12)


def test_trace_check_runs_and_is_deterministic(tmp_path):
    cfg = base_config(
        scan={"k_min": 1e-3, "k_max": 100.0, "npoints": 600},
        trace={"orders": [0.5], "fg_s": [], "decay_orders": []},
    )
    path = write_config(tmp_path, cfg)
    out1, out2, out3 = (tmp_path / d for d in ("r1", "r2", "r3"))
    assert main(["trace-check", "--config", str(path), "--out", str(out1)]) == 0
    assert main(["trace-check", "--config", str(path), "--out", str(out2)]) == 0
    assert main(["trace-check", "--config", str(path), "--out", str(out3),
                 "--threads", "3"]) == 0
    b1 = (out1 / "trace_check.json").read_bytes()
    assert b1 == (out2 / "trace_check.json").read_bytes()
    assert b1 == (out3 / "trace_check.json").read_bytes()
    payload = json.loads(b1)
    assert payload["all_passed"] is True
    assert payload["levinson"]["passed"] is True


def test_exit_code_2_on_bad_config(tmp_path):
    path = write_config(tmp_path, base_config(extra_section={}))
    assert main(["scan", "--config", str(path), "--out", str(tmp_path)]) == 2
    missing = tmp_path / "nope.json"
    assert main(["scan", "--config", str(missing), "--out", str(tmp_path)]) == 2


def test_exit_code_2_on_hypothesis_failure(tmp_path):
    cfg = base_config()
    cfg["potential"]["edges"][0] = {"family": "powerlaw", "c": -1.0, "a": 1.0, "p": 1.5}
    path = write_config(tmp_path, cfg)
    assert main(["scan", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_exit_code_3_on_numeric_failure(tmp_path):
    # three deep wells leave |eta| ~ 0.6 at k_max = 40: no usable anchor
    cfg = {
        "schema_version": 1,
        "potential": {
            "edges": [{"family": "sech2", "c": -8.0, "a": 1.0}] * 3
        },
        "scan": {"k_min": 0.5, "k_max": 40.0, "npoints": 64},
    }
    path = write_config(tmp_path, cfg)
    assert main(["scan", "--config", str(path), "--out", str(tmp_path)]) == 3


def test_console_script_installed(tmp_path):
    path = write_config(tmp_path, base_config())
    out = tmp_path / "out"
    proc = subprocess.run(
        [sys.executable, "-m", "starscatter.cli", "scan",
         "--config", str(path), "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "scan.csv").exists()
