from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from fastgate import __version__
from fastgate.cli import main


def _json(path):
    return json.loads(path.read_text())


def _csv(path):
    lines = path.read_text().splitlines()
    meta = [ln for ln in lines if ln.startswith("#")]
    return meta, list(csv.DictReader([ln for ln in lines if not ln.startswith("#")]))


def test_modes(tmp_path):
    out = tmp_path / "m.json"
    assert main(["modes", "--ions", "3", "--output", str(out)]) == 0
    doc = _json(out)
    assert doc["version"] == __version__
    assert doc["config"]["ions"] == 3
    assert len(doc["result"]["mode_freqs_hz"]) == 3


def test_optimize_with_cache_and_log(tmp_path):
    out, log, cache = tmp_path / "g.json", tmp_path / "log.jsonl", tmp_path / "cache"
    argv = ["optimize", "--ions", "2", "--n", "2", "--restarts", "3", "--output", str(out),
            "--cache", str(cache), "--log", str(log)]
    assert main(argv) == 0
    first = _json(out)["result"]
    assert len(log.read_text().splitlines()) == 3
    assert any(cache.iterdir())
    assert main(argv) == 0
    assert _json(out)["result"] == first


def test_config_file_supplies_required(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"ions": 2, "n": 1, "restarts": 2}))
    out = tmp_path / "u.json"
    assert main(["umq", "--config", str(conf), "--output", str(out)]) == 0
    assert _json(out)["config"]["restarts"] == 2
    # an explicit flag wins over the file
    assert main(["umq", "--config", str(conf), "--restarts", "1", "--output", str(out)]) == 0
    assert _json(out)["config"]["restarts"] == 1


def test_config_unknown_key(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"ions": 2, "bogus": 1}))
    with pytest.raises(SystemExit) as e:
        main(["modes", "--config", str(conf)])
    assert e.value.code == 2


def test_umq_plan_counts(tmp_path):
    out = tmp_path / "u.json"
    assert main(["umq", "--ions", "4", "--n", "1", "--restarts", "2", "--reverse", "--output", str(out)]) == 0
    r = _json(out)["result"]
    assert r["fast_gate_count"] == 2 * 9
    assert r["include_reverse"] is True


def test_sweep_csv(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--ions", "2,3", "--n", "1", "--restarts", "2", "--output", str(out)]) == 0
    meta, rows = _csv(out)
    assert meta[0] == f"# version: {__version__}"
    assert [int(r["fast_gates"]) for r in rows] == [1, 5]
    assert set(rows[0]) == {"ions", "n", "fast_gates", "umq_error", "umq_time_s", "feasible", "threshold_error",
                            "heating_budget_time_s", "ms_time_s"}


def test_pulse_error_csv(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["pulse-error", "--ions", "2", "--n", "1", "--xi", "0.999,1.0", "--restarts", "2",
                 "--output", str(out)]) == 0
    _, rows = _csv(out)
    assert [float(r["xi"]) for r in rows] == [1.0, 0.999]
    assert float(rows[0]["added_gate_error"]) == 0.0
    assert float(rows[1]["added_gate_error"]) > 0


def test_noise_csv(tmp_path):
    out = tmp_path / "n.csv"
    assert main(["noise", "--channel", "heating", "--rates", "1e3,1e5", "--n", "1", "--trajectories", "20",
                 "--restarts", "2", "--output", str(out)]) == 0
    _, rows = _csv(out)
    assert len(rows) == 2 and float(rows[0]["mean_infidelity"]) < float(rows[1]["mean_infidelity"])


def test_fit_roundtrip(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("# comment\nn,time_s\n1,2.0\n2,1.0\n4,0.5\n")
    out = tmp_path / "f.json"
    assert main(["fit", "--input", str(data), "--output", str(out)]) == 0
    r = _json(out)["result"]
    assert r["exponent"] == pytest.approx(-1.0)
    assert r["rep_rate_exponent"] == pytest.approx(-0.5)


def test_fit_bad_column_exit_code(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("n,time_s\n1,2.0\n2,1.0\n4,0.5\n")
    assert main(["fit", "--input", str(data), "--y-column", "nope"]) == 2


def test_invalid_argument_exit_code():
    assert main(["modes", "--ions", "1"]) == 2


def test_argparse_error_exit_code():
    with pytest.raises(SystemExit) as e:
        main(["optimize", "--ions", "2"])
    assert e.value.code == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "fastgate.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and __version__ in r.stdout
