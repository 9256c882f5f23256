import csv
import json
import math
import shutil
import subprocess
import sys

import pytest

from sackersell import __version__
from sackersell.cli import main


def _write(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=2))
    return str(path)


def _run(tmp_path, doc, *extra, out="out"):
    cfg = _write(tmp_path, doc)
    outdir = tmp_path / out
    code = main(["--config", cfg, "--out", str(outdir), *extra])
    report = outdir / "report.json"
    return code, (json.loads(report.read_text()) if report.exists() else None), outdir


def test_selftest_without_config(tmp_path, capsys):
    code = main(["--command", "selftest", "--out", str(tmp_path / "st")])
    assert code == 0
    doc = json.loads((tmp_path / "st" / "report.json").read_text())
    assert doc["exit_status"] == 0 and doc["command"] == "selftest"
    assert all(chk["ok"] for chk in doc["result"]["checks"])
    assert "status  0" in capsys.readouterr().out


def test_spectrum_diag2(tmp_path):
    code, doc, out = _run(tmp_path, {"command": "spectrum", "fixture": {"name": "diag2"}})
    assert code == 0
    ivs = doc["result"]["spectrum"]["intervals"]
    assert len(ivs) == 2
    assert abs(ivs[0][0] - math.log(2)) <= 1e-3 and abs(ivs[1][0] + math.log(2)) <= 1e-3
    rows = list(csv.reader(open(out / "trace_spectrum.csv")))
    assert rows[0] == ["shift", "pass", "dim_u"] and len(rows) > 10
    assert set(doc) >= {"tool", "version", "config_hash", "result", "result_hash", "warnings", "timings"}
    assert doc["version"] == __version__


def test_spectrum_from_explicit_generator(tmp_path):
    doc = {
        "command": "spectrum",
        "base": {"type": "finite_periodic", "period": 1},
        "generator": {"type": "constant", "matrix": [[2.0, 0.0], [0.0, 0.5]]},
    }
    code, rep, _ = _run(tmp_path, doc)
    assert code == 0 and len(rep["result"]["spectrum"]["intervals"]) == 2


def test_verify_scalar_shift_passes(tmp_path):
    code, doc, out = _run(tmp_path, {"command": "verify-jps", "fixture": {"name": "scalar_shift"},
                                     "measures": {"p_max": 4}})
    assert code == 0
    eps = doc["result"]["endpoints"]
    assert sorted(e["matched_measure"] for e in eps) == ["per:0", "per:1"]
    assert all(e["verdict"] == "pass" for e in eps)
    assert (out / "trace_cao.csv").exists()


def test_verify_corrupted_exits_one(tmp_path):
    code, doc, _ = _run(tmp_path, {"command": "verify-jps", "fixture": {"name": "corrupted_shift"}})
    assert code == 1 and doc["exit_status"] == 1
    assert any(e["verdict"] == "fail" for e in doc["result"]["endpoints"])


def test_config_error_exits_two(tmp_path, capsys):
    text = '{\n  "command": "spectrum",\n  "fixture": {"name": "diag2"},\n  "scan": {"gridd": {"step": 0}}\n}'
    code, doc, _ = _run(tmp_path, text)
    assert code == 2 and doc is None
    lines = [json.loads(x) for x in capsys.readouterr().err.strip().splitlines()]
    assert lines[0]["code"] == "config.unknown_key" and lines[0]["line"] == 4
    assert "did you mean 'grid'?" in lines[0]["message"]


def test_missing_config_file_exits_two(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "nope.json")]) == 2
    assert json.loads(capsys.readouterr().err.splitlines()[0])["code"] == "io.error"


def test_config_required_for_other_commands(capsys):
    assert main(["--command", "spectrum"]) == 2


def test_bad_threads(tmp_path):
    cfg = _write(tmp_path, {"command": "selftest"})
    assert main(["--config", cfg, "--threads", "0"]) == 2


def test_result_document_is_deterministic(tmp_path):
    doc = {"command": "spectrum", "fixture": {"name": "jordan"}}
    _, a, _ = _run(tmp_path, doc, out="a")
    _, b, _ = _run(tmp_path, doc, "--threads", "4", out="b")
    assert a["result_hash"] == b["result_hash"]
    assert json.dumps(a["result"], sort_keys=True) == json.dumps(b["result"], sort_keys=True)
    assert a["config_hash"] == b["config_hash"]


def test_seed_override_changes_config_hash(tmp_path):
    doc = {"command": "lyapunov", "fixture": {"name": "diag2"}, "seed": 1}
    _, a, _ = _run(tmp_path, doc, out="a")
    _, b, _ = _run(tmp_path, doc, "--seed", "5", out="b")
    assert a["config"]["seed"] == 1 and b["config"]["seed"] == 5
    assert a["config_hash"] != b["config_hash"]


def test_lyapunov_command(tmp_path):
    code, doc, out = _run(tmp_path, {"command": "lyapunov", "fixture": {"name": "diag4"}})
    assert code == 0
    lad = doc["result"]["ladders"][0]
    got = [e["lambda"] for e in lad["exponents"]]
    assert got == pytest.approx([math.log(4), math.log(2), math.log(0.5), math.log(0.25)], abs=1e-6)
    assert (out / "trace_lyapunov.csv").exists()


def test_quasicompact_command(tmp_path):
    code, doc, _ = _run(tmp_path, {"command": "quasicompact", "fixture": {"name": "diagonal_operator"}})
    assert code == 0
    rep = doc["result"]["measures"]["orbit:1"]
    assert rep["kappa"] == pytest.approx(math.log(0.5 + 1 / 65), abs=1e-6)
    assert rep["lambda"] == pytest.approx(math.log(2), abs=1e-6)
    assert rep["verdict"] == "quasicompact"


def test_quasicompact_lasota_yorke_failure_exits_one(tmp_path):
    doc = {
        "command": "quasicompact",
        "base": {"type": "finite_periodic"},
        "generator": {"type": "constant", "matrix": [[2.0, 0.0], [0.0, 2.0]]},
        "quasicompact": {"lasota_yorke": {"alpha": 0.5, "beta": 1.0, "gamma": 1.0}},
    }
    code, rep, _ = _run(tmp_path, doc)
    assert code == 1 and rep["result"]["lasota_yorke"]["check"]["verdict"] == "fail"


def test_figures_written(tmp_path):
    pytest.importorskip("matplotlib")
    code, doc, out = _run(tmp_path, {"command": "spectrum", "fixture": {"name": "diag2"}}, "--figures")
    assert code == 0 and (out / "spectrum.png").stat().st_size > 1000


def test_console_script_version():
    exe = shutil.which("sackersell")
    cmd = [exe] if exe else [sys.executable, "-m", "sackersell.cli"]
    out = subprocess.run(cmd + ["--version"], capture_output=True, text=True, check=True)
    assert __version__ in out.stdout


CONFIG_DIR = __import__("pathlib").Path(__file__).resolve().parents[1] / "configs"
EXPECTED_EXIT = {
    "spectrum_diag2.json": 0,
    "verify_scalar_shift.json": 0,
    "verify_corrupted.json": 1,
    "lyapunov_symbol.json": 0,
    "quasicompact_diagonal.json": 0,
}


@pytest.mark.parametrize("name", sorted(EXPECTED_EXIT))
def test_shipped_configs(tmp_path, name):
    assert main(["--config", str(CONFIG_DIR / name), "--out", str(tmp_path)]) == EXPECTED_EXIT[name]
    assert (tmp_path / "report.json").exists()


def test_every_shipped_config_is_listed():
    assert sorted(p.name for p in CONFIG_DIR.glob("*.json")) == sorted(EXPECTED_EXIT)
