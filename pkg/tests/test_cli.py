import json
import shutil
import subprocess
from pathlib import Path

import pytest

from sclaloha.cli import main

SCEN = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def chain(tmp_path):
    p = tmp_path / "chain.json"
    p.write_text(json.dumps({"topology": {"builtin": "chain", "n": 3}, "horizon": 200, "seeds": 3}))
    return p


def test_validate_prints_schedule(chain, capsys):
    assert main(["validate", str(chain)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] and out["schedule"]["global_period"] == pytest.approx(4.2)


def test_validate_reports_field_error(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"topology": {"builtin": "chain", "n": 3},
                             "protocol": {"epsilon": -0.1}}))
    assert main(["validate", str(p)]) == 2
    assert "protocol/epsilon" in capsys.readouterr().err


def test_missing_file_is_an_error(capsys):
    assert main(["validate", "/nonexistent/scenario.json"]) == 2


def test_run_emits_jsonl(chain, tmp_path, capsys):
    out = tmp_path / "log.jsonl"
    assert main(["run", str(chain), "--seed", "4", "--modes", "--out", str(out)]) == 0
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert any("sender" in r for r in lines) and any("mode" in r for r in lines)
    stats = json.loads(capsys.readouterr().err)
    assert "absorption_time" in stats


def test_run_is_reproducible(chain, capsys):
    main(["run", str(chain), "--seed", "9"])
    a = capsys.readouterr().out
    main(["run", str(chain), "--seed", "9"])
    assert capsys.readouterr().out == a


def test_batch_csv(chain, tmp_path):
    out = tmp_path / "runs.csv"
    assert main(["batch", str(chain), "--seeds", "4", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# sclaloha-runs v1"
    assert len(lines) == 2 + 4


def test_sweep_csv(chain, tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", str(chain), "--t-start", "4.5", "--t-stop", "5.0",
                 "--t-step", "0.5", "--runs", "3", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "# sclaloha-sweep v1"
    assert [l.split(",")[0] for l in lines[2:]] == ["4.5", "5.0"]


def test_frag_demo(capsys):
    assert main(["frag-demo", "--resolution", "800"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["delayed_fraction"] == pytest.approx(0.5, abs=2e-3)
    assert res["immediate_fraction"] == pytest.approx(0.2, abs=2e-3)


def test_frag_demo_bad_ack(capsys):
    assert main(["frag-demo", "--ack-duration", "2"]) == 2


def test_compare_rejects_unknown_protocol(chain, capsys):
    assert main(["compare", str(chain), "--protocols", "scl,csma"]) == 2
    assert "csma" in capsys.readouterr().err


def test_compare_csv(chain, capsys):
    assert main(["compare", str(chain), "--protocols", "scl,hybrid"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "# sclaloha-compare v1"
    assert [l.split(",")[0] for l in lines[2:]] == ["scl", "hybrid"]


@pytest.mark.parametrize("name", ["chain3.json", "ring6.json", "chain3_aloha.json"])
def test_shipped_scenarios_validate(name, capsys):
    assert main(["validate", str(SCEN / name)]) == 0


@pytest.mark.skipif(shutil.which("sclaloha") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["sclaloha", "validate", str(SCEN / "chain3.json")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and '"ok": true' in r.stdout
