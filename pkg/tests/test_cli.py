import json
from pathlib import Path

import pytest
import yaml

from hybridmem.cli import EXIT_CONFIG, EXIT_OK, EXIT_TRACE, main
from hybridmem.workload import read_trace

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = {
    "scheme": "memos",
    "seed": 1,
    "machine": {"dram_pages": 1024, "nvm_pages": 2048, "llc": {"capacity_bytes": 262144}},
    "policy": {"pass": {"samplings_per_pass": 10}, "engine": {"cycle_interval_s": 3.0}},
    "workload": {"generator": {"kind": "wd_bursty", "n_pages": 200, "n_passes": 8}},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


def test_simulate(config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", str(config), "--out", str(out), "--seed", "2"]) == EXIT_OK
    headline = json.loads(capsys.readouterr().out.splitlines()[0])
    assert headline["scheme"] == "memos" and headline["passes"] == 8
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["seed"] == 2


def test_generate_then_simulate_trace(tmp_path, capsys):
    trace = tmp_path / "t.trace"
    assert main(["generate", str(CONFIGS / "small_spec.yaml"), "--out", str(trace)]) == EXIT_OK
    t = read_trace(trace)
    assert t.n_pages == 200 and "certificate" in t.meta
    cfg = tmp_path / "c.yaml"
    data = dict(SMALL, workload={"trace": "t.trace"})
    cfg.write_text(yaml.safe_dump(data))
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "o"), "--scheme", "nvm-only"]) == EXIT_OK


def test_compare(config, tmp_path, capsys):
    out = tmp_path / "cmp"
    assert main(["compare", str(config), "--schemes", "no-migration,nvm-only", "--out", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("memos:") and (out / "compare.csv").exists()


@pytest.mark.parametrize("argv", [
    ["simulate", "missing.yaml"],
    ["simulate", "{config}", "--scheme", "magic"],
    ["compare", "{config}", "--schemes", " , "],
    ["generate", "missing.yaml", "--out", "x"],
])
def test_config_errors_exit_2(argv, config, tmp_path, capsys):
    argv = [a.format(config=config) for a in argv]
    assert main(argv) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_invalid_yaml_and_bad_field_exit_2(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("scheme: [unclosed\n")
    assert main(["simulate", str(bad)]) == EXIT_CONFIG
    bad.write_text(yaml.safe_dump(dict(SMALL, machine={"dram_pages": -5})))
    assert main(["simulate", str(bad)]) == EXIT_CONFIG


def test_trace_errors_exit_3(config, tmp_path, capsys):
    broken = tmp_path / "broken.trace"
    broken.write_text("5,0,0,R\n3,0,0,R\n")
    assert main(["simulate", str(config), "--trace", str(broken), "--out", str(tmp_path)]) == EXIT_TRACE
    assert "line 2" in capsys.readouterr().err
    assert main(["simulate", str(config), "--trace", str(tmp_path / "nope.trace")]) == EXIT_TRACE
