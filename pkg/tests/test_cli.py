import json
import subprocess
import sys

import pytest

from bridgenav.benchmarks import corridor
from bridgenav.cli import EXIT_INPUT, EXIT_OK, EXIT_PIPELINE, RunConfig, main
from bridgenav.scenario_io import dump_scenario, shipped_scenario

WALLED = """\
dimension: 2
bounds: {lo: [0, 0], hi: [200, 100]}
limits: {radius: 2, v_max: 3, a_max: 2}
obstacles:
  - polygon: [[90, 0], [110, 0], [110, 100], [90, 100]]
agents:
  - {start: [20, 50], goal: [180, 50]}
"""


@pytest.fixture(scope="module")
def small_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("scen") / "small.yaml"
    path.write_text(dump_scenario(corridor(n_per_group=2)))
    return path


def test_run_writes_outputs(small_file, tmp_path, capsys):
    assert main(["run", str(small_file), "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "agent_agent_collision_events\t0" in out
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["agents"] == 4 and metrics["agent_agent_collision_events"] == 0
    summary = json.loads((tmp_path / "result.json").read_text())
    assert len(summary["plans"]) == 4
    assert (tmp_path / "trajectories.csv").read_text().startswith("agent_id,step,t,px,py")


def test_run_is_byte_identical(small_file, tmp_path):
    for d in ("a", "b"):
        assert main(["run", str(small_file), "--seed", "5", "--out", str(tmp_path / d)]) == EXIT_OK
    assert (tmp_path / "a" / "trajectories.csv").read_bytes() == (tmp_path / "b" / "trajectories.csv").read_bytes()


def test_run_with_plots(small_file, tmp_path):
    assert main(["run", str(small_file), "--out", str(tmp_path), "--plots"]) == EXIT_OK
    svgs = list(tmp_path.glob("*.svg"))
    assert svgs and svgs[0].read_text().lstrip().startswith("<?xml")


def test_pipeline_failure_exit_code(tmp_path, capsys):
    path = tmp_path / "walled.yaml"
    path.write_text(WALLED)
    assert main(["run", str(path), "--out", str(tmp_path / "out")]) == EXIT_PIPELINE
    assert "pipeline failed" in capsys.readouterr().err


def test_invalid_input_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("dimension: 2\nbounds: [\n")
    assert main(["run", str(bad)]) == EXIT_INPUT
    assert main(["validate", str(bad)]) == EXIT_INPUT
    assert main(["validate", str(tmp_path / "missing.yaml")]) == EXIT_INPUT
    assert main(["bench", str(bad), "--reps", "0"]) == EXIT_INPUT
    assert main(["frobnicate"]) == EXIT_INPUT
    assert "line" in capsys.readouterr().err


def test_seed_out_of_range(small_file):
    assert main(["run", str(small_file), "--seed", "-1"]) == EXIT_INPUT


def test_validate_shipped(capsys):
    assert main(["validate", str(shipped_scenario("corridor"))]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["agents"] == 96 and doc["dimension"] == 2


def test_bench_summary(small_file, tmp_path, capsys):
    assert main(["bench", str(small_file), "--reps", "2", "--out", str(tmp_path)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "phase\tmin_s\tmedian_s"
    phases = {ln.split("\t")[0] for ln in lines[1:]}
    assert {"assign", "compose", "schedule", "audit", "total"} <= phases
    doc = json.loads((tmp_path / "bench.json").read_text())
    assert all(v["reps"] == 2 and v["min"] <= v["median"] for v in doc.values())


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(shipped_scenario("corridor"), bench_repetitions=0)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bridgenav.cli", "validate", str(shipped_scenario("duct3d"))],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["dimension"] == 3
