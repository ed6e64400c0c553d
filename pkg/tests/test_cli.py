import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from steerbo.cli import main
from steerbo.domain import Fidelity
from steerbo.session import SessionConfig, create_session, persist


def run_cli(*argv):
    return main(list(argv))


BASE = ["--app", "tutorial", "--q", "4", "--seed", "3"]


class TestRun:
    def test_bo_led_formal_count(self, tmp_path, capsys):
        log = tmp_path / "run.log"
        rc = run_cli("run", *BASE, "--mode", "bo_led", "--iterations", "2", "--out", str(log))
        assert rc == 0
        records = [json.loads(ln) for ln in log.read_text().splitlines()]
        evals = [r for r in records if r["type"] == "evaluation"]
        assert len(evals) == 5 + 2  # seeds + iterations, all formal
        assert all(r["fidelity"] == "formal" for r in evals)
        out = capsys.readouterr().out
        assert "relative_hypervolume" in out

    def test_same_seed_identical_logs(self, tmp_path):
        logs = []
        for name in ("a.log", "b.log"):
            path = tmp_path / name
            rc = run_cli(
                "run", *BASE, "--mode", "cooperative", "--policy", "scripted",
                "--iterations", "2", "--out", str(path),
            )
            assert rc == 0
            logs.append(path.read_bytes())
        assert logs[0] == logs[1]

    def test_designer_led_without_script_usage_error(self, capsys):
        rc = run_cli("run", "--app", "tutorial", "--mode", "designer_led")
        assert rc == 2
        assert "script" in capsys.readouterr().err

    def test_designer_led_with_script(self, tmp_path):
        script = tmp_path / "points.jsonl"
        script.write_text("[0.25, 0.75]\n[0.5, 0.5]\n")
        log = tmp_path / "run.log"
        rc = run_cli(
            "run", *BASE, "--mode", "designer_led", "--script", str(script),
            "--out", str(log),
        )
        assert rc == 0
        records = [json.loads(ln) for ln in log.read_text().splitlines()]
        assert sum(r["type"] == "evaluation" for r in records) == 5 + 2

    def test_unknown_app_exit_2(self):
        assert run_cli("run", "--app", "bogus", "--mode", "bo_led", "--iterations", "1") == 2

    def test_requests_file_cycles(self, tmp_path):
        reqs = tmp_path / "requests.txt"
        reqs.write_text(
            "Please propose parameters that increase Objective 1\n"
            "Please propose parameters that increase Objective 2\n"
        )
        log = tmp_path / "run.log"
        rc = run_cli(
            "run", *BASE, "--mode", "cooperative", "--iterations", "2",
            "--requests", str(reqs), "--out", str(log),
        )
        assert rc == 0
        records = [json.loads(ln) for ln in log.read_text().splitlines()]
        prompts = [r for r in records if r["type"] == "prompt"]
        assert prompts[0]["request"].endswith("Objective 1")
        assert prompts[1]["request"].endswith("Objective 2")


class TestMetrics:
    def test_single_evaluation_log(self, tmp_path, capsys):
        config = SessionConfig(app_id="tutorial", n_seed=2, rng_seed=1).test_profile()
        state = create_session(config, clock=lambda: 1.0)
        state.submit_evaluation(state.pending_seeds[0], Fidelity.FORMAL)
        log = tmp_path / "one.log"
        persist(state, log)
        assert run_cli("metrics", str(log)) == 0
        out = capsys.readouterr().out.strip().splitlines()
        header = out[0].split("\t")
        row = dict(zip(header, out[1].split("\t")))
        assert row["pareto_count"] == "1"
        assert row["formal_count"] == "1"
        assert float(row["total_travel_distance"]) == 0.0

    def test_corrupt_log_exit_2_names_line(self, tmp_path, capsys):
        log = tmp_path / "bad.log"
        config = SessionConfig(app_id="tutorial", rng_seed=1).test_profile()
        state = create_session(config, clock=lambda: 1.0)
        persist(state, log)
        with log.open("a") as fh:
            fh.write('{"truncated": \n')
        assert run_cli("metrics", str(log)) == 2
        assert "line 2" in capsys.readouterr().err

    def test_missing_file_exit_2(self, capsys):
        assert run_cli("metrics", "/nonexistent/x.log") == 2


class TestTechEval:
    def test_smoke_two_reps(self, tmp_path, capsys):
        rc = run_cli(
            "tech-eval", "--apps", "tutorial", "--q", "4", "--n-seed", "3",
            "--iterations", "4", "--repetitions", "2", "--seed", "1",
            "--out-dir", str(tmp_path),
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "tutorial\tcentroid_separation" in out
        scatter = (tmp_path / "tech_eval_scatter.csv").read_text().splitlines()
        assert scatter[0].startswith("app,repetition,iteration")
        assert len(scatter) == 1 + 2 * 4  # header + reps * iterations
        summary = json.loads((tmp_path / "tech_eval_summary.json").read_text())
        assert "tutorial" in summary and len(summary["tutorial"]["separations"]) == 2


class TestEntryPoint:
    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "steerbo.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        for cmd in ("run", "tech-eval", "metrics", "serve"):
            assert cmd in proc.stdout
