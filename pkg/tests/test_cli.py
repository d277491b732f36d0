import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ikno.cli import main, merge_options, parse_config_file
from ikno.reports import validate_report


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestConfigMerging:
    def test_parse_config_file(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("num-samples = 8  # small\n\nkind = csines\n")
        assert parse_config_file(cfg) == {"num_samples": "8", "kind": "csines"}

    def test_parse_rejects_bad_line(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("just-a-word\n")
        with pytest.raises(ValueError, match="key = value"):
            parse_config_file(cfg)

    def test_precedence_defaults_config_flags(self):
        merged = merge_options(
            {"steps": 10, "lr0": 0.1, "variant": "tp"},
            {"steps": "20", "lr0": "0.5"},
            {"steps": 30},
        )
        assert merged == {"steps": 30, "lr0": 0.5, "variant": "tp"}

    def test_unknown_config_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            merge_options({"steps": 10}, {"stpes": "20"}, {})

    def test_bool_coercion(self):
        merged = merge_options({"resume": False}, {"resume": "true"}, {})
        assert merged["resume"] is True


class TestGenData:
    def test_csines_deterministic(self, tmp_path):
        args = ["gen-data", "--kind", "csines", "--num-samples", "4",
                "--num-points", "8", "--num-queries", "8", "--seed", "3"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        for name in ("input_coords", "input_values", "query_coords", "target_values"):
            assert _sha(tmp_path / "a" / f"{name}.f64le") == _sha(
                tmp_path / "b" / f"{name}.f64le"
            )

    def test_gen_report_schema_valid(self, tmp_path):
        assert main(["gen-data", "--kind", "toy-advection", "--num-samples", "2",
                     "--num-points", "8", "--out", str(tmp_path / "t")]) == 0
        report = json.loads((tmp_path / "t" / "gen_report.json").read_text())
        validate_report(report)
        assert report["report"] == "gen-data"

    def test_unknown_kind_exits_2(self, tmp_path, capsys):
        assert main(["gen-data", "--kind", "nope", "--out", str(tmp_path)]) == 2
        assert "unknown dataset kind" in capsys.readouterr().err

    def test_config_file_drives_generation(self, tmp_path):
        cfg = tmp_path / "gen.cfg"
        cfg.write_text("kind = csines\nnum-samples = 3\nnum-points = 8\n"
                       "num-queries = 8\nseed = 5\n")
        assert main(["gen-data", "--config", str(cfg),
                     "--out", str(tmp_path / "d")]) == 0
        manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
        assert manifest["meta"]["num_samples"] == 3

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("bogus-key = 1\n")
        assert main(["gen-data", "--config", str(cfg)]) == 2
        assert "unknown config keys" in capsys.readouterr().err


class TestVerify:
    def test_small_verify_passes(self, tmp_path, capsys):
        assert main(["verify", "--cases", "5", "--seed", "1",
                     "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out and "[FAIL]" not in out
        report = json.loads((tmp_path / "verify_report.json").read_text())
        validate_report(report)
        assert report["all_passed"] is True

    def test_fault_injection_fails(self, capsys):
        assert main(["verify", "--cases", "5", "--inject-fault",
                     "tp-as-vanilla"]) == 1
        captured = capsys.readouterr()
        assert "[FAIL]" in captured.out
        assert "resolvent-oracle-equivalence" in captured.err


class TestBenchCli:
    def test_bench_small_case(self, tmp_path, capsys):
        assert main(["bench", "--cases", "1x8", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "bench_report.json").read_text())
        validate_report(report)
        variants = {c["variant"] for c in report["cases"]}
        assert {"vanilla", "tp", "naive"} <= variants

    def test_bad_cases_flag_exits_2(self, capsys):
        assert main(["bench", "--cases", "garbage"]) == 2
        assert "bad --cases" in capsys.readouterr().err


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data") / "csines"
    assert main(["gen-data", "--kind", "csines", "--num-samples", "12",
                 "--num-points", "8", "--num-queries", "8", "--seed", "0",
                 "--out", str(d)]) == 0
    return d


class TestTrainEval:
    def test_missing_data_exits_1(self, tmp_path, capsys):
        assert main(["train", "--data", str(tmp_path / "nope")]) == 1
        assert "not found" in capsys.readouterr().err

    def test_train_then_eval(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "run"
        argv = ["train", "--data", str(dataset_dir), "--variant", "tp",
                "--steps", "4", "--grid-l", "4", "--hidden", "8",
                "--branches", "1", "--test-count", "4", "--batch-size", "2",
                "--checkpoint-every", "2", "--out", str(out)]
        assert main(argv) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        validate_report(metrics)
        log_lines = (out / "train_log.jsonl").read_text().splitlines()
        assert len(log_lines) == 4

        assert main(["eval", "--data", str(dataset_dir),
                     "--checkpoint", str(out / "checkpoint"),
                     "--out", str(tmp_path / "ev")]) == 0
        ev = json.loads((tmp_path / "ev" / "eval_report.json").read_text())
        validate_report(ev)
        assert ev["metrics"]["median_rel_l1_pct"] == pytest.approx(
            metrics["final"]["median_rel_l1_pct"]
        )

    def test_train_deterministic(self, dataset_dir, tmp_path):
        argv = ["train", "--data", str(dataset_dir), "--variant", "vanilla",
                "--steps", "3", "--grid-l", "4", "--hidden", "8",
                "--branches", "1", "--test-count", "4", "--batch-size", "2"]
        assert main(argv + ["--out", str(tmp_path / "r1")]) == 0
        assert main(argv + ["--out", str(tmp_path / "r2")]) == 0
        a = _sha(tmp_path / "r1" / "checkpoint" / "params.f64le")
        b = _sha(tmp_path / "r2" / "checkpoint" / "params.f64le")
        assert a == b

    def test_resume_matches_uninterrupted(self, dataset_dir, tmp_path, monkeypatch):
        base = ["train", "--data", str(dataset_dir), "--variant", "tp",
                "--grid-l", "4", "--hidden", "8", "--branches", "1",
                "--test-count", "4", "--batch-size", "2",
                "--checkpoint-every", "2", "--steps", "6"]
        assert main(base + ["--out", str(tmp_path / "full")]) == 0
        # simulate a kill right after the first checkpoint, then resume
        import ikno.experiments as exp

        orig = exp.save_checkpoint
        calls = {"n": 0}

        def flaky(*a, **k):
            orig(*a, **k)
            calls["n"] += 1
            if calls["n"] == 1:
                raise KeyboardInterrupt

        monkeypatch.setattr(exp, "save_checkpoint", flaky)
        with pytest.raises(KeyboardInterrupt):
            main(base + ["--out", str(tmp_path / "part")])
        monkeypatch.setattr(exp, "save_checkpoint", orig)
        assert main(base + ["--resume", "--out", str(tmp_path / "part")]) == 0
        a = _sha(tmp_path / "full" / "checkpoint" / "params.f64le")
        b = _sha(tmp_path / "part" / "checkpoint" / "params.f64le")
        assert a == b


class TestThreads:
    def test_ikno_threads_sets_blas_caps(self):
        code = (
            "import os, ikno.cli as c; c._apply_thread_cap(); "
            "print(os.environ['OMP_NUM_THREADS'], os.environ['OPENBLAS_NUM_THREADS'])"
        )
        env = dict(os.environ, IKNO_THREADS="2")
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            env.pop(var, None)
        out = subprocess.run([sys.executable, "-c", code], env=env,
                             capture_output=True, text=True, check=True)
        assert out.stdout.split() == ["2", "2"]

    def test_bad_ikno_threads_exits(self):
        env = dict(os.environ, IKNO_THREADS="abc")
        out = subprocess.run(
            [sys.executable, "-m", "ikno.cli", "verify", "--cases", "1"],
            env=env, capture_output=True, text=True,
        )
        assert out.returncode != 0
        assert "IKNO_THREADS" in out.stderr
