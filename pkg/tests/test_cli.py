import io
import json
import subprocess
import sys
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from ldpcboost import ExperimentConfig, UcDataset, WeightSet
from ldpcboost.cli import main
from ldpcboost.pipeline import extend_with_stage
from ldpcboost.training import CSV_HEADER

TOY_YAML = """\
code:
  file: toy_2x4_z3.bm
channel:
  kind: awgn
  ebno_db: 1.0
base:
  num_iters: 4
  sharing: spatial
post:
  num_iters: 3
  sharing: dynamic
training:
  loss: bce
  schedule: one_shot
  epochs_per_stage: 3
  batch_size: 64
  train_frames: 256
  base_lr: 0.01
  snr_list: [1.0, 2.0]
collect:
  target_failures: 40
  batch_size: 256
augment:
  beta: 0.7
  per_source: 4
  batch_size: 128
eval:
  stop_errors: 20
  batch_size: 512
  ebno_list: [1.0, 2.0]
run:
  seed: 7
  budget_frames: 200000
"""


def run_cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        rc = main([str(a) for a in argv])
    return rc, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def pipe(tmp_path_factory):
    """Run the whole toy pipeline once; later tests inspect the artifacts."""
    d = tmp_path_factory.mktemp("cli_pipeline")
    cfg = d / "toy.yaml"
    cfg.write_text(TOY_YAML)
    paths = SimpleNamespace(
        dir=d, cfg=cfg, base=d / "base.npz", base_csv=d / "base.csv",
        fails=d / "fails.ucv", aug=d / "aug.ucv", boosted=d / "boosted.npz",
        post_csv=d / "post.csv")
    summaries = {}

    rc, out, _ = run_cli(["--config", cfg, "train-base",
                          "--out", paths.base, "--metrics", paths.base_csv])
    assert rc == 0
    summaries["train-base"] = out

    rc, out, _ = run_cli(["--config", cfg, "collect",
                          "--weights", paths.base, "--out", paths.fails])
    assert rc == 0
    summaries["collect"] = out

    rc, out, _ = run_cli(["--config", cfg, "augment", "--weights", paths.base,
                          "--dataset", paths.fails, "--out", paths.aug])
    assert rc == 0
    summaries["augment"] = out

    rc, out, _ = run_cli(["--config", cfg, "train-post", "--weights", paths.base,
                          "--dataset", paths.fails, "--out", paths.boosted,
                          "--metrics", paths.post_csv])
    assert rc == 0
    summaries["train-post"] = out

    paths.summaries = summaries
    return paths


class TestParsing:
    def test_subcommand_required(self):
        with pytest.raises(SystemExit) as e:
            main([])
        assert e.value.code == 2

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as e:
            main(["--frobnicate", "fer"])
        assert e.value.code == 2

    def test_missing_required_argument(self):
        with pytest.raises(SystemExit) as e:
            main(["collect", "--out", "x.ucv"])  # --weights missing
        assert e.value.code == 2


class TestConfigHandling:
    def test_missing_config_file_exits_2(self, tmp_path):
        rc, _, err = run_cli(["--config", tmp_path / "nope.yaml",
                              "complexity", "--weights", "w.npz", "--avg-iters", 5])
        assert rc == 2
        assert "config error" in err

    def test_unknown_config_key_exits_2(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("collect:\n  target: 10\n")
        rc, _, err = run_cli(["--config", bad,
                              "complexity", "--weights", "w.npz", "--avg-iters", 5])
        assert rc == 2
        assert "unknown config key" in err

    def test_env_override_applies(self, pipe, tmp_path, monkeypatch):
        monkeypatch.setenv("LDPCBOOST_COLLECT__TARGET_FAILURES", "5")
        out_path = tmp_path / "five.ucv"
        rc, out, _ = run_cli(["--config", pipe.cfg, "collect",
                              "--weights", pipe.base, "--out", out_path])
        assert rc == 0
        assert "failures=5 " in out
        assert len(UcDataset.load(out_path)) == 5

    def test_flag_beats_env(self, pipe, tmp_path, monkeypatch):
        flag_ds = tmp_path / "flag.ucv"
        plain_ds = tmp_path / "plain.ucv"
        run_cli(["--config", pipe.cfg, "--seed", 111, "collect", "--target", 8,
                 "--weights", pipe.base, "--out", plain_ds])
        monkeypatch.setenv("LDPCBOOST_RUN__SEED", "222")
        rc, _, _ = run_cli(["--config", pipe.cfg, "--seed", 111, "collect",
                            "--target", 8, "--weights", pipe.base, "--out", flag_ds])
        assert rc == 0
        assert flag_ds.read_bytes() == plain_ds.read_bytes()

    def test_bad_env_value_exits_2(self, pipe, monkeypatch, tmp_path):
        monkeypatch.setenv("LDPCBOOST_RUN__SEED", "not-a-number")
        rc, _, err = run_cli(["--config", pipe.cfg, "collect",
                              "--weights", pipe.base, "--out", tmp_path / "x.ucv"])
        assert rc == 2
        assert "expected an integer" in err


class TestSummaries:
    def test_one_line_key_value_format(self, pipe):
        for cmd, text in pipe.summaries.items():
            lines = text.strip().splitlines()
            assert len(lines) == 1
            tokens = lines[0].split(" ")
            assert tokens[0] == f"cmd={cmd}"
            assert all("=" in t for t in tokens)
            assert "code=toy_2x4_z3" in tokens

    def test_metrics_csv(self, pipe):
        lines = pipe.base_csv.read_text().strip().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + 3  # header + one row per epoch
        assert all(line.split(",")[1] == "0" for line in lines[1:])


class TestArtifacts:
    def test_trained_base(self, pipe):
        ws = WeightSet.load(pipe.base)
        assert ws.code_id == "toy_2x4_z3"
        assert ws.stage_lengths == (4,)

    def test_collected_dataset(self, pipe):
        ds = UcDataset.load(pipe.fails)
        assert len(ds) == 40
        assert not ds.partial
        assert Path(str(pipe.fails) + ".json").exists()

    def test_augmented_dataset(self, pipe):
        ds = UcDataset.load(pipe.aug)
        assert len(ds) == 40 * 4
        assert ds.augmentation is not None
        assert ds.augmentation.beta == pytest.approx(0.7)

    def test_boosted_weights(self, pipe):
        ws = WeightSet.load(pipe.boosted)
        assert ws.stage_lengths == (4, 3)
        assert ws.stages[1].mode == "dynamic"
        # base stage untouched by post training
        base = WeightSet.load(pipe.base)
        np.testing.assert_array_equal(ws.stages[0].chw, base.stages[0].chw)


class TestBudget:
    def test_collect_budget_exit_3_with_partial_saved(self, pipe, tmp_path):
        out_path = tmp_path / "part.ucv"
        rc, out, _ = run_cli(["--config", pipe.cfg, "--budget", 300, "collect",
                              "--target", 100000, "--weights", pipe.base,
                              "--out", out_path])
        assert rc == 3
        assert "partial=True" in out
        ds = UcDataset.load(out_path)
        assert ds.partial
        assert ds.frames_examined == 300


class TestEvaluationCommands:
    def test_fer_csv_to_file_and_stdout(self, pipe, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        rc, _, _ = run_cli(["--config", pipe.cfg, "fer",
                            "--weights", pipe.boosted, "--out", a])
        assert rc == 0
        rc, out, _ = run_cli(["--config", pipe.cfg, "fer",
                              "--weights", pipe.boosted, "--out", b])
        assert rc == 0
        assert a.read_bytes() == b.read_bytes()  # same seed, same bytes
        rc, out, _ = run_cli(["--config", pipe.cfg, "fer", "--weights", pipe.boosted])
        assert rc == 0
        assert out.startswith("ebno_db,frames,frame_errors,fer,ber,ci_low,ci_high\n")
        assert len([l for l in out.splitlines() if l.startswith("cmd=fer")]) == 1

    def test_fer_seed_changes_output(self, pipe, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli(["--config", pipe.cfg, "--seed", 1, "fer",
                 "--weights", pipe.boosted, "--out", a])
        run_cli(["--config", pipe.cfg, "--seed", 2, "fer",
                 "--weights", pipe.boosted, "--out", b])
        assert a.read_bytes() != b.read_bytes()

    def test_test_fer(self, pipe):
        rc, out, _ = run_cli(["--config", pipe.cfg, "test-fer",
                              "--weights", pipe.boosted, "--dataset", pipe.fails])
        assert rc == 0
        assert "split=test" in out and "residual_fer=" in out
        rc, out, _ = run_cli(["--config", pipe.cfg, "test-fer", "--split", "all",
                              "--weights", pipe.base, "--dataset", pipe.fails])
        assert rc == 0
        assert "residual_fer=1 " in out or out.rstrip().endswith("residual_fer=1")

    def test_complexity_json(self, pipe, tmp_path):
        out_path = tmp_path / "cx.json"
        rc, _, _ = run_cli(["--config", pipe.cfg, "complexity", "--weights",
                            pipe.boosted, "--avg-iters", 7, "--out", out_path])
        assert rc == 0
        rep = json.loads(out_path.read_text())
        assert rep["decoder_kind"] in ("ms", "wms", "nms")
        assert rep["avg_iterations"] == 7.0
        assert rep["total_operations"] > 0

    def test_complexity_measures_when_no_avg(self, pipe):
        rc, out, _ = run_cli(["--config", pipe.cfg, "complexity",
                              "--weights", pipe.base])
        assert rc == 0
        avg = float(out.split("avg_iters=")[1].split(" ")[0])
        assert 1.0 <= avg <= 4.0

    def test_histogram_from_dataset(self, pipe, tmp_path):
        out_path = tmp_path / "h.json"
        rc, _, _ = run_cli(["--config", pipe.cfg, "histogram", "--weights",
                            pipe.base, "--dataset", pipe.fails, "--out", out_path])
        assert rc == 0
        h = json.loads(out_path.read_text())
        assert h["total_frames"] == 40
        assert h["failed_frames"] == 40  # every collected frame fails the base
        assert sum(h["counts"].values()) == h["failed_frames"]

    def test_histogram_fresh_frames(self, pipe, monkeypatch):
        monkeypatch.setenv("LDPCBOOST_EVAL__HISTOGRAM_FRAMES", "512")
        rc, out, _ = run_cli(["--config", pipe.cfg, "histogram",
                              "--weights", pipe.base])
        assert rc == 0
        assert "frames=512" in out


class TestTransferCommand:
    def _qc_target(self, tmp_path, mode):
        cfg = ExperimentConfig.from_dict({"code": {"file": "qc_42_r12.bm"},
                                          "base": {"num_iters": 4}})
        g = cfg.build_graph()
        ws = extend_with_stage(cfg.build_base_weights(g), g, 5, mode)
        p = tmp_path / f"qc_{mode}.npz"
        ws.save(p)
        return p

    def test_transfer_between_codes(self, pipe, tmp_path):
        target = self._qc_target(tmp_path, "dynamic")
        out_path = tmp_path / "init.npz"
        rc, out, _ = run_cli(["transfer", "--source", pipe.boosted,
                              "--target", target, "--out", out_path])
        assert rc == 0
        assert "copied_iters=3" in out
        ws = WeightSet.load(out_path)
        src = WeightSet.load(pipe.boosted)
        np.testing.assert_array_equal(ws.stages[1].cw[:3], src.stages[1].cw)

    def test_transfer_mode_mismatch_exits_1(self, pipe, tmp_path):
        target = self._qc_target(tmp_path, "spatial")
        rc, _, err = run_cli(["transfer", "--source", pipe.boosted,
                              "--target", target, "--out", tmp_path / "x.npz"])
        assert rc == 1
        assert "error" in err


class TestRuntimeErrors:
    def test_missing_weights_exits_1(self, pipe, tmp_path):
        rc, _, err = run_cli(["--config", pipe.cfg, "complexity",
                              "--weights", tmp_path / "ghost.npz", "--avg-iters", 5])
        assert rc == 1
        assert err.startswith("error:")

    def test_missing_dataset_exits_1(self, pipe, tmp_path):
        rc, _, _ = run_cli(["--config", pipe.cfg, "test-fer", "--weights",
                            pipe.base, "--dataset", tmp_path / "ghost.ucv"])
        assert rc == 1

    def test_train_post_wrong_base_exits_1(self, pipe, tmp_path):
        cfg = ExperimentConfig.load(pipe.cfg)
        fresh = cfg.build_base_weights(cfg.build_graph())  # untrained, wrong hash
        fresh_path = tmp_path / "fresh.npz"
        fresh.save(fresh_path)
        rc, _, err = run_cli(["--config", pipe.cfg, "train-post",
                              "--weights", fresh_path, "--dataset", pipe.fails,
                              "--out", tmp_path / "x.npz"])
        assert rc == 1
        assert "base weights" in err


def test_module_entry_point(pipe):
    src_dir = Path(__file__).resolve().parents[1] / "src"
    r = subprocess.run(
        [sys.executable, "-m", "ldpcboost", "--config", str(pipe.cfg),
         "complexity", "--weights", str(pipe.base), "--avg-iters", "4"],
        capture_output=True, text=True,
        env={"PATH": "/usr/bin:/bin", "PYTHONPATH": str(src_dir)})
    assert r.returncode == 0
    assert "cmd=complexity" in r.stdout
