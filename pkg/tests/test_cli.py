import csv

import numpy as np
import pytest

from conftest import MNIST_TRAIN
from hybridboot.cli import main


def base_config(digits_idx_dir, tmp_path, extra=""):
    path = tmp_path / "exp.ini"
    path.write_text(
        f"""
[data]
train_images = {digits_idx_dir / MNIST_TRAIN[0]}
train_labels = {digits_idx_dir / MNIST_TRAIN[1]}
subset = 200

[model]
arch = mlp
hidden = 32
scheme = hybrid
u = 0.45

[train]
batch_size = 20
epochs = 3
seed = 7
weight_decay = 0.00001
{extra}
""",
        encoding="utf-8",
    )
    return path


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


class TestTrainCommand:
    def test_writes_history_rows(self, digits_idx_dir, tmp_path):
        cfg = base_config(digits_idx_dir, tmp_path)
        out = tmp_path / "metrics.csv"
        assert main(["train", str(cfg), "--out", str(out)]) == 0
        rows = read_rows(out)
        assert rows[0] == ["epoch", "train_loss", "eval_loss", "eval_error"]
        assert len(rows) == 1 + 3

    def test_byte_identical_rerun(self, digits_idx_dir, tmp_path):
        cfg = base_config(digits_idx_dir, tmp_path)
        out1, out2 = tmp_path / "m1.csv", tmp_path / "m2.csv"
        assert main(["train", str(cfg), "--out", str(out1)]) == 0
        assert main(["train", str(cfg), "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_set_override_changes_run(self, digits_idx_dir, tmp_path):
        cfg = base_config(digits_idx_dir, tmp_path)
        out1, out2 = tmp_path / "m1.csv", tmp_path / "m2.csv"
        assert main(["train", str(cfg), "--out", str(out1)]) == 0
        assert main(["train", str(cfg), "--out", str(out2),
                     "--set", "model.scheme=none"]) == 0
        assert out1.read_bytes() != out2.read_bytes()

    def test_seed_mandatory(self, digits_idx_dir, tmp_path):
        cfg = base_config(digits_idx_dir, tmp_path)
        text = cfg.read_text(encoding="utf-8").replace("seed = 7", "")
        cfg.write_text(text, encoding="utf-8")
        assert main(["train", str(cfg), "--out", str(tmp_path / "x.csv")]) == 2

    def test_missing_data_exit_3(self, digits_idx_dir, tmp_path):
        cfg = base_config(digits_idx_dir, tmp_path)
        code = main(["train", str(cfg), "--out", str(tmp_path / "x.csv"),
                     "--set", "data.train_images=/nonexistent/path"])
        assert code == 3

    def test_missing_config_exit_2(self, tmp_path):
        assert main(["train", str(tmp_path / "absent.ini"),
                     "--out", str(tmp_path / "x.csv")]) == 2

    def test_checkpoint_saved(self, digits_idx_dir, tmp_path):
        ckpt = tmp_path / "model.hbnn"
        cfg = base_config(digits_idx_dir, tmp_path, extra=f"checkpoint = {ckpt}")
        assert main(["train", str(cfg), "--out", str(tmp_path / "m.csv")]) == 0
        from hybridboot.nn import load_model

        model = load_model(ckpt)
        assert model.input_shape == (1, 8, 8)


class TestSweepCommand:
    def test_degenerate_grid_modes_coincide(self, digits_idx_dir, tmp_path):
        cfg = base_config(digits_idx_dir, tmp_path, extra="\n".join([
            "", "[sweep]", "levels = 0", "modes = sampled_u,fixed_p",
        ]))
        out = tmp_path / "sweep.csv"
        assert main(["sweep", str(cfg), "--out", str(out)]) == 0
        rows = read_rows(out)
        assert rows[0] == ["mode", "level", "test_error", "test_logloss", "status"]
        assert len(rows) == 3
        # same seed and zero corruption: identical metrics for both modes
        assert rows[1][2:] == rows[2][2:]

    def test_row_count_is_grid_times_modes(self, digits_idx_dir, tmp_path):
        cfg = base_config(digits_idx_dir, tmp_path, extra="\n".join([
            "", "[sweep]", "levels = 0.2,0.45", "modes = sampled_u,fixed_p",
        ]))
        out = tmp_path / "sweep.csv"
        assert main(["sweep", str(cfg), "--out", str(out)]) == 0
        assert len(read_rows(out)) == 1 + 2 * 2


class TestSizesCommand:
    def test_runs_both_schemes(self, digits_idx_dir, tmp_path):
        cfg = base_config(digits_idx_dir, tmp_path, extra="\n".join([
            "", "[sizes]", "sizes = 10,50",
        ]))
        out = tmp_path / "sizes.csv"
        assert main(["sizes", str(cfg), "--out", str(out)]) == 0
        rows = read_rows(out)
        assert rows[0] == ["scheme", "n", "test_error", "test_logloss", "status"]
        assert len(rows) == 1 + 2 * 2
        assert {r[0] for r in rows[1:]} == {"hybrid", "dropout"}


class TestGradnormCommand:
    def test_emits_level_norm_rows(self, digits_idx_dir, tmp_path):
        cfg = base_config(digits_idx_dir, tmp_path, extra="\n".join([
            "", "[gradnorm]", "batch = 20",
        ]))
        out = tmp_path / "gn.csv"
        assert main(["gradnorm", str(cfg), "--out", str(out)]) == 0
        rows = read_rows(out)
        assert rows[0] == ["corruption_layer", "target_layer", "example", "p", "grad_norm"]
        # 3 (corruption layer, downstream weight layer) pairs x 20 examples
        assert len(rows) == 1 + 3 * 20
        assert all(float(r[4]) >= 0 for r in rows[1:])


class TestCorrelateCommand:
    def test_per_seed_per_conv_layer(self, digits_idx_dir, tmp_path):
        cfg = base_config(digits_idx_dir, tmp_path, extra="\n".join([
            "", "[correlate]", "seeds = 1,2", "probe = 64",
        ]))
        out = tmp_path / "corr.csv"
        assert main(["correlate", str(cfg), "--out", str(out),
                     "--set", "model.arch=cnn",
                     "--set", "train.epochs=1"]) == 0
        rows = read_rows(out)
        assert rows[0] == ["seed", "layer", "median_abs_corr"]
        assert len(rows) == 1 + 2 * 2  # 2 seeds x 2 conv layers
        assert all(0.0 <= float(r[2]) <= 1.0 for r in rows[1:])

    def test_mlp_arch_rejected(self, digits_idx_dir, tmp_path):
        cfg = base_config(digits_idx_dir, tmp_path, extra="\n[correlate]\nseeds = 1")
        assert main(["correlate", str(cfg), "--out", str(tmp_path / "c.csv")]) == 2


class TestExpandCommand:
    def expand_config(self, tmp_path, tiny_csv, factor=3):
        path = tmp_path / "expand.ini"
        path.write_text(
            f"""
[expand]
input = {tiny_csv}
target = survived
scheme = hb
u = 0.45
factor = {factor}
seed = 5
""",
            encoding="utf-8",
        )
        return path

    def test_expand_row_count(self, tmp_path, tiny_csv):
        cfg = self.expand_config(tmp_path, tiny_csv)
        out = tmp_path / "expanded.csv"
        assert main(["expand", str(cfg), "--out", str(out)]) == 0
        rows = read_rows(out)
        assert len(rows) == 1 + 3 * 5

    def test_expand_deterministic(self, tmp_path, tiny_csv):
        cfg = self.expand_config(tmp_path, tiny_csv)
        out1, out2 = tmp_path / "e1.csv", tmp_path / "e2.csv"
        assert main(["expand", str(cfg), "--out", str(out1)]) == 0
        assert main(["expand", str(cfg), "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_expand_seed_override_differs(self, tmp_path, tiny_csv):
        cfg = self.expand_config(tmp_path, tiny_csv)
        out1, out2 = tmp_path / "e1.csv", tmp_path / "e2.csv"
        assert main(["expand", str(cfg), "--out", str(out1)]) == 0
        assert main(["expand", str(cfg), "--out", str(out2), "--seed", "99"]) == 0
        assert out1.read_bytes() != out2.read_bytes()

    def test_bad_scheme_exit_2(self, tmp_path, tiny_csv):
        cfg = self.expand_config(tmp_path, tiny_csv)
        assert main(["expand", str(cfg), "--out", str(tmp_path / "e.csv"),
                     "--set", "expand.scheme=bogus"]) == 2
