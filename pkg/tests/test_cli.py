import subprocess
import sys

import numpy as np
import pytest

from vqcomm.cli import main
from vqcomm.quantizer import Codebook, QuantizerConfig, save_codebook


def _run(argv, stdin_text=None):
    return subprocess.run(
        [sys.executable, "-m", "vqcomm.cli", *argv],
        input=stdin_text,
        capture_output=True,
        text=True,
    )


def test_bounds_subcommand_defaults():
    result = _run(["bounds"])
    assert result.returncode == 0
    assert "0.052300497" in result.stdout


def test_run_with_overrides_writes_files(tmp_path):
    out = tmp_path / "toy"
    rc = main(
        [
            "run",
            "adding",
            "--set", "task.seq_len=5",
            "--set", "task.train_gap=3",
            "--set", "task.val_gap=2",
            "--set", "task.test_gap=4",
            "--set", "task.train_count=12",
            "--set", "task.eval_count=6",
            "--set", "training.epochs=1",
            "--set", "training.batch_size=6",
            "--set", "model.hidden=8",
            "--set", "model.modules=2",
            "--set", "model.k=1",
            "--seed", "3",
            "--out", str(out),
        ]
    )
    assert rc == 0
    assert (tmp_path / "toy.json").exists()
    assert (tmp_path / "toy_epochs.csv").exists()
    assert (tmp_path / "toy_metrics.csv").exists()


def test_run_config_file(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "kind=bounds\n"
        "quantizer.G=15\n"
        "quantizer.L=30\n"
        "task.bound_n=10000\n"
        "task.delta=0.05\n"
    )
    out = tmp_path / "b"
    rc = main(["run", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    header, row = (tmp_path / "b_bounds.csv").read_text().splitlines()
    cols = dict(zip(header.split(","), row.split(",")))
    assert abs(float(cols["bound_with"]) - 0.05230049721515383) < 1e-12


def test_config_error_exit_code_2(capsys):
    assert main(["run", "nonsense"]) == 2
    assert main(["run", "adding", "--set", "quantizer.bogus=1"]) == 2
    assert main(["run", "adding", "--config", "/does/not/exist.cfg"]) == 2


def test_hoeffding_subcommand():
    result = _run(["hoeffding", "--n", "200", "--trials", "3", "--L", "4", "--G", "2"])
    assert result.returncode == 0
    assert "violation_rate" in result.stdout


def test_gaussian_subcommand(tmp_path):
    rc = main(["gaussian", "--m", "4", "--L", "1,4", "--G", "1,2", "--samples", "32", "--trials", "2", "--out", str(tmp_path / "g")])
    assert rc == 0
    lines = (tmp_path / "g_variance.csv").read_text().splitlines()
    assert lines[0] == "L,G,samples,trials,mean_total_variance,mean_raw_variance"
    assert len(lines) == 5


def test_vector_field_subcommand(tmp_path):
    rc = main(["vector-field", "--L", "3", "--steps", "5", "--range", "1.0", "--out", str(tmp_path / "f")])
    assert rc == 0
    lines = (tmp_path / "f_field.csv").read_text().splitlines()
    assert lines[0] == "x,y,dx,dy,code"
    assert len(lines) == 26


def test_quantize_subcommand_stdin(tmp_path):
    rng = np.random.default_rng(0)
    cfg = QuantizerConfig(L=3, G=2, m=4)
    book = Codebook(3, 2, entries=rng.normal(size=(3, 2)), initialized=True)
    path = tmp_path / "book.vqcb"
    save_codebook(path, book, cfg)
    result = _run(["quantize", "--codebook", str(path)], stdin_text="0.0 0.0 1.0 1.0\n")
    assert result.returncode == 0
    z_part, idx_part = result.stdout.strip().split("|")
    assert len(z_part.split()) == 4
    indices = [int(v) for v in idx_part.split()]
    assert all(1 <= i <= 3 for i in indices)


def test_quantize_wrong_width_is_config_error(tmp_path):
    rng = np.random.default_rng(0)
    cfg = QuantizerConfig(L=3, G=2, m=4)
    book = Codebook(3, 2, entries=rng.normal(size=(3, 2)), initialized=True)
    path = tmp_path / "book.vqcb"
    save_codebook(path, book, cfg)
    result = _run(["quantize", "--codebook", str(path)], stdin_text="1.0 2.0\n")
    assert result.returncode == 2


def test_sweep_subcommand(tmp_path):
    out = tmp_path / "s"
    rc = main(
        [
            "sweep",
            "adding",
            "--set", "task.seq_len=5",
            "--set", "task.train_gap=3",
            "--set", "task.val_gap=2",
            "--set", "task.test_gap=4",
            "--set", "task.train_count=12",
            "--set", "task.eval_count=6",
            "--set", "training.epochs=1",
            "--set", "training.batch_size=6",
            "--set", "model.hidden=8",
            "--set", "model.modules=2",
            "--set", "model.k=1",
            "--set", "quantizer.discretize=true",
            "--set", "quantizer.warmup_vectors=32",
            "--L", "2,4",
            "--G", "2",
            "--seeds", "0",
            "--out", str(out),
        ]
    )
    assert rc == 0
    lines = (tmp_path / "s_sweep.csv").read_text().splitlines()
    assert lines[0] == "L,G,seed,split,loss"
    assert len(lines) == 1 + 2 * 3  # two grid cells, three splits each
