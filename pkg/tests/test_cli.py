"""CLI surface: subcommands, config precedence, exit codes, artifacts."""

import os

import yaml
from PIL import Image

from gridlife.cli import run_cli
from gridlife.experiment import read_metrics_csv


def write_config(path, **values):
    with open(path, "w") as f:
        yaml.safe_dump(values, f)
    return str(path)


def test_no_arguments_prints_usage_and_exits_1(capsys):
    assert run_cli([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_exits_1(capsys):
    assert run_cli(["run", "--frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_run_writes_metrics_and_curves(tmp_path, capsys):
    cfg = write_config(tmp_path / "exp.cfg", n_cells=3, width=8, height=8,
                       epochs=4, seed=9, tracked_cells=2)
    out = tmp_path / "out"
    assert run_cli(["run", "--config", cfg, "--out", str(out)]) == 0
    metrics = read_metrics_csv(out / "metrics.csv")
    assert len(metrics) == 4
    assert all(len(m.per_cell_loss) == 3 for m in metrics)
    curves = sorted(p.name for p in out.glob("loss_cell_*.png"))
    assert len(curves) == 2


def test_run_flag_overrides_config(tmp_path):
    cfg = write_config(tmp_path / "exp.cfg", n_cells=3, width=8, height=8,
                       epochs=4, seed=9)
    out = tmp_path / "out"
    assert run_cli(["run", "--config", cfg, "--out", str(out), "--epochs", "2"]) == 0
    assert len(read_metrics_csv(out / "metrics.csv")) == 2


def test_gil_seed_env_is_lowest_priority(tmp_path, monkeypatch):
    out1, out2, out3 = tmp_path / "o1", tmp_path / "o2", tmp_path / "o3"
    base = ["run", "--cells", "2", "--width", "6", "--height", "6", "--epochs", "2"]

    monkeypatch.setenv("GIL_SEED", "5")
    assert run_cli(base + ["--out", str(out1)]) == 0
    monkeypatch.delenv("GIL_SEED")
    assert run_cli(base + ["--seed", "5", "--out", str(out2)]) == 0
    monkeypatch.setenv("GIL_SEED", "1234")
    assert run_cli(base + ["--seed", "5", "--out", str(out3)]) == 0

    b1 = (out1 / "metrics.csv").read_bytes()
    assert b1 == (out2 / "metrics.csv").read_bytes()
    assert b1 == (out3 / "metrics.csv").read_bytes()


def test_run_identical_invocations_byte_identical(tmp_path):
    cfg = write_config(tmp_path / "exp.cfg", n_cells=3, width=8, height=8,
                       epochs=3, seed=2)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert run_cli(["run", "--config", cfg, "--out", str(out), "--gif"]) == 0
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()
    assert (out1 / "run.gif").read_bytes() == (out2 / "run.gif").read_bytes()
    for p1 in out1.glob("loss_cell_*.png"):
        assert p1.read_bytes() == (out2 / p1.name).read_bytes()


def test_missing_cells_is_config_error(tmp_path):
    assert run_cli(["run", "--out", str(tmp_path / "o")]) == 1


def test_unknown_config_key_is_config_error(tmp_path):
    cfg = write_config(tmp_path / "exp.cfg", n_cells=2, banana=1)
    assert run_cli(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_overfull_grid_is_config_error(tmp_path):
    cfg = write_config(tmp_path / "exp.cfg", n_cells=100, width=4, height=4)
    assert run_cli(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "blocked"
    blocker.write_text("not a directory")
    cfg = write_config(tmp_path / "exp.cfg", n_cells=2, width=6, height=6, epochs=1)
    assert run_cli(["run", "--config", cfg, "--out", str(blocker)]) == 2


def test_sweep_writes_table_and_best(tmp_path, capsys):
    cfg = write_config(tmp_path / "exp.cfg", n_cells=2, width=6, height=6,
                       epochs=2, seed=3)
    out = tmp_path / "out"
    code = run_cli(["sweep", "--config", cfg, "--out", str(out),
                    "--lrs", "0.05", "0.01", "--momenta", "0.9"])
    assert code == 0
    lines = (out / "sweep.csv").read_text().strip().split("\n")
    assert len(lines) == 3
    assert (out / "best.json").exists()
    assert "best" in capsys.readouterr().out


def test_render_writes_frames_and_gif(tmp_path):
    cfg = write_config(tmp_path / "exp.cfg", n_cells=2, width=6, height=6,
                       epochs=3, seed=1)
    out = tmp_path / "out"
    assert run_cli(["render", "--config", cfg, "--out", str(out), "--scale", "2"]) == 0
    frames = sorted(os.listdir(out / "frames"))
    assert len(frames) == 4  # initial frame + 3 epochs
    assert frames[0] == "frame_00000.png"
    with Image.open(out / "run.gif") as im:
        assert im.n_frames == 4
        assert im.size == (12, 12)


def test_gradcheck_prints_small_error(capsys):
    assert run_cli(["gradcheck", "--seed", "7"]) == 0
    value = float(capsys.readouterr().out.strip())
    assert value < 1e-4
