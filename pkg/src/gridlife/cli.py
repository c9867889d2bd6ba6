"""Command-line entry point: run experiments, sweep hyperparameters, render
frames, and check gradients.

Config files are flat YAML mappings whose keys match ExperimentConfig fields.
Precedence for every setting: CLI flag > config file > GIL_SEED environment
variable (seed only) > built-in default. Exit codes: 0 success, 1 config or
usage error, 2 I/O error.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np
import yaml

from . import nn
from .config import ExperimentConfig
from .errors import ConfigError, ContractError
from .experiment import (DEFAULT_LEARNING_RATES, DEFAULT_MOMENTA, grid_search,
                         run_experiment, write_metrics_csv, write_sweep_csv)
from .render import render_frame, encode_animation, write_frame_pngs

SEED_ENV_VAR = "GIL_SEED"


class _Parser(argparse.ArgumentParser):
    # usage errors must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _build_parser():
    parser = _Parser(prog="gridlife",
                     description="Grid world of self-trained convolutional cell agents.")
    sub = parser.add_subparsers(dest="command")

    def add_config_flags(p):
        p.add_argument("--config", help="YAML config file (keys match ExperimentConfig fields)")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, help="run seed (overrides config and GIL_SEED)")
        p.add_argument("--cells", type=int, dest="n_cells", help="initial cell count")
        p.add_argument("--width", type=int, help="grid width (default 100)")
        p.add_argument("--height", type=int, help="grid height (default 100)")
        p.add_argument("--epochs", type=int, help="epochs to simulate (default 30)")
        p.add_argument("--lr", type=float, dest="learning_rate",
                       help="learning rate (default 0.01)")
        p.add_argument("--momentum", type=float, help="momentum (default 0.99)")
        p.add_argument("--epsilon", type=float,
                       help="random-action probability (default 0.1)")
        p.add_argument("--tracked-cells", type=int, dest="tracked_cells",
                       help="cells to track for loss curves (default 3)")

    p_run = sub.add_parser("run", help="run one experiment and write metrics + loss curves")
    add_config_flags(p_run)
    p_run.add_argument("--gif", action="store_true", help="also write an animated GIF")
    p_run.add_argument("--frames", action="store_true", help="also write per-epoch PNG frames")
    p_run.add_argument("--scale", type=int, default=6, help="pixels per site (default 6)")

    p_sweep = sub.add_parser("sweep", help="grid search over learning rate x momentum")
    add_config_flags(p_sweep)
    p_sweep.add_argument("--lrs", type=float, nargs="+", default=None,
                         help=f"learning rates (default {DEFAULT_LEARNING_RATES})")
    p_sweep.add_argument("--momenta", type=float, nargs="+", default=None,
                         help=f"momenta (default {DEFAULT_MOMENTA})")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel runs (default 1)")

    p_render = sub.add_parser("render", help="run a config and write frames + GIF only")
    add_config_flags(p_render)
    p_render.add_argument("--scale", type=int, default=6, help="pixels per site (default 6)")
    p_render.add_argument("--delay", type=int, default=100, help="GIF frame delay ms")

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    p_grad.add_argument("--seed", type=int, default=0, help="seed for params and input")
    p_grad.add_argument("--step", type=float, default=1e-5, help="central-difference step")

    return parser


def _load_config(args):
    values = {}
    if args.config:
        with open(args.config) as f:
            loaded = yaml.safe_load(f) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {args.config} must be a flat key-value mapping")
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(loaded) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for name in ("seed", "n_cells", "width", "height", "epochs", "learning_rate",
                 "momentum", "epsilon", "tracked_cells"):
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    if "seed" not in values and os.environ.get(SEED_ENV_VAR):
        try:
            values["seed"] = int(os.environ[SEED_ENV_VAR])
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, "
                              f"got {os.environ[SEED_ENV_VAR]!r}")
    if "n_cells" not in values:
        raise ConfigError("n_cells is required (set --cells or the config file)")
    try:
        config = ExperimentConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e))
    return config.validate()


def _write_loss_curves(result, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for cell_id in result.tracked_ids:
        series = result.tracked_loss[cell_id]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(range(len(series)), series, lw=1.2)
        ax.set_xlabel("epoch")
        ax.set_ylabel("masked MSE loss")
        ax.set_title(f"cell {cell_id} loss per epoch")
        path = os.path.join(out_dir, f"loss_cell_{cell_id:05d}.png")
        fig.savefig(path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        paths.append(path)
    return paths


def _collect_frames(scale):
    frames = []

    def on_state(world):
        frames.append(render_frame(world.grid, scale=scale))

    return frames, on_state


def _cmd_run(args):
    config = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    want_frames = args.gif or args.frames
    frames, on_state = _collect_frames(args.scale) if want_frames else ([], None)
    result = run_experiment(config, on_state=on_state)
    csv_path = os.path.join(args.out, "metrics.csv")
    write_metrics_csv(result, csv_path)
    curve_paths = _write_loss_curves(result, args.out)
    if args.frames:
        write_frame_pngs(frames, os.path.join(args.out, "frames"))
    if args.gif:
        encode_animation(frames, os.path.join(args.out, "run.gif"))
    avg = "null" if result.avg_cell_loss is None else f"{result.avg_cell_loss:.6g}"
    print(f"wrote {csv_path} ({config.epochs} epochs, {config.n_cells} cells), "
          f"{len(curve_paths)} loss curves; avg cell loss {avg}")
    return 0


def _cmd_sweep(args):
    config = _load_config(args)
    lrs = args.lrs if args.lrs is not None else DEFAULT_LEARNING_RATES
    momenta = args.momenta if args.momenta is not None else DEFAULT_MOMENTA
    best, table = grid_search(config, lrs, momenta, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "sweep.csv")
    write_sweep_csv(table, csv_path)
    best_loss = next(loss for lr, m, loss in table if (lr, m) == best)
    report = {"learning_rate": best[0], "momentum": best[1], "avg_cell_loss": best_loss}
    with open(os.path.join(args.out, "best.json"), "w") as f:
        json.dump(report, f, sort_keys=True)
        f.write("\n")
    print(f"wrote {csv_path} ({len(table)} combinations); "
          f"best lr={best[0]} momentum={best[1]} avg_cell_loss={best_loss}")
    return 0


def _cmd_render(args):
    config = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    frames, on_state = _collect_frames(args.scale)
    run_experiment(config, on_state=on_state)
    paths = write_frame_pngs(frames, os.path.join(args.out, "frames"))
    gif_path = os.path.join(args.out, "run.gif")
    encode_animation(frames, gif_path, frame_delay=args.delay)
    print(f"wrote {len(paths)} frames and {gif_path}")
    return 0


def _cmd_gradcheck(args):
    rng = np.random.default_rng([args.seed, 3])
    params = nn.init_params(rng)
    x = rng.normal(size=(3, 3, nn.IN_CHANNELS))
    err = nn.gradient_check(params, x, args.step, rng=rng)
    print(f"{err:.6e}")
    return 0


def run_cli(argv):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if e.code is not None else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep,
                "render": _cmd_render, "gradcheck": _cmd_gradcheck}
    try:
        return handlers[args.command](args)
    except (ConfigError, ContractError) as e:
        sys.stderr.write(f"error: {e}\n")
        return 1
    except OSError as e:
        sys.stderr.write(f"i/o error: {e}\n")
        return 2


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
