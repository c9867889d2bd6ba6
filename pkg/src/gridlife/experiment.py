"""Evaluation protocol: multi-epoch runs, learning-rate/momentum grid search,
and CSV persistence of per-cell loss curves."""

import dataclasses
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, StepMetrics
from .errors import ConfigError
from .world import init_world, step

DEFAULT_LEARNING_RATES = [0.1, 0.05, 0.01, 0.005, 0.001]
DEFAULT_MOMENTA = [0.9, 0.95, 0.97, 0.99]

LOSS_SCALE_255SQ = 255.0 ** 2  # rough-magnitude companion column, not an equivalence


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: list
    avg_cell_loss: float
    tracked_ids: list
    tracked_loss: dict

    def to_json(self):
        """Deterministic serialization (sorted keys, repr floats)."""
        payload = {
            "config": dataclasses.asdict(self.config),
            "avg_cell_loss": self.avg_cell_loss,
            "tracked_ids": self.tracked_ids,
            "tracked_loss": {str(k): v for k, v in self.tracked_loss.items()},
            "epochs": [
                {
                    "epoch": m.epoch,
                    "mean_loss": m.mean_loss,
                    "per_cell_loss": {str(k): m.per_cell_loss[k] for k in sorted(m.per_cell_loss)},
                    "per_cell_fitness": {str(k): m.per_cell_fitness[k]
                                         for k in sorted(m.per_cell_fitness)},
                }
                for m in self.metrics
            ],
        }
        return json.dumps(payload, sort_keys=True)


def run_experiment(config, on_state=None):
    """Run `epochs` frame transitions from a fresh world; fully deterministic.

    Tracked cells are drawn without replacement from the master rng before the
    first step. on_state(world), when given, is called on the initial world
    and again after every epoch (for frame capture).
    """
    config.validate()
    world = init_world(config, config.seed)
    ids = world.registry.ids()
    n_tracked = min(config.tracked_cells, len(ids))
    if n_tracked:
        tracked = sorted(int(i) for i in
                         world.rng.choice(np.array(ids), size=n_tracked, replace=False))
    else:
        tracked = []
    if on_state is not None:
        on_state(world)
    metrics = []
    for _ in range(config.epochs):
        world, m = step(world)
        metrics.append(m)
        if on_state is not None:
            on_state(world)
    mean_losses = [m.mean_loss for m in metrics if m.mean_loss is not None]
    avg = float(np.mean(np.array(mean_losses))) if mean_losses else None
    tracked_loss = {i: [m.per_cell_loss[i] for m in metrics] for i in tracked}
    return ExperimentResult(config=config, metrics=metrics, avg_cell_loss=avg,
                            tracked_ids=tracked, tracked_loss=tracked_loss)


def _run_combination(args):
    base, lr, momentum = args
    cfg = dataclasses.replace(base, learning_rate=lr, momentum=momentum)
    return run_experiment(cfg).avg_cell_loss


def grid_search(base, learning_rates, momenta, jobs=1):
    """Run every (lr, momentum) combination with the shared seed.

    Returns (best, table): best is the argmin (lr, momentum) pair with ties
    going to the first combination in lr-major order, and table is a list of
    (lr, momentum, avg_cell_loss) rows in that same order. Runs share nothing,
    so jobs > 1 executes them in separate processes.
    """
    if not learning_rates or not momenta:
        raise ConfigError("grid search needs at least one learning rate and one momentum")
    base.validate()
    combos = [(lr, m) for lr in learning_rates for m in momenta]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            losses = list(pool.map(_run_combination, [(base, lr, m) for lr, m in combos]))
    else:
        losses = [_run_combination((base, lr, m)) for lr, m in combos]
    table = [(lr, m, loss) for (lr, m), loss in zip(combos, losses)]
    best = None
    best_loss = None
    for lr, m, loss in table:
        key = float("inf") if loss is None else loss
        if best is None or key < best_loss:
            best, best_loss = (lr, m), key
    return best, table


def _atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_metrics_csv(result, path):
    """Per-(epoch, cell) loss/fitness rows, 17 significant digits, atomic write."""
    lines = ["epoch,cell_id,loss,loss_x255sq,fitness"]
    for m in result.metrics:
        for cell_id in sorted(m.per_cell_loss):
            loss = m.per_cell_loss[cell_id]
            fit = m.per_cell_fitness[cell_id]
            lines.append(f"{m.epoch},{cell_id},{loss:.17g},{loss * LOSS_SCALE_255SQ:.17g},{fit:.17g}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_metrics_csv(path):
    """Inverse of write_metrics_csv; rebuilds the StepMetrics list."""
    by_epoch = {}
    with open(path) as f:
        header = f.readline().strip()
        if header != "epoch,cell_id,loss,loss_x255sq,fitness":
            raise ConfigError(f"unrecognized metrics header in {path}")
        for line in f:
            epoch_s, cell_s, loss_s, _x255, fit_s = line.strip().split(",")
            m = by_epoch.setdefault(int(epoch_s), StepMetrics(epoch=int(epoch_s)))
            m.per_cell_loss[int(cell_s)] = float(loss_s)
            m.per_cell_fitness[int(cell_s)] = float(fit_s)
    metrics = [by_epoch[e] for e in sorted(by_epoch)]
    for m in metrics:
        m.mean_loss = StepMetrics.mean_of(m.per_cell_loss)
    return metrics


def write_sweep_csv(table, path):
    """Grid-search table in run order, 17 significant digits, atomic write."""
    lines = ["learning_rate,momentum,avg_cell_loss"]
    for lr, m, loss in table:
        loss_s = "" if loss is None else f"{loss:.17g}"
        lines.append(f"{lr:.17g},{m:.17g},{loss_s}")
    _atomic_write_text(path, "\n".join(lines) + "\n")
