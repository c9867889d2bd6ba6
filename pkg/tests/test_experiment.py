"""Experiment harness: runs, grid search, CSV persistence."""

import dataclasses

import numpy as np
import pytest

from gridlife import experiment as ex
from gridlife.config import ExperimentConfig, StepMetrics
from gridlife.errors import ConfigError


def small_config(**over):
    base = dict(n_cells=2, seed=4, width=6, height=6, epochs=3,
                learning_rate=0.01, momentum=0.9)
    base.update(over)
    return ExperimentConfig(**base)


# --- run_experiment -------------------------------------------------------------


def test_vacuous_run_reports_null_average():
    r = ex.run_experiment(small_config(n_cells=0, epochs=1))
    assert r.avg_cell_loss is None
    assert len(r.metrics) == 1
    assert r.metrics[0].per_cell_loss == {}
    assert r.tracked_ids == []


def test_experiment3_shape_runs_to_completion():
    cfg = ExperimentConfig(n_cells=30, seed=0, width=100, height=100, epochs=30)
    r = ex.run_experiment(cfg)
    assert len(r.metrics) == 30
    assert all(len(m.per_cell_loss) == 30 for m in r.metrics)
    assert len(r.tracked_ids) == 3
    assert all(len(v) == 30 for v in r.tracked_loss.values())
    assert r.avg_cell_loss > 0.0


def test_run_deterministic_serialization():
    a = ex.run_experiment(small_config())
    b = ex.run_experiment(small_config())
    assert a.to_json() == b.to_json()


def test_avg_recomputable_from_metrics():
    r = ex.run_experiment(small_config(epochs=5))
    again = float(np.mean(np.array([m.mean_loss for m in r.metrics])))
    assert again == r.avg_cell_loss
    for m in r.metrics:
        assert m.mean_loss == StepMetrics.mean_of(m.per_cell_loss)


def test_on_state_called_epochs_plus_one_times():
    calls = []
    ex.run_experiment(small_config(epochs=4), on_state=lambda w: calls.append(w.epoch))
    assert calls == [0, 1, 2, 3, 4]


def test_invalid_config_rejected():
    with pytest.raises(ConfigError):
        ex.run_experiment(small_config(n_cells=100))
    with pytest.raises(ConfigError):
        ex.run_experiment(small_config(epochs=0))
    with pytest.raises(ConfigError):
        ex.run_experiment(small_config(epsilon=1.5))


# --- grid_search ------------------------------------------------------------------


def test_grid_search_runs_every_combination(monkeypatch):
    seen = []

    def stub(config, on_state=None):
        seen.append((config.learning_rate, config.momentum, config.seed))
        return ex.ExperimentResult(config, [], 1.0, [], {})

    monkeypatch.setattr(ex, "run_experiment", stub)
    best, table = ex.grid_search(small_config(), ex.DEFAULT_LEARNING_RATES,
                                 ex.DEFAULT_MOMENTA)
    assert len(table) == 20
    assert len(seen) == 20
    assert len({s for s in seen}) == 20
    assert all(s[2] == 4 for s in seen)  # shared seed
    # lr-major order
    assert [row[0] for row in table] == [lr for lr in ex.DEFAULT_LEARNING_RATES
                                         for _ in ex.DEFAULT_MOMENTA]


def test_grid_search_stubbed_objective_argmin(monkeypatch):
    def stub(config, on_state=None):
        loss = (config.learning_rate - 0.01) ** 2 + (config.momentum - 0.99) ** 2
        return ex.ExperimentResult(config, [], loss, [], {})

    monkeypatch.setattr(ex, "run_experiment", stub)
    best, table = ex.grid_search(small_config(), ex.DEFAULT_LEARNING_RATES,
                                 ex.DEFAULT_MOMENTA)
    assert best == (0.01, 0.99)


def test_grid_search_tie_takes_first_in_order(monkeypatch):
    monkeypatch.setattr(ex, "run_experiment",
                        lambda config, on_state=None: ex.ExperimentResult(config, [], 1.0, [], {}))
    best, _ = ex.grid_search(small_config(), [0.1, 0.05], [0.9, 0.95])
    assert best == (0.1, 0.9)


def test_grid_search_single_pair():
    best, table = ex.grid_search(small_config(epochs=1), [0.05], [0.9])
    assert best == (0.05, 0.9)
    assert len(table) == 1


def test_grid_search_rejects_empty_lists():
    with pytest.raises(ConfigError):
        ex.grid_search(small_config(), [], [0.9])
    with pytest.raises(ConfigError):
        ex.grid_search(small_config(), [0.1], [])


def test_grid_search_parallel_matches_serial():
    cfg = small_config(epochs=2)
    best1, table1 = ex.grid_search(cfg, [0.05, 0.01], [0.9], jobs=1)
    best2, table2 = ex.grid_search(cfg, [0.05, 0.01], [0.9], jobs=2)
    assert best1 == best2
    assert table1 == table2


def test_grid_search_table_keyed_by_combination():
    cfg = small_config(epochs=1)
    _, t1 = ex.grid_search(cfg, [0.05, 0.01], [0.9, 0.95])
    _, t2 = ex.grid_search(cfg, [0.01, 0.05], [0.95, 0.9])
    assert {(lr, m): loss for lr, m, loss in t1} == {(lr, m): loss for lr, m, loss in t2}


# --- CSV --------------------------------------------------------------------------


def test_metrics_csv_row_count(tmp_path):
    r = ex.run_experiment(small_config(n_cells=2, epochs=3))
    path = tmp_path / "m.csv"
    ex.write_metrics_csv(r, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "epoch,cell_id,loss,loss_x255sq,fitness"
    assert len(lines) == 1 + 2 * 3


def test_metrics_csv_roundtrip_exact(tmp_path):
    r = ex.run_experiment(small_config(n_cells=3, epochs=4))
    path = tmp_path / "m.csv"
    ex.write_metrics_csv(r, path)
    back = ex.read_metrics_csv(path)
    assert len(back) == len(r.metrics)
    for got, want in zip(back, r.metrics):
        assert got.per_cell_loss == want.per_cell_loss
        assert got.per_cell_fitness == want.per_cell_fitness
        assert got.mean_loss == want.mean_loss
    avg = float(np.mean(np.array([m.mean_loss for m in back])))
    assert avg == r.avg_cell_loss


def test_empty_result_header_only(tmp_path):
    r = ex.run_experiment(small_config(n_cells=0, epochs=2))
    path = tmp_path / "m.csv"
    ex.write_metrics_csv(r, path)
    assert path.read_text() == "epoch,cell_id,loss,loss_x255sq,fitness\n"


def test_metrics_csv_byte_identical_across_runs(tmp_path):
    cfg = small_config(n_cells=4, epochs=5)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    ex.write_metrics_csv(ex.run_experiment(cfg), p1)
    ex.write_metrics_csv(ex.run_experiment(dataclasses.replace(cfg)), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_sweep_csv_shape(tmp_path):
    table = [(0.1, 0.9, 0.5), (0.1, 0.95, None)]
    path = tmp_path / "s.csv"
    ex.write_sweep_csv(table, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "learning_rate,momentum,avg_cell_loss"
    assert len(lines) == 3
    assert lines[2].endswith(",")  # null loss serializes as empty field
