"""Run configuration and per-epoch metric records."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class ExperimentConfig:
    n_cells: int
    seed: int = 0
    width: int = 100
    height: int = 100
    epochs: int = 30
    learning_rate: float = 0.01
    momentum: float = 0.99
    epsilon: float = 0.1
    tracked_cells: int = 3

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if not 0 <= self.n_cells <= self.width * self.height:
            raise ConfigError(f"n_cells={self.n_cells} exceeds grid capacity "
                              f"{self.width * self.height}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.tracked_cells < 0:
            raise ConfigError(f"tracked_cells must be >= 0, got {self.tracked_cells}")
        return self


@dataclass
class StepMetrics:
    """Per-epoch record: losses and post-update fitnesses keyed by cell id."""

    epoch: int
    per_cell_loss: dict = field(default_factory=dict)
    per_cell_fitness: dict = field(default_factory=dict)
    mean_loss: float = None

    @staticmethod
    def mean_of(per_cell_loss):
        """Arithmetic mean over cells in sorted-id order (None when empty)."""
        if not per_cell_loss:
            return None
        return float(np.mean(np.array([per_cell_loss[i] for i in sorted(per_cell_loss)])))
