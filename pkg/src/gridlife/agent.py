"""One living cell: its network, optimizer, fitness, color, and move choice.

Site vectors carry 9 channels: [0..2] RGB color, [3] fitness, [4..8] one-hot
of the move the occupant realized last frame. Empty sites are all-zero. An
agent's 3x3x9 output reuses the same layout; its own movement logits are the
five movement channels at the center site. Loss is masked to the 36 color and
fitness values, so movement channels never enter the training target.
"""

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache

import numpy as np

from . import nn
from .errors import ContractError, ShapeError

N_CHANNELS = 9
COLOR_SLICE = slice(0, 3)
FITNESS_CHANNEL = 3
MOVE_SLICE = slice(4, 9)
N_STATE_VALUES = 36  # 4 color+fitness channels x 9 sites
CENTER = (1, 1)

FITNESS_SMOOTHING = 0.1
INITIAL_FITNESS = 0.5

# rng substream tags under the run seed: 0 = world master, 1 = per-agent, 2 = color projection
_AGENT_STREAM = 1
_PROJECTION_STREAM = 2


class Direction(IntEnum):
    STAY = 0
    UP = 1
    DOWN = 2
    LEFT = 3
    RIGHT = 4


# (dx, dy) with y growing downward; index matches movement channel 4 + value
DISPLACEMENT = {
    Direction.STAY: (0, 0),
    Direction.UP: (0, -1),
    Direction.DOWN: (0, 1),
    Direction.LEFT: (-1, 0),
    Direction.RIGHT: (1, 0),
}


@dataclass
class Prediction:
    """An agent's 3x3x9 output; state/logit accessors are views into it."""

    tensor: np.ndarray

    @property
    def move_logits(self):
        return self.tensor[CENTER[0], CENTER[1], MOVE_SLICE]

    @property
    def predicted_state(self):
        return self.tensor[:, :, 0:4]


@dataclass
class CellAgent:
    id: int
    params: nn.NetworkParams
    optimizer: nn.OptimizerState
    fitness: float
    color: np.ndarray
    rng: np.random.Generator
    projection_seed: int
    last_loss: float = 0.0


def agent_init(cell_id, seed, learning_rate, momentum):
    """Create one agent; params drawn from the (seed, id) substream, fitness 0.5."""
    rng = np.random.default_rng([seed, _AGENT_STREAM, cell_id])
    params = nn.init_params(rng)
    return CellAgent(
        id=cell_id,
        params=params,
        optimizer=nn.OptimizerState.fresh(learning_rate, momentum),
        fitness=INITIAL_FITNESS,
        color=derive_color(params, seed),
        rng=rng,
        projection_seed=seed,
    )


def agent_predict(agent, neighborhood):
    """Forward the 3x3x9 neighborhood through the agent's network."""
    out, tape = nn.network_forward(agent.params, neighborhood)
    return Prediction(out), tape


def select_move(logits, rng, epsilon):
    """Epsilon-uniform random direction, otherwise argmax (ties: lowest index)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ContractError(f"epsilon must be in [0, 1], got {epsilon}")
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (5,):
        raise ShapeError(f"expected 5 movement logits, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ContractError("movement logits contain non-finite values")
    if rng.random() < epsilon:
        return Direction(int(rng.integers(5)))
    return Direction(int(np.argmax(logits)))


def compute_loss(prediction, actual_next):
    """Masked MSE over the 36 color+fitness values; returns (loss, d_output).

    Movement channels are zero in both the loss and the cotangent. A
    non-finite prediction (diverged network) yields loss = inf and a zero
    cotangent so the simulation can keep running.
    """
    if actual_next.shape != prediction.tensor.shape:
        raise ShapeError(f"prediction {prediction.tensor.shape} vs actual {actual_next.shape}")
    diff = prediction.predicted_state - actual_next[:, :, 0:4]
    d_output = np.zeros_like(prediction.tensor)
    if not np.all(np.isfinite(diff)):
        return float("inf"), d_output
    loss = float(np.sum(diff * diff)) / N_STATE_VALUES
    d_output[:, :, 0:4] = (2.0 / N_STATE_VALUES) * diff
    return loss, d_output


def agent_learn(agent, tape, d_output, loss):
    """One gradient step from the frame's cotangent; recolors and records the loss.

    An all-zero cotangent (exact-gradient zero, including the diverged-
    prediction case) skips backward; a non-finite gradient is replaced by
    zeros so parameters stay finite under runaway hyperparameters.
    """
    if tape.params is not agent.params:
        raise ContractError("tape does not belong to this agent's parameters")
    if not np.any(d_output):
        if tape.consumed:
            raise ContractError("gradient tape already consumed")
        tape.consumed = True
        gradient = np.zeros(nn.param_count())
    else:
        gradient = nn.network_backward(agent.params, tape, d_output)
        if not np.all(np.isfinite(gradient)):
            gradient = np.zeros(nn.param_count())
    nn.sgd_momentum_step(agent.params, gradient, agent.optimizer)
    agent.color = derive_color(agent.params, agent.projection_seed)
    agent.last_loss = loss
    return agent


@lru_cache(maxsize=8)
def _projection_matrix(projection_seed, dim):
    rng = np.random.default_rng([projection_seed, _PROJECTION_STREAM])
    p = rng.integers(0, 2, size=(3, dim)).astype(np.float64) * 2.0 - 1.0
    p.setflags(write=False)
    return p


def _logistic(z):
    # overflow-safe in both tails
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def derive_color(params, projection_seed):
    """RGB in (0,1)^3: logistic of three fixed +-1 projections of the
    standardized parameter vector (std floored at 1e-8)."""
    theta = nn.flatten_params(params)
    std = max(float(theta.std()), 1e-8)
    unit = (theta - theta.mean()) / std
    z = _projection_matrix(projection_seed, theta.size) @ unit / np.sqrt(theta.size)
    return _logistic(z)


def update_fitness(old_fitness, loss):
    """Exponential moving average of 1/(1+loss); stays in [0, 1]."""
    if not 0.0 <= old_fitness <= 1.0:
        raise ContractError(f"fitness must be in [0, 1], got {old_fitness}")
    if not loss >= 0.0:
        raise ContractError(f"loss must be >= 0, got {loss}")
    score = 1.0 / (1.0 + loss)
    return (1.0 - FITNESS_SMOOTHING) * old_fitness + FITNESS_SMOOTHING * score
