"""Grid world of self-trained convolutional cell agents.

Every living cell is a small residual network that observes its 3x3
neighborhood, predicts the neighborhood's next state, moves via five output
channels, competes for sites by fitness, and learns online from its own
prediction error.
"""

from .agent import (CellAgent, Direction, Prediction, agent_init, agent_learn,
                    agent_predict, compute_loss, derive_color, select_move,
                    update_fitness)
from .config import ExperimentConfig, StepMetrics
from .errors import ConfigError, ContractError, ShapeError
from .experiment import (ExperimentResult, grid_search, run_experiment,
                         write_metrics_csv, write_sweep_csv)
from .nn import (ConvLayer, GradientTape, NetworkParams, OptimizerState,
                 conv2d_forward, flatten_params, gradient_check, init_params,
                 network_backward, network_forward, sgd_momentum_step,
                 unflatten_params)
from .render import FrameImage, encode_animation, render_frame, write_frame_pngs
from .world import (CellRegistry, MoveProposal, World, extract_neighborhood,
                    init_world, propose_moves, resolve_moves, step)

__version__ = "0.1.0"
