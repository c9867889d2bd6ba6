"""The lattice and the frame pipeline.

Three structures track the simulation: the vectorized grid (height, width, 9
float64), the cell registry (id <-> position bijection plus the agents), and
the per-frame intermediate grid of possibly-overlapping move proposals.
Positions are (x, y) tuples with y growing downward; the grid array is
indexed [y, x, channel].

The world is bounded (no wraparound): off-grid windows read as zeros and
off-grid moves are clamped to Stay.
"""

from dataclasses import dataclass

import numpy as np

from .agent import (DISPLACEMENT, FITNESS_CHANNEL, MOVE_SLICE, N_CHANNELS,
                    Direction, agent_init, agent_learn, agent_predict,
                    compute_loss, select_move, update_fitness)
from .config import ExperimentConfig, StepMetrics
from .errors import ConfigError, ContractError

_MASTER_STREAM = 0


@dataclass
class MoveProposal:
    cell_id: int
    origin: tuple
    target: tuple
    fitness: float
    chosen: Direction


class CellRegistry:
    """Bijection between live agents and occupied positions."""

    def __init__(self):
        self._agents = {}
        self._positions = {}
        self._by_pos = {}

    def __len__(self):
        return len(self._agents)

    def add(self, agent, pos):
        if agent.id in self._agents:
            raise ContractError(f"cell id {agent.id} already registered")
        if pos in self._by_pos:
            raise ContractError(f"position {pos} already occupied")
        self._agents[agent.id] = agent
        self._positions[agent.id] = pos
        self._by_pos[pos] = agent.id

    def agent(self, cell_id):
        if cell_id not in self._agents:
            raise ContractError(f"unknown cell id {cell_id}")
        return self._agents[cell_id]

    def position_of(self, cell_id):
        if cell_id not in self._positions:
            raise ContractError(f"unknown cell id {cell_id}")
        return self._positions[cell_id]

    def id_at(self, pos):
        return self._by_pos.get(pos)

    def ids(self):
        return sorted(self._agents)

    def move_all(self, final_positions):
        """Atomically relocate every cell; positions must stay injective."""
        if sorted(final_positions) != self.ids():
            raise ContractError("final positions must cover every living cell exactly once")
        by_pos = {}
        for cell_id, pos in final_positions.items():
            if pos in by_pos:
                raise ContractError(f"two cells resolved to position {pos}")
            by_pos[pos] = cell_id
        self._positions = dict(final_positions)
        self._by_pos = by_pos


@dataclass
class World:
    grid: np.ndarray
    registry: CellRegistry
    epoch: int
    rng: np.random.Generator
    config: ExperimentConfig

    def check_consistent(self):
        """Cross-check registry against grid site by site; raises on mismatch."""
        occupied = {tuple(p) for p in zip(*np.nonzero(self.grid.any(axis=2)))}
        expected = {(y, x) for (x, y) in
                    (self.registry.position_of(i) for i in self.registry.ids())}
        if occupied != expected:
            raise ContractError("occupied grid sites do not match registry positions")
        for cell_id in self.registry.ids():
            a = self.registry.agent(cell_id)
            x, y = self.registry.position_of(cell_id)
            site = self.grid[y, x]
            if not np.array_equal(site[0:3], a.color) or site[FITNESS_CHANNEL] != a.fitness:
                raise ContractError(f"site vector at {(x, y)} does not match agent {cell_id}")
            move = site[MOVE_SLICE]
            if np.count_nonzero(move) != 1 or not np.isin(move, (0.0, 1.0)).all():
                raise ContractError(f"movement channels at {(x, y)} are not one-hot")


def _write_site(grid, pos, agent, direction):
    x, y = pos
    grid[y, x, 0:3] = agent.color
    grid[y, x, FITNESS_CHANNEL] = agent.fitness
    grid[y, x, MOVE_SLICE] = 0.0
    grid[y, x, 4 + int(direction)] = 1.0


def init_world(config, seed):
    """Place n_cells agents at distinct uniform positions; movement one-hot = Stay."""
    config.validate()
    if seed < 0:
        raise ConfigError(f"seed must be >= 0, got {seed}")
    rng = np.random.default_rng([seed, _MASTER_STREAM])
    registry = CellRegistry()
    grid = np.zeros((config.height, config.width, N_CHANNELS))
    flat = rng.choice(config.width * config.height, size=config.n_cells, replace=False)
    for cell_id, idx in enumerate(flat):
        x, y = int(idx) % config.width, int(idx) // config.width
        a = agent_init(cell_id, seed, config.learning_rate, config.momentum)
        registry.add(a, (x, y))
        _write_site(grid, (x, y), a, Direction.STAY)
    return World(grid=grid, registry=registry, epoch=0, rng=rng, config=config)


def extract_neighborhood(grid, pos):
    """3x3x9 window centered at pos; out-of-grid and empty sites are zeros."""
    h, w = grid.shape[:2]
    x, y = pos
    if not (0 <= x < w and 0 <= y < h):
        raise ContractError(f"position {pos} outside {w}x{h} grid")
    win = np.zeros((3, 3, N_CHANNELS))
    y0, y1 = max(y - 1, 0), min(y + 2, h)
    x0, x1 = max(x - 1, 0), min(x + 2, w)
    win[y0 - y + 1:y1 - y + 1, x0 - x + 1:x1 - x + 1] = grid[y0:y1, x0:x1]
    return win


def propose_moves(world, decisions):
    """Group per-cell direction choices into the intermediate grid.

    Each proposal targets origin + displacement, clamped to a Stay proposal
    when the displacement leaves the grid. Requires exactly one decision per
    living cell.
    """
    registry = world.registry
    h, w = world.grid.shape[:2]
    seen = set()
    intermediate = {}
    for cell_id, direction in decisions:
        if cell_id in seen:
            raise ContractError(f"duplicate decision for cell {cell_id}")
        seen.add(cell_id)
        origin = registry.position_of(cell_id)
        dx, dy = DISPLACEMENT[Direction(direction)]
        target = (origin[0] + dx, origin[1] + dy)
        chosen = Direction(direction)
        if not (0 <= target[0] < w and 0 <= target[1] < h):
            target, chosen = origin, Direction.STAY
        proposal = MoveProposal(cell_id=cell_id, origin=origin, target=target,
                                fitness=registry.agent(cell_id).fitness, chosen=chosen)
        intermediate.setdefault(target, []).append(proposal)
    if len(seen) != len(registry):
        raise ContractError("decisions must cover every living cell")
    return intermediate


def resolve_moves(intermediate, registry):
    """Fitness-priority conflict resolution; returns cell id -> final position.

    A move into a target succeeds only if the target was unoccupied at frame
    start (or is the mover's own origin) and the mover has the highest
    (fitness, then lowest id) among all cells proposing that target. Everyone
    else reverts to origin. The outcome is injective and independent of
    proposal ordering.
    """
    seen = set()
    for proposals in intermediate.values():
        for p in proposals:
            if p.cell_id in seen:
                raise ContractError(f"cell {p.cell_id} appears in multiple proposals")
            seen.add(p.cell_id)
    if seen != set(registry.ids()):
        raise ContractError("proposals must cover every living cell exactly once")

    occupied_at_start = {registry.position_of(i) for i in registry.ids()}
    final = {}
    for target, proposals in intermediate.items():
        own = [p for p in proposals if p.origin == target]
        if own:
            winner_id = own[0].cell_id
        elif target in occupied_at_start:
            winner_id = None
        else:
            best = max(proposals, key=lambda p: (p.fitness, -p.cell_id))
            winner_id = best.cell_id
        for p in proposals:
            final[p.cell_id] = target if p.cell_id == winner_id else p.origin
    return final


def step(world):
    """Advance one epoch through the full frame pipeline.

    Phases: (1) extract neighborhoods from the current grid, (2) predict,
    (3) choose moves (per-agent rng, epsilon from config), (4) propose,
    (5) resolve by fitness priority, (6) rebuild the grid at resolved
    positions with pre-update colors/fitness and the realized move one-hot,
    (7) score each prediction against the new grid's window at the cell's
    new position, (8) learn, (9) update fitness and rewrite site vectors.
    """
    registry = world.registry
    ids = registry.ids()
    epsilon = world.config.epsilon

    neighborhoods = {i: extract_neighborhood(world.grid, registry.position_of(i))
                     for i in ids}
    predictions = {}
    tapes = {}
    for i in ids:
        predictions[i], tapes[i] = agent_predict(registry.agent(i), neighborhoods[i])
    decisions = [(i, select_move(predictions[i].move_logits, registry.agent(i).rng, epsilon))
                 for i in ids]

    intermediate = propose_moves(world, decisions)
    final = resolve_moves(intermediate, registry)

    chosen = {i: d for i, d in decisions}
    realized = {i: (chosen[i] if final[i] != registry.position_of(i) else Direction.STAY)
                for i in ids}

    new_grid = np.zeros_like(world.grid)
    for i in ids:
        _write_site(new_grid, final[i], registry.agent(i), realized[i])

    metrics = StepMetrics(epoch=world.epoch)
    d_outputs = {}
    for i in ids:
        loss, d_out = compute_loss(predictions[i], extract_neighborhood(new_grid, final[i]))
        metrics.per_cell_loss[i] = loss
        d_outputs[i] = d_out

    for i in ids:
        a = registry.agent(i)
        agent_learn(a, tapes[i], d_outputs[i], metrics.per_cell_loss[i])
        a.fitness = update_fitness(a.fitness, metrics.per_cell_loss[i])
        _write_site(new_grid, final[i], a, realized[i])
        metrics.per_cell_fitness[i] = a.fitness

    registry.move_all(final)
    world.grid = new_grid
    world.epoch += 1
    metrics.mean_loss = StepMetrics.mean_of(metrics.per_cell_loss)
    return world, metrics
