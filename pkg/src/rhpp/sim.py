"""Lifelong warehouse simulation: state, task assignment, episode loop.

Two task-assignment models are supported. The Amazon model draws goals from
endpoint cells with exclusive holds; the Symbotic model runs a loaded-state
machine over inbound/outbound/aisle/deck regions.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field

from .grid import (
    AMAZON_START_KINDS,
    SYMBOTIC_START_KINDS,
    CellKind,
    Move,
    manhattan,
)
from .planner import rh_pp_step
from .sipp import shortest_path_static

AMAZON = "amazon"
SYMBOTIC = "symbotic"


@dataclass
class AgentState:
    id: int
    location: int
    goals: list = field(default_factory=list)
    loaded: bool = False  # Symbotic only
    completed: int = 0
    last_goal: int | None = None  # location of the most recently completed goal


@dataclass
class WorldState:
    agents: list
    t: int = 0
    held_endpoints: dict = field(default_factory=dict)  # endpoint loc -> agent id


@dataclass
class SimConfig:
    map_path: str
    n_agents: int
    w: int = 20
    h: int = 5
    sim_horizon: int = 800  # T
    k: int = 5
    beta: float = 100.0
    kappa: float = 1000.0
    sigma: float = 1000.0
    gamma: float = 0.99
    seed: int = 0
    assigner: str = AMAZON
    policy: str = "random"

    def __post_init__(self):
        if not (1 <= self.h <= self.w <= self.sim_horizon):
            raise ValueError("require 1 <= h <= w <= T")
        if self.sim_horizon % self.h != 0:
            raise ValueError("T must be a multiple of h")
        if self.n_agents < 1 or self.k < 1:
            raise ValueError("N and K must be >= 1")
        if self.kappa < 0 or self.sigma < 0:
            raise ValueError("kappa and sigma must be >= 0")
        if self.assigner not in (AMAZON, SYMBOTIC):
            raise ValueError(f"unknown assigner {self.assigner!r}")

    @property
    def planning_steps(self):
        return self.sim_horizon // self.h


@dataclass
class Observation:
    paths: list  # N rows of location ints, all of length r
    r: int


@dataclass
class RewardTerms:
    d: list
    c: list
    s: list
    reward: float


@dataclass
class EpisodeMetrics:
    total_throughput: int
    tpa: float
    per_step_completions: list
    mean_solve_s: float
    max_solve_s: float
    infeasibility_rate: float
    valid: bool = True


def _start_cells(grid, assigner):
    kinds = AMAZON_START_KINDS if assigner == AMAZON else SYMBOTIC_START_KINDS
    return grid.cells_of_kind(*kinds)


def init_episode(config, grid, rng):
    cells = _start_cells(grid, config.assigner)
    if config.n_agents > len(cells):
        raise ValueError(
            f"{config.n_agents} agents exceed {len(cells)} permitted start cells"
        )
    starts = rng.sample(cells, config.n_agents)
    loaded = config.assigner == SYMBOTIC
    agents = [AgentState(id=i, location=loc, loaded=loaded) for i, loc in enumerate(starts)]
    state = WorldState(agents=agents)
    assign_tasks(state, grid, config.assigner, rng)
    return state


def _region_cells(grid, kind):
    cells = grid.cells_of_kind(kind)
    if not cells:
        raise ValueError(f"map has no {kind.name.lower()} cells")
    return cells


def assign_tasks(state, grid, assigner, rng):
    """Give one new goal to every agent with an empty queue."""
    for agent in state.agents:
        if agent.goals:
            continue
        if assigner == AMAZON:
            endpoints = _region_cells(grid, CellKind.ENDPOINT)
            eligible = [
                loc
                for loc in endpoints
                if loc != agent.location and state.held_endpoints.get(loc) is None
            ]
            if not eligible:
                raise ValueError(f"no eligible endpoint for agent {agent.id}")
            goal = rng.choice(eligible)
            state.held_endpoints[goal] = agent.id
            agent.goals.append(goal)
        else:
            agent.goals.append(_next_symbotic_goal(agent, grid, rng))
    return state


def _next_symbotic_goal(agent, grid, rng):
    if agent.last_goal is None:
        # First task: a loaded agent heads to an aisle station to store.
        return rng.choice(_region_cells(grid, CellKind.AISLE))
    region = grid.kind(agent.last_goal)
    if region is CellKind.INBOUND:
        agent.loaded = False
        return rng.choice(_region_cells(grid, CellKind.AISLE))
    if region is CellKind.OUTBOUND:
        agent.loaded = True
        pool = _region_cells(grid, CellKind.INBOUND) + _region_cells(grid, CellKind.AISLE)
        return rng.choice(pool)
    if region is CellKind.AISLE:
        if agent.loaded:
            agent.loaded = False
            return rng.choice(_region_cells(grid, CellKind.OUTBOUND))
        agent.loaded = True
        pool = _region_cells(grid, CellKind.INBOUND) + _region_cells(grid, CellKind.AISLE)
        return rng.choice(pool)
    raise ValueError(f"completed goal in unexpected region {region}")


def observation_cap(grid, w):
    return w + grid.static_diameter()


def compute_observation(state, grid, w):
    """Static shortest paths per agent, right-padded to a common length."""
    rows = []
    cap = observation_cap(grid, w)
    for agent in state.agents:
        if not agent.goals:
            raise ValueError(f"agent {agent.id} has no goal")
        row = shortest_path_static(grid, agent.location, list(agent.goals))
        rows.append(row[:cap])
    r = max(len(row) for row in rows)
    padded = [row + [row[-1]] * (r - len(row)) for row in rows]
    return Observation(paths=padded, r=r)


def compute_reward(state, plan, result, config, grid):
    """Reward terms for the step just executed.

    Distances use the post-execution agent locations and remaining goal
    queues; agents whose queue emptied this step contribute zero distance.
    """
    d, c, s = [], [], []
    for agent in state.agents:
        if agent.goals:
            dist = sum(manhattan(grid, agent.location, g) for g in agent.goals) / len(
                agent.goals
            )
        else:
            dist = 0.0
        d.append(dist)
        c.append(1 if all(m is Move.WAIT for m in plan.moves[agent.id]) else 0)
        s.append(result.s[agent.id])
    n = len(state.agents)
    reward = -sum(
        di + config.kappa * ci + config.sigma * si for di, ci, si in zip(d, c, s)
    ) / n
    return RewardTerms(d=d, c=c, s=s, reward=reward)


def advance(state, plan, grid, h):
    """Execute h moves per agent; pop goals reached at any instant."""
    completions = 0
    for step in range(h):
        occupied = set()
        for agent in state.agents:
            move = plan.moves[agent.id][step]
            if move is not Move.WAIT:
                nbr = dict(grid._nbrs[agent.location])
                agent.location = nbr[move]
            occupied.add(agent.location)
        assert len(occupied) == len(state.agents), "unsafe execution plan"
        for agent in state.agents:
            if agent.goals and agent.location == agent.goals[0]:
                goal = agent.goals.pop(0)
                agent.completed += 1
                agent.last_goal = goal
                completions += 1
                if state.held_endpoints.get(goal) == agent.id:
                    del state.held_endpoints[goal]
    state.t += h
    return completions


class EpisodeTraceEntry(dict):
    """Plain dict alias; one JSONL record per planning step."""


def run_episode(config, grid, policy, heatmap_steps=(), heatmap_samples=100):
    """Run one full lifelong episode; returns (EpisodeMetrics, trace list)."""
    world_rng = random.Random(f"{config.seed}:world")
    repair_rng = random.Random(f"{config.seed}:repair")
    state = init_episode(config, grid, world_rng)
    policy.reset(config, grid)

    per_step = []
    solve_times = []
    infeasible_steps = 0
    trace = []
    heatmap_steps = set(heatmap_steps)
    valid = True
    try:
        for step in range(config.planning_steps):
            assign_tasks(state, grid, config.assigner, world_rng)
            obs = compute_observation(state, grid, config.w)
            pre_locs = [a.location for a in state.agents]
            pre_goals = [a.goals[0] for a in state.agents]
            sp_moves = [
                grid.move_between(row[0], row[1]) if len(row) > 1 else Move.WAIT
                for row in obs.paths
            ]

            t0 = time.perf_counter()
            candidates = policy.propose(state, obs, step)
            plan, result, order, cost = rh_pp_step(
                state, grid, candidates, config.w, config.h, config.beta, repair_rng
            )
            solve = time.perf_counter() - t0
            solve_times.append(solve)

            heat = None
            if step in heatmap_steps:
                heat = _mean_priority_ranks(policy, state, obs, step, heatmap_samples)

            completions = advance(state, plan, grid, config.h)
            terms = compute_reward(state, plan, result, config, grid)
            per_step.append(completions)
            if any(result.s):
                infeasible_steps += 1
            done = step == config.planning_steps - 1
            policy.feedback(terms, done)

            entry = EpisodeTraceEntry(
                step=step,
                chosen_order=list(order),
                order_cost=cost,
                per_agent=[
                    {
                        "loc": pre_locs[i],
                        "goal": pre_goals[i],
                        "move": plan.moves[i][0].name,
                        "sp_move": sp_moves[i].name,
                        "d": terms.d[i],
                        "c": terms.c[i],
                        "s": terms.s[i],
                    }
                    for i in range(config.n_agents)
                ],
                completions=completions,
                reward=terms.reward,
                solve_ms=solve * 1000.0,
                moves=[[mv.name for mv in row] for row in zip(*plan.moves)],
            )
            if heat is not None:
                entry["heatmap"] = heat
            trace.append(entry)
    except PolicyFailure:
        valid = False

    total = sum(per_step)
    metrics = EpisodeMetrics(
        total_throughput=total,
        tpa=total / config.n_agents,
        per_step_completions=per_step,
        mean_solve_s=sum(solve_times) / len(solve_times) if solve_times else 0.0,
        max_solve_s=max(solve_times) if solve_times else 0.0,
        infeasibility_rate=infeasible_steps / len(solve_times) if solve_times else 0.0,
        valid=valid,
    )
    assert not valid or total == sum(a.completed for a in state.agents)
    return metrics, trace


class PolicyFailure(RuntimeError):
    """Raised by a policy callback; aborts the episode with partial metrics."""


def _mean_priority_ranks(policy, state, obs, step, samples):
    n = len(state.agents)
    totals = [0.0] * n
    orders = policy.sample_for_heatmap(state, obs, step, samples)
    for order in orders:
        for rank, agent_id in enumerate(order):
            totals[agent_id] += rank
    m = len(orders)
    return {
        "samples": m,
        "mean_rank": [tot / m for tot in totals],
        "loc": [a.location for a in state.agents],
    }
