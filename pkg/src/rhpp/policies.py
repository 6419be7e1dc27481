"""Non-learned order-proposal policies: uniform random Top-K and distance query."""

from __future__ import annotations

import random

from .sipp import shortest_path_static


def random_orders(n, k, rng):
    """K independent uniform permutations of 0..n-1."""
    out = []
    for _ in range(k):
        order = list(range(n))
        rng.shuffle(order)
        out.append(order)
    return out


def dq_order(state, grid):
    """Agents sorted by descending static shortest-path length, id tie-break."""
    lengths = {}
    for agent in state.agents:
        path = shortest_path_static(grid, agent.location, list(agent.goals))
        lengths[agent.id] = len(path) - 1
    return sorted(lengths, key=lambda i: (-lengths[i], i))


class OrderPolicy:
    """Episode-scoped order proposal callback used by run_episode."""

    def reset(self, config, grid):
        raise NotImplementedError

    def propose(self, state, obs, step):
        raise NotImplementedError

    def feedback(self, terms, done):
        pass

    def sample_for_heatmap(self, state, obs, step, samples):
        raise NotImplementedError


class RandomOrderPolicy(OrderPolicy):
    def __init__(self):
        self.k = 1
        self.rng = random.Random()
        self.heat_rng = random.Random()

    def reset(self, config, grid):
        self.k = config.k
        self.rng = random.Random(f"{config.seed}:policy")
        self.heat_rng = random.Random(f"{config.seed}:heatmap")

    def propose(self, state, obs, step):
        return random_orders(len(state.agents), self.k, self.rng)

    def sample_for_heatmap(self, state, obs, step, samples):
        return random_orders(len(state.agents), samples, self.heat_rng)


class DistanceQueryPolicy(OrderPolicy):
    """DQ ordering; emits K identical copies so the Top-K interface is uniform."""

    def __init__(self):
        self.k = 1
        self.grid = None

    def reset(self, config, grid):
        self.k = config.k
        self.grid = grid

    def propose(self, state, obs, step):
        order = dq_order(state, self.grid)
        return [list(order) for _ in range(self.k)]

    def sample_for_heatmap(self, state, obs, step, samples):
        order = dq_order(state, self.grid)
        return [list(order) for _ in range(samples)]


def make_policy(kind):
    if kind == "random":
        return RandomOrderPolicy()
    if kind == "dq":
        return DistanceQueryPolicy()
    raise ValueError(f"unknown policy {kind!r}")
