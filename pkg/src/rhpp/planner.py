"""Prioritized planning over a total priority order, Top-K selection, repair.

All agents are planned sequentially by plan_sipp under a given order; orders
are scored by mean path length plus an infeasibility penalty, the best of K
candidates is chosen, and the chosen plan is repaired into a conflict-free
h-step execution.
"""

from __future__ import annotations

from dataclasses import dataclass

from .grid import Move
from .sipp import PathQuery, ReservationTable, TimedPath, plan_sipp, shortest_path_static


def validate_order(order, n):
    if sorted(order) != list(range(n)):
        raise ValueError(f"not a permutation of 0..{n - 1}: {order}")


@dataclass
class PlanResult:
    paths: list  # indexed by agent id
    e: list  # per-agent path length in timesteps
    s: list  # per-agent infeasibility flag
    order: list


@dataclass
class ExecutionPlan:
    moves: list  # per agent, exactly h Moves
    end_locations: list


def plan_with_order(order, state, grid, w):
    """Plan every agent sequentially under the given priority order.

    Infeasible agents follow their static shortest path (s_i = 1); those
    substituted paths do not reserve cells for later agents.
    """
    n = len(state.agents)
    validate_order(order, n)
    table = ReservationTable(w)
    paths = [None] * n
    e = [0] * n
    s = [0] * n
    for agent_id in order:
        agent = state.agents[agent_id]
        query = PathQuery(start=agent.location, goals=list(agent.goals), horizon=w)
        path = plan_sipp(query, grid, table)
        if path is None:
            locs = shortest_path_static(grid, agent.location, list(agent.goals))
            path = TimedPath(agent=agent_id, steps=[(loc, t) for t, loc in enumerate(locs)])
            s[agent_id] = 1
        else:
            path.agent = agent_id
            table.reserve_path(path)
        paths[agent_id] = path
        e[agent_id] = path.arrival
    return PlanResult(paths=paths, e=e, s=s, order=list(order))


def order_cost(result, beta):
    n = len(result.e)
    return sum(ei + beta * si for ei, si in zip(result.e, result.s)) / n


def select_best(orders, state, grid, w, beta):
    """Evaluate every candidate order; return the minimum-cost (order, result).

    Ties break by candidate index; duplicate candidates are evaluated once.
    """
    if not orders:
        raise ValueError("empty candidate list")
    cache = {}
    best = None
    for idx, order in enumerate(orders):
        key = tuple(order)
        if key in cache:
            result = cache[key]
        else:
            result = plan_with_order(order, state, grid, w)
            cache[key] = result
        cost = order_cost(result, beta)
        if best is None or cost < best[0]:
            best = (cost, idx, order, result)
    return list(best[2]), best[3]


def _execution_conflict_free(paths, h):
    n = len(paths)
    prev = [p.location_at(0) for p in paths]
    if len(set(prev)) < n:
        return False
    for t in range(1, h + 1):
        cur = [p.location_at(t) for p in paths]
        if len(set(cur)) < n:
            return False
        for i in range(n):
            for j in range(i + 1, n):
                if cur[i] == prev[j] and cur[j] == prev[i] and cur[i] != cur[j]:
                    return False
        prev = cur
    return True


def repair(result, h, rng, grid):
    """Convert a (possibly conflicting) plan into a safe h-step execution.

    Conflict-free inputs pass through unchanged. Otherwise moves are granted
    per timestep in a shuffled order, iterating to a fixed point; denied
    agents wait and their remaining path shifts by one timestep.
    """
    paths = result.paths
    n = len(paths)
    if _execution_conflict_free(paths, h):
        moves = []
        for path in paths:
            seq = []
            for t in range(h):
                seq.append(grid.move_between(path.location_at(t), path.location_at(t + 1)))
            moves.append(seq)
        return ExecutionPlan(moves=moves, end_locations=[p.location_at(h) for p in paths])

    cur = [p.location_at(0) for p in paths]
    ptr = [0] * n
    moves = [[] for _ in range(n)]
    for _ in range(h):
        desired = []
        for i in range(n):
            steps = paths[i].steps
            desired.append(steps[ptr[i] + 1][0] if ptr[i] + 1 < len(steps) else cur[i])
        agenda = list(range(n))
        rng.shuffle(agenda)
        granted = [False] * n
        final = list(cur)
        for _pass in range(n):
            progressed = False
            for i in agenda:
                if granted[i]:
                    continue
                d = desired[i]
                if d == cur[i]:
                    granted[i] = True
                    progressed = True
                    continue
                blocked = False
                for j in range(n):
                    if j == i:
                        continue
                    if final[j] == d:
                        blocked = True
                        break
                    if granted[j] and cur[j] == d and final[j] == cur[i]:
                        blocked = True  # would swap with j's granted move
                        break
                if not blocked:
                    granted[i] = True
                    final[i] = d
                    progressed = True
            if not progressed:
                break
        for i in range(n):
            moves[i].append(grid.move_between(cur[i], final[i]))
            if granted[i] and ptr[i] + 1 < len(paths[i].steps):
                ptr[i] += 1
        cur = final
    return ExecutionPlan(moves=moves, end_locations=cur)


def rh_pp_step(state, grid, candidates, w, h, beta, rng):
    """One rolling-horizon planning step: select the best order, then repair."""
    order, result = select_best(candidates, state, grid, w, beta)
    plan = repair(result, h, rng, grid)
    return plan, result, order, order_cost(result, beta)
