"""Safe-interval path planning against timed reservations.

The reservation table records where higher-priority agents are within the
planning horizon w; plan_sipp searches (location, safe-interval, goal-index)
states for a minimum-arrival-time path that is conflict-free for t < w and
continues unconstrained beyond the horizon.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

INF = float("inf")


class UnreachableGoalError(ValueError):
    """First goal cannot be reached on the static map."""


class ReservationConflictError(ValueError):
    """Input paths passed to build_reservations collide with each other."""


@dataclass
class TimedPath:
    agent: int
    steps: list  # [(location, timestep)], timesteps consecutive from epoch 0
    goal_visits: list = field(default_factory=list)

    @property
    def locations(self):
        return [loc for loc, _ in self.steps]

    @property
    def arrival(self):
        return self.steps[-1][1]

    def location_at(self, t):
        """Location at timestep t; agents park on their final cell."""
        first = self.steps[0][1]
        idx = t - first
        if idx < 0:
            raise ValueError("timestep precedes path start")
        if idx >= len(self.steps):
            return self.steps[-1][0]
        return self.steps[idx][0]


@dataclass
class PathQuery:
    start: int
    goals: list
    horizon: int  # w


class ReservationTable:
    """Vertex and directed-edge occupancy for timesteps in [0, w)."""

    def __init__(self, horizon):
        self.horizon = horizon
        self.vertex = {}  # loc -> set of reserved timesteps
        self.edges = set()  # (from, to, depart_t)
        self._intervals = {}

    def reserve_path(self, path):
        w = self.horizon
        locs = path.locations
        for idx, (loc, t) in enumerate(path.steps):
            if t >= w:
                break
            self._reserve_vertex(loc, t)
            if idx > 0:
                prev = locs[idx - 1]
                key = (prev, loc, t - 1)
                if (loc, prev, t - 1) in self.edges:
                    raise ReservationConflictError(
                        f"edge swap at t={t - 1} between {prev} and {loc}"
                    )
                self.edges.add(key)
        # A stopped agent blocks its final cell through the horizon.
        final, arrival = path.steps[-1]
        for t in range(max(arrival + 1, 0), w):
            self._reserve_vertex(final, t)
        self._intervals.clear()

    def _reserve_vertex(self, loc, t):
        slot = self.vertex.setdefault(loc, set())
        if t in slot:
            raise ReservationConflictError(f"vertex {loc} doubly reserved at t={t}")
        slot.add(t)

    def is_vertex_reserved(self, loc, t):
        if t >= self.horizon:
            return False
        slot = self.vertex.get(loc)
        return slot is not None and t in slot

    def is_swap_blocked(self, frm, to, depart):
        """True when (to -> frm) is reserved at the same departure time."""
        if depart >= self.horizon:
            return False
        return (to, frm, depart) in self.edges

    def safe_intervals(self, loc):
        """Disjoint sorted (lo, hi) free intervals; the last extends to INF."""
        cached = self._intervals.get(loc)
        if cached is not None:
            return cached
        reserved = self.vertex.get(loc)
        if not reserved:
            out = [(0, INF)]
        else:
            out = []
            lo = 0
            for t in sorted(reserved):
                if t > lo:
                    out.append((lo, t - 1))
                lo = t + 1
            out.append((lo, INF))  # everything from the last reservation on is free
        self._intervals[loc] = out
        return out


def build_reservations(paths, w):
    table = ReservationTable(w)
    for path in paths:
        table.reserve_path(path)
    return table


def shortest_path_static(grid, start, goals):
    """Concatenated agent-ignoring shortest paths visiting goals in order.

    Ties break by descending along each goal's BFS distance field in the
    canonical neighbor order (Up, Down, Left, Right).
    """
    if not grid.is_traversable(start):
        raise UnreachableGoalError(f"start {start} is not traversable")
    path = [start]
    cur = start
    for goal in goals:
        field_ = grid.distance_field(goal)
        if field_[cur] == INF:
            raise UnreachableGoalError(f"goal {goal} unreachable from {cur}")
        while cur != goal:
            want = field_[cur] - 1
            for _, n in grid._nbrs[cur]:
                if field_[n] == want:
                    cur = n
                    break
            path.append(cur)
    return path


def distance_field(grid, goal):
    return grid.distance_field(goal)


def plan_sipp(query, grid, reservations):
    """Minimum-arrival-time path through the goal sequence.

    Returns a TimedPath, or None when no conflict-free prefix exists within
    the horizon (dynamic infeasibility). Beyond t >= w the continuation is
    individually optimal and ignores reservations. Searches are capped at
    w + 4*(W+H) timesteps; goals not reached by then are truncated.
    """
    start, goals, w = query.start, query.goals, query.horizon
    if not goals:
        raise ValueError("goal sequence must be non-empty")
    if not grid.is_traversable(start):
        raise UnreachableGoalError(f"start {start} is not traversable")
    if reservations.is_vertex_reserved(start, 0):
        raise ValueError("start is vertex-reserved at t=0")

    fields = [grid.distance_field(g) for g in goals]
    if fields[0][start] == INF:
        raise UnreachableGoalError(f"first goal {goals[0]} statically unreachable")

    # suffix[j] = static distance to finish goals j.. starting at goals[j]
    n_goals = len(goals)
    suffix = [0] * (n_goals + 1)
    for j in range(n_goals - 1, -1, -1):
        leg = fields[j + 1][goals[j]] if j + 1 < n_goals else 0
        suffix[j] = leg + suffix[j + 1]

    def heuristic(loc, gidx):
        if gidx >= n_goals:
            return 0
        return fields[gidx][loc] + suffix[gidx]

    intervals = reservations.safe_intervals
    swap_blocked = reservations.is_swap_blocked
    nbrs = grid._nbrs

    def advance_goal(loc, gidx, unbounded):
        # The final goal only counts when the agent can park there through
        # the horizon, i.e. it is reached in the unbounded safe interval.
        while gidx < n_goals and loc == goals[gidx]:
            if gidx == n_goals - 1 and not unbounded:
                break
            gidx += 1
        return gidx

    t_cap = w + 4 * (grid.width + grid.height)

    def interval_index(loc, t):
        for idx, (lo, hi) in enumerate(intervals(loc)):
            if lo <= t <= hi:
                return idx
        return None

    start_ivl = interval_index(start, 0)
    if start_ivl is None:  # pre-condition violated defensively
        return None
    start_unbounded = start_ivl == len(intervals(start)) - 1
    start_gidx = advance_goal(start, 0, start_unbounded)

    # state: (loc, interval index, goal index) -> best (arrival, waits)
    start_state = (start, start_ivl, start_gidx)
    best = {start_state: (0, 0)}
    parents = {start_state: None}
    h0 = heuristic(start, start_gidx)
    if h0 == INF:
        h0 = 0  # later goal statically unreachable: search will truncate
    open_heap = [(h0, 0, start, 0, start_state)]
    goal_state = None
    # truncation candidates: only states an agent can safely park in
    reached_by_gidx = {}
    if start_unbounded:
        reached_by_gidx[start_gidx] = (0, start_state)

    while open_heap:
        f, waits, _, arrival, state = heapq.heappop(open_heap)
        loc, ivl_idx, gidx = state
        cur = best.get(state)
        if cur is None or (arrival, waits) != cur:
            continue
        if gidx == n_goals:
            goal_state = state
            break
        lo, hi = intervals(loc)[ivl_idx]
        for _, nxt in nbrs[loc]:
            for n_idx, (nlo, nhi) in enumerate(intervals(nxt)):
                # earliest arrival into this interval of nxt
                t_arr = max(arrival + 1, nlo)
                if t_arr > nhi:
                    continue
                depart = t_arr - 1
                if depart > hi:
                    break  # later intervals start even further out
                # scan past sparse swap blocks (all lie below the horizon)
                while depart <= hi and t_arr <= nhi and swap_blocked(loc, nxt, depart):
                    depart += 1
                    t_arr += 1
                if depart > hi or t_arr > nhi or t_arr > t_cap:
                    continue
                n_waits = waits + (depart - arrival)
                n_unbounded = n_idx == len(intervals(nxt)) - 1
                n_gidx = advance_goal(nxt, gidx, n_unbounded)
                n_state = (nxt, n_idx, n_gidx)
                known = best.get(n_state)
                if known is not None and known <= (t_arr, n_waits):
                    continue
                h = heuristic(nxt, n_gidx)
                if h == INF:
                    h = 0
                best[n_state] = (t_arr, n_waits)
                parents[n_state] = (state, depart)
                heapq.heappush(open_heap, (t_arr + h, n_waits, nxt, t_arr, n_state))
                if n_unbounded:
                    seen = reached_by_gidx.get(n_gidx)
                    if seen is None or (t_arr, n_state) < seen:
                        reached_by_gidx[n_gidx] = (t_arr, n_state)

    if goal_state is None:
        if not reached_by_gidx:
            return None  # nowhere safe to park: dynamically infeasible
        deepest = max(reached_by_gidx)
        if deepest == 0 and start_gidx == 0:
            return None  # no goal progress possible: dynamically infeasible
        goal_state = reached_by_gidx[deepest][1]
        if goal_state == start_state and deepest == start_gidx and start_gidx == 0:
            return None

    return _reconstruct(query, goals, goal_state, best, parents)


def _reconstruct(query, goals, goal_state, best, parents):
    chain = []
    state = goal_state
    while state is not None:
        entry = parents[state]
        arrival = best[state][0]
        chain.append((state[0], arrival))
        state = entry[0] if entry else None
    chain.reverse()

    steps = []
    t = 0
    prev_loc = chain[0][0]
    steps.append((prev_loc, 0))
    for loc, arrival in chain[1:]:
        while t + 1 < arrival:  # waits at prev_loc before departing
            t += 1
            steps.append((prev_loc, t))
        t += 1
        steps.append((loc, t))
        prev_loc = loc

    visits = []
    gidx = 0
    for loc, tt in steps:
        while gidx < len(goals) and loc == goals[gidx]:
            visits.append(tt)
            gidx += 1
    return TimedPath(agent=-1, steps=steps, goal_visits=visits)
