"""Lifelong MAPF lab: rolling-horizon prioritized planning with Top-K orders."""

from .grid import CellKind, GridMap, Move, manhattan, obstacle_density, parse_map, render
from .planner import ExecutionPlan, PlanResult, order_cost, plan_with_order, repair, rh_pp_step, select_best
from .sipp import (
    PathQuery,
    ReservationTable,
    TimedPath,
    build_reservations,
    distance_field,
    plan_sipp,
    shortest_path_static,
)
from .sim import SimConfig, WorldState, run_episode

__all__ = [
    "CellKind",
    "GridMap",
    "Move",
    "manhattan",
    "obstacle_density",
    "parse_map",
    "render",
    "PathQuery",
    "ReservationTable",
    "TimedPath",
    "build_reservations",
    "distance_field",
    "plan_sipp",
    "shortest_path_static",
    "ExecutionPlan",
    "PlanResult",
    "order_cost",
    "plan_with_order",
    "repair",
    "rh_pp_step",
    "select_best",
    "SimConfig",
    "WorldState",
    "run_episode",
]
