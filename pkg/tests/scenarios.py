"""Hand-built instances shared by the planner and acceptance tests."""
import math

from mdpibt.grid import AgentModel, GridMap, KinState
from mdpibt.planner import PlannerConfig
from mdpibt.simulation import ProblemInstance

# Six agents A..F (ids 0..5, ranked alphabetically). A sweeps the top row
# through B, D and E; B dodges down through C's cell and ends on A's start;
# C heads into the one-cell pocket where F sits; D steps into C's start.
WALKTHROUGH_ROWS = [
    "@@@@@@@",
    "@.....@",
    "@...@@@",
    "@@.@@@@",
    "@@.@@@@",
]
WALKTHROUGH_STARTS = [(1, 1), (2, 1), (2, 2), (3, 1), (4, 1), (2, 4)]
WALKTHROUGH_GOALS = [(4, 1), (1, 1), (2, 4), (2, 2), (5, 1), (2, 4)]
A, B, C, D, E, F = range(6)


def walkthrough_instance():
    g = GridMap.from_rows(WALKTHROUGH_ROWS, "walkthrough")
    return ProblemInstance(g, AgentModel.pm(), [KinState(*s) for s in WALKTHROUGH_STARTS],
                           list(WALKTHROUGH_GOALS))


def walkthrough_config():
    # R=1 stops C from re-targeting F (F.r < R fails) once F has tried once
    return PlannerConfig(w=3, h=1, R=1, C=math.inf, m="epibt", queue="priority")


def corridor_map():
    """12x12: two 4-wide rooms joined by a 3-wide, 4-long corridor (rows 4..6)."""
    rows = ["".join("." if (x < 4 or x >= 8 or 4 <= y <= 6) else "@" for x in range(12))
            for y in range(12)]
    return GridMap.from_rows(rows, "corridor-12")


CORRIDOR_STARTS = [(0, 0), (1, 0), (0, 1), (1, 1), (0, 2), (1, 4), (0, 8), (1, 9), (0, 9), (1, 6)]


def corridor_instance(seed, T_max=100):
    """A 3x3 agent must cross the corridor, blocked by three parked 1x1 agents.

    Any footprint overlapping the parked column overlaps all three agents
    at once, so a cap of one collider never admits a crossing path.
    """
    sx, sy = CORRIDOR_STARTS[seed % len(CORRIDOR_STARTS)]
    models = [AgentModel.pmla(3)] + [AgentModel.pm()] * 3
    starts = [KinState(sx, sy)] + [KinState(6, y) for y in (4, 5, 6)]
    goals = [(9, 9)] + [(6, y) for y in (4, 5, 6)]
    return ProblemInstance(corridor_map(), models, starts, goals, seed=seed, T_max=T_max)


def reduced_corridor_instance(T_max=100):
    """Same structure at 6x6: a 2x2 agent and two parked 1x1 agents in a 2-wide corridor."""
    rows = ["".join("." if (x < 2 or x >= 4 or 2 <= y <= 3) else "@" for x in range(6))
            for y in range(6)]
    g = GridMap.from_rows(rows, "corridor-6")
    models = [AgentModel.pmla(2), AgentModel.pm(), AgentModel.pm()]
    starts = [KinState(0, 0), KinState(3, 2), KinState(3, 3)]
    goals = [(4, 4), (3, 2), (3, 3)]
    return ProblemInstance(g, models, starts, goals, T_max=T_max)


def dead_end_instance(n=6, T_max=30):
    """n agents filling a 1-wide dead-end corridor of length n.

    The agent at the mouth wants the deepest cell; the rest are parked on
    their goals. Every push runs the whole line into the dead end, the
    worst case for recursive backtracking. Unsolvable by construction.
    """
    width = n + 3
    rows = ["@" * n + "..." for _ in range(5)]
    rows[2] = "." * width
    g = GridMap.from_rows(rows, "dead-end")
    starts = [KinState(n - 1 - i, 2) for i in range(n)]
    goals = [(0, 2)] + [(n - 1 - i, 2) for i in range(1, n)]
    return ProblemInstance(g, AgentModel.pm(), starts, goals, T_max=T_max)
