"""Independent checks: a nested-loop collision validator, metrics, and a
brute-force joint-state optimal solver for tiny instances.

Nothing here reuses the planner's state spaces or occupancy index; the
geometry is re-derived from the map and the agent models directly.
"""
from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import AgentModel, GridMap, KinState

_STEP = {0: (0, -1), 1: (1, 0), 2: (0, 1), 3: (-1, 0)}


@dataclass(frozen=True)
class ConflictReport:
    kind: str  # vertex | edge | state | move
    agents: tuple
    t: int
    cells: tuple

    def __str__(self) -> str:
        return f"{self.kind} conflict between {self.agents} at t={self.t} on {list(self.cells)}"


def _side(model: AgentModel) -> int:
    return model.size if model.kind == "pmla" else 1


def _cells(s, model: AgentModel) -> set:
    k = _side(model)
    out = set()
    for dx in range(k):
        for dy in range(k):
            out.add((s[0] + dx, s[1] + dy))
    return out


def _state_ok(s, model: AgentModel, grid: GridMap) -> bool:
    if model.kind == "rm" and (len(s) < 3 or s[2] not in _STEP):
        return False
    for x, y in _cells(s, model):
        if x < 0 or y < 0 or x >= grid.width or y >= grid.height:
            return False
        if grid.blocked[y][x]:
            return False
    return True


def _move_ok(a, b, model: AgentModel) -> bool:
    if model.kind == "rm":
        if (a[0], a[1]) == (b[0], b[1]):
            return b[2] == a[2] or (b[2] - a[2]) % 4 in (1, 3)
        dx, dy = _STEP[a[2]]
        return b[2] == a[2] and (b[0] - a[0], b[1] - a[1]) == (dx, dy)
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) <= 1


def _padded(paths, T):
    return [list(p) + [p[-1]] * (T - len(p)) for p in paths]


def validate(paths: Sequence[Sequence], models, grid: GridMap) -> ConflictReport | None:
    """First conflict in ``paths`` (lists of (x, y[, heading]) states), or None.

    Checks every state is valid, every transition is a legal action, and
    every agent pair for vertex overlap and generalized swaps. Shorter paths
    wait at their final state.
    """
    if isinstance(models, AgentModel):
        models = [models] * len(paths)
    if not paths:
        return None
    T = max(len(p) for p in paths)
    paths = _padded(paths, T)
    for i, p in enumerate(paths):
        for t, s in enumerate(p):
            if not _state_ok(s, models[i], grid):
                return ConflictReport("state", (i,), t, tuple(sorted(_cells(s, models[i]))))
            if t > 0 and not _move_ok(p[t - 1], s, models[i]):
                return ConflictReport("move", (i,), t, ((p[t - 1][0], p[t - 1][1]), (s[0], s[1])))
    fps = [[_cells(s, models[i]) for s in p] for i, p in enumerate(paths)]
    near = _near_pairs(paths, models)
    for t in range(T):
        for i, j in near:
            common = fps[i][t] & fps[j][t]
            if common:
                return ConflictReport("vertex", (i, j), t, tuple(sorted(common)))
            if t + 1 < T:
                x1 = fps[i][t] & fps[j][t + 1]
                x2 = fps[j][t] & fps[i][t + 1]
                if x1 and x2:
                    return ConflictReport("edge", (i, j), t, tuple(sorted(x1 | x2)))
    return None


def _near_pairs(paths, models) -> list[tuple[int, int]]:
    """Agent pairs, in (i, j) order, whose squares ever come within one cell of each other.

    Pairs further apart at every timestep cannot overlap now or one step
    later, so only these need the exact set checks.
    """
    xy = np.array([[(s[0], s[1]) for s in p] for p in paths], dtype=np.int64)
    side = np.array([_side(m) for m in models], dtype=np.int64)
    n = len(paths)
    out = []
    for i in range(n - 1):
        rest = xy[i + 1:]
        dx = rest[:, :, 0] - xy[i, :, 0]
        dy = rest[:, :, 1] - xy[i, :, 1]
        # squares [x, x+k) grown by one cell in every direction
        reach_x = np.where(dx >= 0, dx <= side[i], -dx <= side[i + 1:, None])
        reach_y = np.where(dy >= 0, dy <= side[i], -dy <= side[i + 1:, None])
        hit = (reach_x & reach_y).any(axis=1)
        out.extend((i, i + 1 + int(j)) for j in np.flatnonzero(hit))
    return out


def _neighbours(s, model: AgentModel, grid: GridMap):
    if model.kind == "rm":
        x, y, h = s
        dx, dy = _STEP[h]
        cand = [(x, y, h), (x + dx, y + dy, h), (x, y, (h - 1) % 4), (x, y, (h + 1) % 4)]
    else:
        x, y = s[0], s[1]
        cand = [(x, y), (x, y - 1), (x + 1, y), (x, y + 1), (x - 1, y)]
    return [c for c in cand if _state_ok(c, model, grid)]


def _norm(s, model):
    return (s[0], s[1], s[2]) if model.kind == "rm" else (s[0], s[1])


def shortest_distance(start, goal, model: AgentModel, grid: GridMap) -> float:
    """Plain BFS from ``start`` to any state on the ``goal`` cell."""
    start = _norm(start, model)
    if (start[0], start[1]) == tuple(goal):
        return 0
    seen = {start}
    frontier = deque([(start, 0)])
    while frontier:
        s, d = frontier.popleft()
        for n in _neighbours(s, model, grid):
            if n in seen:
                continue
            if (n[0], n[1]) == tuple(goal):
                return d + 1
            seen.add(n)
            frontier.append((n, d + 1))
    return float("inf")


def _at(s, goal) -> bool:
    return s[0] == goal[0] and s[1] == goal[1]


def sum_of_cost(paths, goals) -> int:
    """Each action costs 1 unless the agent stays put on its goal."""
    total = 0
    for p, g in zip(paths, goals):
        for t in range(1, len(p)):
            if not (tuple(p[t]) == tuple(p[t - 1]) and _at(p[t], g)):
                total += 1
    return total


def makespan(paths, goals) -> int:
    """First timestep after which every agent stays on its goal."""
    last = 0
    for p, g in zip(paths, goals):
        for t in range(len(p) - 1, -1, -1):
            if not _at(p[t], g):
                last = max(last, t + 1)
                break
    return last


def metrics(paths, goals, models, grid: GridMap, starts=None) -> dict:
    """Cost, makespan, their lower bounds and suboptimality ratios of a solved run."""
    if isinstance(models, AgentModel):
        models = [models] * len(paths)
    for p, g in zip(paths, goals):
        if not _at(p[-1], g):
            raise ValueError("metrics need a solved run: some agent ends off its goal")
    starts = starts or [p[0] for p in paths]
    lbs = [shortest_distance(s, g, m, grid) for s, g, m in zip(starts, goals, models)]
    soc, mk = sum_of_cost(paths, goals), makespan(paths, goals)
    soc_lb, mk_lb = sum(lbs), max(lbs, default=0)
    return {
        "soc": soc, "makespan": mk, "soc_lb": soc_lb, "makespan_lb": mk_lb,
        "soc_ratio": soc / soc_lb if soc_lb else 1.0,
        "makespan_ratio": mk / mk_lb if mk_lb else 1.0,
    }


def throughput(goal_events: int, T: int) -> float:
    return goal_events / T if T else 0.0


class OracleRefused(RuntimeError):
    pass


def joint_optimal_oracle(grid: GridMap, models, starts, goals, max_states: int = 2_000_000) -> float:
    """Minimum sum-of-cost by uniform-cost search over joint states.

    Same collision and cost rules as :func:`validate` and :func:`sum_of_cost`.
    Refuses (``OracleRefused``) when the joint state space could exceed
    ``max_states``. Returns ``inf`` when unsolvable.
    """
    n = len(starts)
    if isinstance(models, AgentModel):
        models = [models] * n
    if n > 3:
        raise OracleRefused("joint oracle supports at most 3 agents")
    sizes = []
    for m in models:
        per = sum(1 for y in range(grid.height) for x in range(grid.width)
                  if _state_ok((x, y, 0), m, grid))
        sizes.append(per * (4 if m.kind == "rm" else 1))
    bound = 1
    for s in sizes:
        bound *= s
    if bound > max_states:
        raise OracleRefused(f"joint state bound {bound} exceeds {max_states}")
    start = tuple(_norm(s, m) for s, m in zip(starts, models))
    goals = [tuple(g) for g in goals]

    def done(js):
        return all(_at(s, g) for s, g in zip(js, goals))

    best = {start: 0}
    tie = itertools.count()
    heap = [(0, next(tie), start)]
    while heap:
        cost, _, js = heapq.heappop(heap)
        if cost > best.get(js, float("inf")):
            continue
        if done(js):
            return cost
        options = [_neighbours(s, m, grid) for s, m in zip(js, models)]
        cur_fp = [_cells(s, m) for s, m in zip(js, models)]
        for nxt in itertools.product(*options):
            nxt_fp = [_cells(s, m) for s, m in zip(nxt, models)]
            ok = True
            for i in range(n):
                for j in range(i + 1, n):
                    if nxt_fp[i] & nxt_fp[j] or (cur_fp[i] & nxt_fp[j] and cur_fp[j] & nxt_fp[i]):
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                continue
            step = sum(0 if (a == b and _at(b, g)) else 1 for a, b, g in zip(js, nxt, goals))
            c = cost + step
            if c < best.get(nxt, float("inf")):
                best[nxt] = c
                heapq.heappush(heap, (c, next(tie), nxt))
    return float("inf")
