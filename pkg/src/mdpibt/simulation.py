"""One-shot and lifelong drivers around :func:`~mdpibt.planner.plan_epoch`."""
from __future__ import annotations

import json
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import E, AgentModel, GridMap, KinState, StateSpace, state_space
from .paths import footprints_collide, footprints_of
from .planner import AgentRecord, PlannerConfig, PlannerFault, PlannerTimeout, plan_epoch


@dataclass
class ProblemInstance:
    grid: GridMap
    models: list[AgentModel]
    starts: list[KinState]
    goals: list[tuple[int, int]]
    mode: str = "oneshot"
    seed: int = 0
    T_max: int = 1000
    epoch_budget_ms: float | None = None
    name: str = ""

    def __post_init__(self):
        if isinstance(self.models, AgentModel):
            self.models = [self.models] * len(self.starts)
        if not (len(self.models) == len(self.starts) == len(self.goals)):
            raise ValueError("models, starts and goals must have equal length")
        if self.mode not in ("oneshot", "lifelong"):
            raise ValueError(f"unknown mode {self.mode!r}")
        spaces = self.spaces()
        ids = [sp.id_of(s) for sp, s in zip(spaces, self.starts)]
        for sp, g in zip(spaces, self.goals):
            sp.goal_states(g)
        fps = [sp.fp[i] for sp, i in zip(spaces, ids)]
        seen: dict[int, int] = {}
        for a, fp in enumerate(fps):
            for c in fp:
                if c in seen:
                    raise ValueError(f"starts of agents {seen[c]} and {a} overlap")
                seen[c] = a

    @property
    def n_agents(self) -> int:
        return len(self.starts)

    def spaces(self) -> list[StateSpace]:
        return [state_space(self.grid, m) for m in self.models]

    def describe(self) -> dict:
        kinds = Counter(str(m) for m in self.models)
        return {"map": self.grid.name, "width": self.grid.width, "height": self.grid.height,
                "n_agents": self.n_agents, "models": dict(kinds), "mode": self.mode,
                "seed": self.seed, "T_max": self.T_max, "name": self.name}


@dataclass
class RunResult:
    config: dict
    instance: dict
    status: str = "running"
    success: bool = False
    soc: int | None = None
    makespan: int | None = None
    throughput: float | None = None
    goals_reached: int = 0
    epochs: int = 0
    epoch_runtimes_ms: list = field(default_factory=list)
    backup_epochs: int = 0
    dep_samples: list = field(default_factory=list)
    carry_violations: int = 0
    fault: str | None = None
    paths: list = field(default_factory=list)
    spaces: list = field(default_factory=list, repr=False)

    @property
    def dep_histogram(self) -> dict[int, int]:
        return dependency_stats(self.dep_samples)["histogram"]

    def kin_paths(self) -> list[list[KinState]]:
        return [sp.to_states(p) for sp, p in zip(self.spaces, self.paths)]

    def to_json(self, include_paths: bool = False) -> dict:
        out = {
            "config": self.config, "instance": self.instance, "status": self.status,
            "success": self.success, "soc": self.soc, "makespan": self.makespan,
            "throughput": self.throughput, "goals_reached": self.goals_reached,
            "epochs": self.epochs, "epoch_runtimes_ms": self.epoch_runtimes_ms,
            "backup_epochs": self.backup_epochs,
            "dep_histogram": {str(k): v for k, v in self.dep_histogram.items()},
            "carry_violations": self.carry_violations, "fault": self.fault,
        }
        if include_paths:
            out["paths"] = [[list(s) for s in p] for p in self.kin_paths()]
        return out

    def dumps(self, **kw) -> str:
        return json.dumps(self.to_json(**kw), sort_keys=True)


def dependency_stats(samples: Sequence[int]) -> dict:
    """Mean and histogram of colliding-set sizes at successful acceptances."""
    hist = dict(sorted(Counter(int(s) for s in samples).items()))
    mean = float(np.mean(samples)) if len(samples) else 0.0
    return {"count": len(samples), "mean": mean, "histogram": hist}


def make_agents(instance: ProblemInstance, w: int) -> list[AgentRecord]:
    agents = []
    for i, (sp, s, g) in enumerate(zip(instance.spaces(), instance.starts, instance.goals)):
        a = AgentRecord(i, sp, sp.id_of(s), g)
        a.tau = a.wait_path(w)
        agents.append(a)
    return agents


def commit_and_carry(agents: Sequence[AgentRecord], config: PlannerConfig) -> list[tuple]:
    """Advance every agent by ``h`` steps along its safe path.

    Returns the committed states (offsets 1..h) per agent and installs the
    next initial safe path: the unexecuted suffix padded with ``h`` waits.
    """
    h = config.h
    committed = []
    for a in agents:
        tau = a.tau
        committed.append(tau[1:h + 1])
        a.state = tau[h]
        a.tau = tau[h:] + (tau[-1],) * h
    return committed


def assign_next_goal(space: StateSpace, current_cell: tuple[int, int],
                     rng: np.random.Generator) -> tuple[int, int]:
    """Uniform random valid cell for ``space``'s model, different from ``current_cell``."""
    anchors = np.flatnonzero(space._anchor_ok)
    W = space.grid.width
    cur = current_cell[1] * W + current_cell[0]
    if anchors.size == 0 or (anchors.size == 1 and anchors[0] == cur):
        raise ValueError("no valid goal cell distinct from the current one")
    while True:
        c = int(anchors[rng.integers(anchors.size)])
        if c != cur:
            return c % W, c // W


def safe_paths_collision_free(agents: Sequence[AgentRecord]) -> bool:
    fps = [footprints_of(a.space, a.tau) for a in agents]
    cells: dict[int, list[int]] = {}
    for i, f in enumerate(fps):
        for c in set().union(*f):
            cells.setdefault(c, []).append(i)
    pairs = set()
    for owners in cells.values():
        for x in range(len(owners)):
            for y in range(x + 1, len(owners)):
                pairs.add((owners[x], owners[y]))
    return not any(footprints_collide(fps[i], fps[j]) for i, j in pairs)


def _step_cost(space: StateSpace, prev: int, nxt: int, goal) -> int:
    return 0 if prev == nxt and space.at_goal(nxt, goal) else 1


class _Driver:
    def __init__(self, instance: ProblemInstance, config: PlannerConfig, trace: list | None,
                 check_carryover: bool, check_invariants: bool,
                 on_epoch: Callable | None):
        self.instance = instance
        self.config = config
        self.trace = trace
        self.check_carryover = check_carryover
        self.check_invariants = check_invariants
        self.on_epoch = on_epoch
        self.agents = make_agents(instance, config.w)
        self.result = RunResult(config.as_dict(), instance.describe(),
                                paths=[[a.state] for a in self.agents],
                                spaces=[a.space for a in self.agents])

    def epoch(self) -> list[tuple] | None:
        """Plan and commit one window; returns committed states or None on timeout."""
        cfg, res = self.config, self.result
        if self.check_carryover and not safe_paths_collision_free(self.agents):
            res.carry_violations += 1
        budget = self.instance.epoch_budget_ms
        t0 = time.perf_counter()
        deadline = t0 + budget / 1000.0 if budget else None
        try:
            out = plan_epoch(self.agents, cfg, trace=self.trace, deadline=deadline,
                             check_invariants=self.check_invariants)
        except PlannerTimeout:
            res.epoch_runtimes_ms.append((time.perf_counter() - t0) * 1000.0)
            return None
        res.epoch_runtimes_ms.append(out.runtime_s * 1000.0)
        res.dep_samples.extend(out.samples)
        res.epochs += 1
        committed = commit_and_carry(self.agents, cfg)
        if self.on_epoch is not None:
            self.on_epoch(self, committed)
        return committed

    def all_wait(self) -> list[tuple]:
        h, w = self.config.h, self.config.w
        committed = []
        for a in self.agents:
            committed.append((a.state,) * h)
            a.tau = a.wait_path(w)
        self.result.backup_epochs += 1
        self.result.epochs += 1
        return committed


def run_oneshot(instance: ProblemInstance, config: PlannerConfig, *, trace: list | None = None,
                check_carryover: bool = False, check_invariants: bool = False,
                on_epoch: Callable | None = None) -> RunResult:
    """Plan/commit until every agent rests on its goal at an epoch boundary or T_max passes."""
    drv = _Driver(instance, config, trace, check_carryover, check_invariants, on_epoch)
    agents, res = drv.agents, drv.result
    t = 0
    soc = 0
    while True:
        if all(a.space.at_goal(a.state, a.goal) for a in agents):
            res.status, res.success = "success", True
            break
        if t >= instance.T_max:
            res.status = "failed"
            break
        try:
            committed = drv.epoch()
        except PlannerFault as exc:
            res.status, res.fault = "fault", str(exc)
            break
        if committed is None:
            res.status = "failed-timeout"
            break
        for a, steps in zip(agents, committed):
            path = res.paths[a.id]
            for s in steps:
                soc += _step_cost(a.space, path[-1], s, a.goal)
                path.append(s)
                a.elapsed = 0 if a.space.at_goal(s, a.goal) else a.elapsed + 1
        t += config.h
    res.soc = soc
    if res.success:
        res.makespan = _makespan(agents, res.paths)
    return res


def _makespan(agents, paths) -> int:
    last = 0
    for a, p in zip(agents, paths):
        for t in range(len(p) - 1, -1, -1):
            if not a.space.at_goal(p[t], a.goal):
                last = max(last, t + 1)
                break
    return last


def run_lifelong(instance: ProblemInstance, config: PlannerConfig, T: int | None = None, *,
                 trace: list | None = None, check_carryover: bool = False,
                 check_invariants: bool = False, on_epoch: Callable | None = None,
                 keep_paths: bool = True) -> RunResult:
    """Simulate ``T`` timesteps, assigning a fresh goal on every arrival."""
    T = instance.T_max if T is None else T
    drv = _Driver(instance, config, trace, check_carryover, check_invariants, on_epoch)
    agents, res = drv.agents, drv.result
    rng = np.random.default_rng(instance.seed)
    goals = 0
    t = 0
    while t < T:
        try:
            committed = drv.epoch()
        except PlannerFault as exc:
            res.status, res.fault = "fault", str(exc)
            break
        if committed is None:
            committed = drv.all_wait()
        steps_here = min(config.h, T - t)
        for a, steps in zip(agents, committed):
            path = res.paths[a.id]
            for s in steps[:steps_here]:
                if keep_paths:
                    path.append(s)
                if a.space.at_goal(s, a.goal):
                    goals += 1
                    a.elapsed = 0
                    st = a.space.states[s]
                    a.goal = assign_next_goal(a.space, (st.x, st.y), rng)
                    a.dist = a.space.distance(a.goal)
                else:
                    a.elapsed += 1
            if not keep_paths:
                path[:] = [steps[steps_here - 1]]
        t += steps_here
    if res.status == "running":
        res.status = "completed"
        res.success = True
    res.goals_reached = goals
    res.throughput = goals / T if T else 0.0
    return res


def random_instance(grid: GridMap, n_agents: int, seed: int, models=None,
                    mode: str = "oneshot", T_max: int = 1000, heading: int = E,
                    epoch_budget_ms: float | None = None) -> ProblemInstance:
    """Seeded starts and goals; starts pairwise disjoint, goals pairwise disjoint.

    ``models`` is one AgentModel or a per-agent list. Larger agents are
    placed first so that small ones fill the remaining space.
    """
    if models is None:
        models = AgentModel.pm()
    if isinstance(models, AgentModel):
        models = [models] * n_agents
    if len(models) != n_agents:
        raise ValueError("need one model per agent")
    rng = np.random.default_rng(seed)
    order = sorted(range(n_agents), key=lambda i: -(models[i].size))

    def place():
        # one shuffled anchor list per model, consumed front to back: an anchor
        # rejected once stays rejected because occupancy only grows
        taken = np.zeros(grid.n_cells, dtype=bool)
        out = [None] * n_agents
        queues: dict = {}
        for i in order:
            sp = state_space(grid, models[i])
            if models[i] not in queues:
                queues[models[i]] = [rng.permutation(np.flatnonzero(sp._anchor_ok)), 0]
            anchors, pos = queues[models[i]]
            h = heading if sp.model.rotates else None
            while pos < len(anchors):
                c = int(anchors[pos])
                pos += 1
                x, y = c % grid.width, c // grid.width
                fp = sp.fp[sp.id_of(KinState(x, y, h))]
                if not any(taken[f] for f in fp):
                    for f in fp:
                        taken[f] = True
                    out[i] = (x, y)
                    break
            queues[models[i]][1] = pos
            if out[i] is None:
                raise ValueError(f"could not place agent {i}; map too crowded")
        return out

    starts = place()
    goals = place()
    kin = [KinState(x, y, heading if m.rotates else None) for (x, y), m in zip(starts, models)]
    return ProblemInstance(grid, list(models), kin, goals, mode=mode, seed=seed, T_max=T_max,
                           epoch_budget_ms=epoch_budget_ms)
