"""MD-PIBT: dependency-graph search over w-step candidate paths.

One :class:`Epoch` holds the mutable planning state of a single planning
window. :func:`plan_epoch` runs the outer loop over agents in priority
order, :func:`mdpibt_call` the queue-driven search for one root agent.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .agdg import DependencyGraph, PlanQueue, add_depend, remove_depend
from .grid import StateSpace
from .paths import ReservationTable, enumerate_paths, screen_keys, footprints_collide, footprints_of


class PlannerFault(RuntimeError):
    """The per-epoch iteration budget was exceeded."""

    def __init__(self, message: str, graph_dump: str = "", trace_tail: list | None = None):
        super().__init__(message)
        self.graph_dump = graph_dump
        self.trace_tail = trace_tail or []


class PlannerTimeout(RuntimeError):
    """The wall-clock deadline of an epoch passed before planning finished."""


@dataclass
class PlannerConfig:
    w: int = 1
    h: int = 1
    R: int = 100
    C: float = 1
    m: str = "pibt"
    priority: str = "let"
    queue: str = "stack"
    let_longest_first: bool = True

    def __post_init__(self):
        self.m = self.m.lower()
        self.priority = self.priority.lower()
        if self.w < 1:
            raise ValueError("w must be >= 1")
        if not 1 <= self.h <= self.w:
            raise ValueError("h must satisfy 1 <= h <= w")
        if self.R < 0:
            raise ValueError("R must be >= 0")
        if self.C != math.inf and (int(self.C) != self.C or self.C < 1):
            raise ValueError("C must be a positive integer or inf")
        if self.m not in ("pibt", "epibt"):
            raise ValueError(f"unknown find-path mode {self.m!r}")
        if self.priority not in ("let", "sd"):
            raise ValueError(f"unknown priority strategy {self.priority!r}")
        if self.queue not in ("stack", "priority"):
            raise ValueError(f"unknown queue mode {self.queue!r}")

    @classmethod
    def preset(cls, name: str, **overrides) -> "PlannerConfig":
        """``pibt`` fixes w=h=1, C=1, m=pibt; ``epibt`` fixes C=1, m=epibt."""
        name = name.lower()
        if name == "pibt":
            return cls(**{**overrides, "w": 1, "h": 1, "C": 1, "m": "pibt"})
        if name == "epibt":
            return cls(**{**overrides, "C": 1, "m": "epibt"})
        raise ValueError(f"unknown preset {name!r}")

    def label(self) -> str:
        c = "inf" if self.C == math.inf else int(self.C)
        return f"w{self.w}-h{self.h}-R{self.R}-C{c}-{self.m}-{self.priority}"

    def as_dict(self) -> dict:
        return {"w": self.w, "h": self.h, "R": self.R,
                "C": "inf" if self.C == math.inf else int(self.C),
                "m": self.m, "priority": self.priority, "queue": self.queue}


@dataclass(eq=False)
class AgentRecord:
    """Per-agent planning state.

    ``pi`` is the tentative path (None when unplanned), ``tau`` the safe
    path, ``p`` the epoch rank (0 plans first), ``paths`` the sorted
    candidate list, ``d`` the next candidate index, ``r`` the number of
    planning attempts in this epoch.
    """

    id: int
    space: StateSpace
    state: int
    goal: tuple[int, int]
    dist: object = None
    tau: tuple | None = None
    pi: tuple | None = None
    p: int = 0
    paths: list | None = None
    screens: list | None = None  # per-candidate footprints and index keys
    d: int = 0
    r: int = 0
    elapsed: int = 0

    def __post_init__(self):
        if self.dist is None:
            self.dist = self.space.distance(self.goal)

    @property
    def goal_distance(self) -> int:
        return int(self.dist.values[self.state])

    def wait_path(self, w: int) -> tuple:
        return (self.state,) * (w + 1)


def priority_key(a: AgentRecord, strategy: str, longest_first: bool = True):
    """Sort key; smaller plans first. Ties fall back to the agent id."""
    if strategy == "let":
        return (-a.elapsed if longest_first else a.elapsed, a.id)
    if strategy == "sd":
        return (a.goal_distance, a.id)
    raise ValueError(f"unknown priority strategy {strategy!r}")


def fall_to_safe_path(a: AgentRecord, R: int) -> bool:
    return a.r > R


def choose_parent(graph: DependencyGraph, k: int) -> int:
    """Most recently added hard parent of ``k``."""
    parents = graph.hard_parents(k)
    if not parents:
        raise ValueError(f"agent {k} has no hard parents")
    return parents[-1]


@dataclass
class EpochResult:
    paths: list
    samples: list = field(default_factory=list)
    pops: int = 0
    calls: int = 0
    runtime_s: float = 0.0


class Epoch:
    """Mutable state shared by the MDPIBT calls of one planning window."""

    def __init__(self, agents: Sequence[AgentRecord], config: PlannerConfig,
                 trace: list | None = None, deadline: float | None = None,
                 check_invariants: bool = False, max_pops: int | None = None):
        self.agents = agents
        self.config = config
        self.graph = DependencyGraph()
        self.a_plan: set[int] = set()
        self.a_curr: dict[int, None] = {}
        self.trace = trace
        self.deadline = deadline
        self.check_invariants = check_invariants
        self.samples: list[int] = []
        self.pops = 0
        self.calls = 0
        horizon = config.w + 1
        n_cells = agents[0].space.grid.n_cells if agents else 1
        self.table = ReservationTable(n_cells, horizon)
        for a in agents:
            if a.tau is None or len(a.tau) != horizon:
                raise ValueError(f"agent {a.id} needs a safe path of length {horizon}")
            self.table.set_safe(a.id, footprints_of(a.space, a.tau))
        if max_pops is None:
            branching = max((a.space.max_branching for a in agents), default=1)
            max_pops = max(1, len(agents)) * (config.R + 1) * branching ** config.w
        self.max_pops = max_pops

    # tentative-path bookkeeping
    def set_pi(self, k: int, path: tuple, fps=None) -> None:
        a = self.agents[k]
        a.pi = path
        self.table.set_tentative(k, fps if fps is not None else footprints_of(a.space, path))
        self.a_curr[k] = None
        self.a_plan.add(k)

    def unplan(self, k: int) -> None:
        a = self.agents[k]
        if a.pi is not None:
            a.pi = None
            self.table.set_tentative(k, None)
            self.a_curr.pop(k, None)
        self.a_plan.discard(k)

    def reset_index(self, k: int) -> None:
        self.agents[k].d = 0

    def is_planned(self, k: int) -> bool:
        return self.agents[k].pi is not None

    def promote(self) -> None:
        """Tentative paths become safe paths; the graph empties with them."""
        agents = self.agents
        for k in self.a_curr:
            a = agents[k]
            a.tau = a.pi
            self.table.set_safe(k, self.table.tentative.footprints(k))
            self.table.set_tentative(k, None)
            a.pi = None
        self.a_curr.clear()
        self.graph.clear()

    def _log(self, **event) -> None:
        if self.trace is not None:
            self.trace.append(event)

    def _edge_logger(self):
        if self.trace is None:
            return None
        edges = self._edges = []

        def log(kind, src, dst):
            edges.append((kind, src, dst))
        return log

    def assert_invariants(self, queue, root: int) -> None:
        """Debug check run after every queue iteration.

        Planned paths are pairwise collision-free; each planned agent's
        out-edges are exactly the agents whose safe path its tentative path
        hits; the queue holds exactly the unplanned agents with hard parents
        (plus possibly the root). With an empty queue, tentative paths of
        planned agents and safe paths of the rest are mutually collision-free.
        """
        agents, graph = self.agents, self.graph
        fps = {a.id: footprints_of(a.space, a.pi if a.pi is not None else a.tau) for a in agents}
        safe = {a.id: footprints_of(a.space, a.tau) for a in agents}
        planned = [a.id for a in agents if a.pi is not None]
        for x in range(len(planned)):
            for y in range(x + 1, len(planned)):
                i, j = planned[x], planned[y]
                if footprints_collide(fps[i], fps[j]):
                    raise AssertionError(f"planned agents {i} and {j} collide")
        for i in planned:
            hits = {j for j in safe if j != i and footprints_collide(fps[i], safe[j])}
            edges = set(graph.hard_children(i)) | set(graph.soft_children(i))
            if hits != edges:
                raise AssertionError(f"agent {i}: collisions {sorted(hits)} but edges {sorted(edges)}")
        for a in agents:
            expected = a.pi is None and graph.hard_in_degree(a.id) > 0
            if (a.id in queue) != expected and not (a.id == root and a.pi is None):
                raise AssertionError(f"queue membership of agent {a.id} is inconsistent")
        if not queue:
            ids = [a.id for a in agents]
            for x in range(len(ids)):
                for y in range(x + 1, len(ids)):
                    if footprints_collide(fps[ids[x]], fps[ids[y]]):
                        raise AssertionError(f"agents {ids[x]} and {ids[y]} collide")


def find_best_path(ep: Epoch, k: int):
    """Advance ``k``'s path index to the next valid candidate.

    Returns ``(path, footprints, reserved_hits, safe_hits)`` or None.
    """
    a = ep.agents[k]
    cfg = ep.config
    if a.paths is None:
        a.paths = enumerate_paths(a.space, a.state, cfg.w, a.dist)
    paths = a.paths
    fp = a.space.fp
    table = ep.table
    C = cfg.C
    pibt_mode = cfg.m == "pibt"
    a_plan, a_curr, agents, R = ep.a_plan, ep.a_curr, ep.agents, cfg.R
    if pibt_mode:
        def reject(j):
            return j in a_plan
    else:
        own = a.p

        def reject(j):
            return j in a_curr or agents[j].p <= own or agents[j].r >= R
    if a.screens is None or len(a.screens) != len(paths):
        a.screens = [None] * len(paths)
    screens = a.screens
    nc = a.space.grid.n_cells
    while a.d < len(paths):
        d = a.d
        a.d += 1
        cached = screens[d]
        if cached is None:
            fps = [fp[s] for s in paths[d]]
            cached = screens[d] = (fps, screen_keys(fps, nc))
        fps = cached[0]
        if table.screen(fps, k, C, reject, cached[1]) is None:
            continue
        tp = paths[d]
        hits, safe_hits = table.colliding(fps, k)
        return tp, fps, hits, safe_hits
    return None


def mdpibt_call(ep: Epoch, root: int) -> None:
    """Plan ``root`` and every agent it comes to depend on."""
    agents = ep.agents
    cfg = ep.config
    graph = ep.graph
    if cfg.queue == "stack":
        q = PlanQueue("stack")
    else:
        q = PlanQueue("priority", key_of=lambda i: agents[i].p)
    edge_log = ep._edge_logger()
    ep.calls += 1
    q.push(root)
    while True:
        if not q:
            if agents[root].pi is not None:
                break
            # root was unplanned by a cascade; it still owes a plan
            q.push(root)
        k = q.pop()
        ep.pops += 1
        if ep.pops > ep.max_pops:
            raise PlannerFault(
                f"iteration budget of {ep.max_pops} queue pops exceeded",
                graph.export(), (ep.trace or [])[-50:])
        if ep.deadline is not None and (ep.pops & 63) == 1 and time.perf_counter() > ep.deadline:
            raise PlannerTimeout("epoch time budget exceeded")
        a = agents[k]
        a.r += 1
        if edge_log:
            ep._edges.clear()
        found = find_best_path(ep, k)
        if found is not None:
            tp, fps, hits, safe_hits = found
            ep.set_pi(k, tp, fps)
            ep.samples.append(len(hits))
            colliders = sorted(safe_hits, key=lambda i: agents[i].p, reverse=True)
            add_depend(graph, k, colliders, q, ep.is_planned, edge_log)
            outcome = "accept"
        else:
            parents = graph.hard_parents(k)
            if fall_to_safe_path(a, cfg.R) or not parents:
                for p in parents:
                    remove_depend(graph, p, q, ep.unplan, ep.reset_index, edge_log)
                ep.set_pi(k, a.tau)
                outcome = "safe"
            else:
                p = parents[-1]
                remove_depend(graph, p, q, ep.unplan, ep.reset_index, edge_log)
                q.push(p)
                outcome = f"replan:{p}"
        if ep.trace is not None:
            ep._log(agent=k, r=a.r, d=a.d, outcome=outcome,
                    deps=len(found[2]) if found is not None else None,
                    edges=list(ep._edges), graph=graph.export())
        if ep.check_invariants:
            ep.assert_invariants(q, root)


def plan_epoch(agents: Sequence[AgentRecord], config: PlannerConfig, *,
               trace: list | None = None, deadline: float | None = None,
               check_invariants: bool = False, max_pops: int | None = None,
               on_call_end: Callable[[Epoch], None] | None = None) -> EpochResult:
    """Plan one window for all agents; returns their committed safe paths.

    Each agent must carry an initial safe path of length w+1 in ``tau`` and
    ids equal to its position in ``agents``. Planning state (pi, d, r,
    paths) is reset here and priorities are recomputed.
    """
    t0 = time.perf_counter()
    for i, a in enumerate(agents):
        if a.id != i:
            raise ValueError("agent ids must equal their list positions")
        a.pi = None
        a.d = 0
        a.r = 0
        a.paths = None
        a.screens = None
    order = sorted(agents, key=lambda a: priority_key(a, config.priority, config.let_longest_first))
    for rank, a in enumerate(order):
        a.p = rank
    ep = Epoch(agents, config, trace=trace, deadline=deadline,
               check_invariants=check_invariants, max_pops=max_pops)
    for a in order:
        if a.r == 0:
            mdpibt_call(ep, a.id)
            ep.promote()
            if on_call_end is not None:
                on_call_end(ep)
    return EpochResult([a.tau for a in agents], ep.samples, ep.pops, ep.calls,
                       time.perf_counter() - t0)
