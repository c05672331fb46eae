"""Candidate path enumeration and space-time collision checks.

A path is a tuple of state ids of one :class:`~mdpibt.grid.StateSpace`,
offset 0 being the current state. Collision checks work on *footprint
sequences*: one frozenset of flat cell indices per timestep, so agents of
different models and sizes can be compared directly.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .grid import StateSpace

Path = tuple  # tuple[int, ...] of state ids
Footprints = Sequence[frozenset]


def enumerate_paths(space: StateSpace, start: int, w: int, dist) -> list[Path]:
    """Every w-step action sequence from ``start`` as a state-id tuple.

    Sorted by distance of the final state to the goal, then by the summed
    distance along the path (earlier progress first), then by generation
    order, which follows the successor ordering of the space.
    """
    if w < 1:
        raise ValueError("window must be at least 1")
    succ = space.succ
    paths = [(start,)]
    for _ in range(w):
        paths = [p + (s,) for p in paths for s in succ[p[-1]]]
    values = np.asarray(dist.values if hasattr(dist, "values") else dist)
    if len(paths) == 1:
        return paths
    along = values[np.asarray(paths)[:, 1:]].astype(np.int64)
    # lexsort is stable, so ties keep generation order
    if w == 1:
        order = np.argsort(along[:, 0], kind="stable")
    else:
        order = np.lexsort((along.sum(axis=1), along[:, -1]))
    return [paths[i] for i in order]


def footprints_of(space: StateSpace, path: Iterable[int]) -> list[frozenset]:
    fp = space.fp
    return [fp[s] for s in path]


def pad(seq: Sequence, length: int) -> list:
    seq = list(seq)
    return seq + [seq[-1]] * (length - len(seq))


def footprints_collide(fa: Footprints, fb: Footprints) -> bool:
    """Vertex overlap at any timestep, or a generalized swap between t and t+1.

    The shorter sequence is padded by repeating its final footprint.
    """
    T = max(len(fa), len(fb))
    fa, fb = pad(fa, T), pad(fb, T)
    for t in range(T):
        if not fa[t].isdisjoint(fb[t]):
            return True
    for t in range(T - 1):
        if not fa[t].isdisjoint(fb[t + 1]) and not fb[t].isdisjoint(fa[t + 1]):
            return True
    return False


def paths_collide(pa: Path, space_a: StateSpace, pb: Path, space_b: StateSpace) -> bool:
    return footprints_collide(footprints_of(space_a, pa), footprints_of(space_b, pb))


class OccupancyIndex:
    """Timestep-indexed cell occupancy over a fixed horizon.

    ``query`` returns exactly the stored owners whose footprint sequence
    collides with the given one under :func:`footprints_collide`. Stored and
    queried sequences are padded to the horizon.
    """

    def __init__(self, n_cells: int, horizon: int):
        self.n_cells = n_cells
        self.horizon = horizon
        self._cells: dict[int, list[int]] = {}
        self._fps: dict[int, list[frozenset]] = {}

    def __contains__(self, owner) -> bool:
        return owner in self._fps

    def __len__(self) -> int:
        return len(self._fps)

    def footprints(self, owner) -> list[frozenset]:
        return self._fps[owner]

    def add(self, owner: int, fps: Footprints) -> None:
        if owner in self._fps:
            self.remove(owner)
        if len(fps) > self.horizon:
            raise ValueError("path longer than index horizon")
        if len(fps) < self.horizon:
            fps = pad(fps, self.horizon)
        self._fps[owner] = fps
        cells = self._cells
        nc = self.n_cells
        for t, fp in enumerate(fps):
            base = t * nc
            for c in fp:
                lst = cells.get(base + c)
                if lst is None:
                    cells[base + c] = [owner]
                else:
                    lst.append(owner)

    def remove(self, owner: int) -> None:
        fps = self._fps.pop(owner, None)
        if fps is None:
            return
        cells = self._cells
        nc = self.n_cells
        for t, fp in enumerate(fps):
            base = t * nc
            for c in fp:
                lst = cells[base + c]
                if len(lst) == 1:
                    del cells[base + c]
                else:
                    lst.remove(owner)

    def query(self, fps: Footprints, hits: set | None = None) -> set:
        if hits is None:
            hits = set()
        if len(fps) < self.horizon:
            fps = pad(fps, self.horizon)
        cells = self._cells
        nc = self.n_cells
        for t, fp in enumerate(fps):
            base = t * nc
            for c in fp:
                lst = cells.get(base + c)
                if lst:
                    hits.update(lst)
        stored = self._fps
        for t in range(len(fps) - 1):
            base = t * nc
            mine = fps[t]
            for c in fps[t + 1]:
                lst = cells.get(base + c)
                if lst:
                    for j in lst:
                        if j not in hits and not stored[j][t + 1].isdisjoint(mine):
                            hits.add(j)
        return hits


class ReservationTable:
    """The most recent path of every agent: tentative if planned, else safe.

    Safe and tentative paths live in two occupancy indices; an agent counts
    as planned while it has an entry in ``tentative``.
    """

    def __init__(self, n_cells: int, horizon: int):
        self.safe = OccupancyIndex(n_cells, horizon)
        self.tentative = OccupancyIndex(n_cells, horizon)

    def __len__(self) -> int:
        return len(self.safe)

    def set_safe(self, agent: int, fps: Footprints) -> None:
        self.safe.add(agent, fps)

    def set_tentative(self, agent: int, fps: Footprints | None) -> None:
        if fps is None:
            self.tentative.remove(agent)
        else:
            self.tentative.add(agent, fps)

    def recent(self, agent: int) -> list[frozenset]:
        if agent in self.tentative:
            return self.tentative.footprints(agent)
        return self.safe.footprints(agent)

    def colliding(self, fps: Footprints, owner: int) -> tuple[set, set]:
        """Return ``(reserved_hits, safe_hits)`` for a candidate of ``owner``.

        ``reserved_hits`` are agents whose most recent path collides;
        ``safe_hits`` are agents whose safe path collides, planned or not.
        """
        safe_hits = self.safe.query(fps)
        safe_hits.discard(owner)
        planned = self.tentative._fps
        hits = {j for j in safe_hits if j not in planned}
        self.tentative.query(fps, hits)
        hits.discard(owner)
        return hits, safe_hits


    def screen(self, fps: Footprints, owner: int, limit: float, reject,
               keys: tuple | None = None) -> set | None:
        """Reserved hits of a candidate, or None once it is known to fail.

        A candidate fails with more than ``limit`` reserved hits or with any
        hit ``j`` where ``reject(j)`` is true. Same hit set as ``colliding``
        otherwise; stops at the first failing hit. ``keys`` is the cached
        result of :func:`screen_keys` for ``fps``.
        """
        vertex, swap = keys or screen_keys(fps, self.safe.n_cells)
        hits: set = set()
        planned = self.tentative._fps
        for index, skip_planned in ((self.tentative, False), (self.safe, True)):
            cells = index._cells
            stored = index._fps
            for key in vertex:
                lst = cells.get(key)
                if not lst:
                    continue
                for j in lst:
                    if j == owner or j in hits or (skip_planned and j in planned):
                        continue
                    if reject(j) or len(hits) >= limit:
                        return None
                    hits.add(j)
            for key, t in swap:
                lst = cells.get(key)
                if not lst:
                    continue
                for j in lst:
                    if j == owner or j in hits or (skip_planned and j in planned):
                        continue
                    if stored[j][t + 1].isdisjoint(fps[t]):
                        continue
                    if reject(j) or len(hits) >= limit:
                        return None
                    hits.add(j)
        return hits


def screen_keys(fps: Footprints, n_cells: int) -> tuple:
    """Flattened index keys of a footprint sequence for :meth:`ReservationTable.screen`.

    ``vertex`` holds ``t * n_cells + cell`` for every occupied cell; ``swap``
    holds ``(t * n_cells + cell, t)`` for cells entered at ``t + 1``, which
    find stored agents that occupied them at ``t``.
    """
    vertex = tuple(t * n_cells + c for t, fp in enumerate(fps) for c in fp)
    swap = tuple((t * n_cells + c, t) for t in range(len(fps) - 1) for c in fps[t + 1])
    return vertex, swap


def build_reservation(agents) -> ReservationTable:
    """Reservation table over AgentRecords (tentative path if set, else safe path)."""
    agents = list(agents)
    if not agents:
        raise ValueError("no agents")
    n_cells = agents[0].space.grid.n_cells
    horizon = max(len(a.tau) if a.tau is not None else 0 for a in agents)
    table = ReservationTable(n_cells, horizon)
    for a in agents:
        if a.tau is None:
            raise ValueError(f"agent {a.id} has no safe path")
        table.set_safe(a.id, footprints_of(a.space, a.tau))
        if a.pi is not None:
            table.set_tentative(a.id, footprints_of(a.space, a.pi))
    return table


def colliding_agents(candidate: Path, owner, table: ReservationTable) -> set:
    """Agents other than ``owner`` whose reserved path collides with ``candidate``."""
    return table.colliding(footprints_of(owner.space, candidate), owner.id)[0]
