"""Grid maps, agent models and the discrete state spaces built on top of them.

States are addressed by integer ids inside a :class:`StateSpace`; the
planner only ever touches ids, footprints (frozensets of flat cell indices)
and successor tuples. :class:`KinState` is the user-facing representation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numba
import numpy as np

N, E, S, W = 0, 1, 2, 3
HEADING_NAMES = "NESW"
# (dx, dy) per heading; north is -y
HEADING_STEP = ((0, -1), (1, 0), (0, 1), (-1, 0))
# wait, up, right, down, left
MOVES = ((0, 0), (0, -1), (1, 0), (0, 1), (-1, 0))

PASSABLE_CHARS = frozenset(".G")
BLOCKED_CHARS = frozenset("@T")


class MapFormatError(ValueError):
    """Raised for malformed .map or .scen input; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class KinState(NamedTuple):
    x: int
    y: int
    heading: int | None = None


@dataclass(frozen=True, eq=False)
class GridMap:
    """4-connected grid. ``blocked`` is a read-only (height, width) bool array."""

    width: int
    height: int
    blocked: np.ndarray
    name: str = ""

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("map dimensions must be positive")
        if self.blocked.shape != (self.height, self.width):
            raise ValueError("blocked array does not match map dimensions")
        self.blocked.setflags(write=False)

    @classmethod
    def from_rows(cls, rows: Sequence[str], name: str = "") -> "GridMap":
        height, width = len(rows), len(rows[0])
        blocked = np.zeros((height, width), dtype=bool)
        for y, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(f"row {y} has length {len(row)}, expected {width}")
            for x, ch in enumerate(row):
                blocked[y, x] = ch in BLOCKED_CHARS
        return cls(width, height, blocked, name)

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    @property
    def n_passable(self) -> int:
        return self.n_cells - int(self.blocked.sum())

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def passable(self, x: int, y: int) -> bool:
        return self.in_bounds(x, y) and not self.blocked[y, x]

    def cell_id(self, x: int, y: int) -> int:
        return y * self.width + x

    def cell_xy(self, cell: int) -> tuple[int, int]:
        return cell % self.width, cell // self.width

    def to_text(self) -> str:
        rows = ["".join("@" if b else "." for b in row) for row in self.blocked]
        return "type octile\nheight {}\nwidth {}\nmap\n{}\n".format(
            self.height, self.width, "\n".join(rows))


@dataclass(frozen=True)
class AgentModel:
    """One of ``pm`` (pebble), ``pmla`` (size x size square), ``rm`` (cell + heading)."""

    kind: str = "pm"
    size: int = 1

    def __post_init__(self):
        if self.kind not in ("pm", "pmla", "rm"):
            raise ValueError(f"unknown agent model {self.kind!r}")
        if not isinstance(self.size, int) or self.size < 1:
            raise ValueError("agent size must be a positive integer")
        if self.kind != "pmla" and self.size != 1:
            raise ValueError(f"{self.kind} agents have size 1")

    @classmethod
    def pm(cls) -> "AgentModel":
        return cls("pm")

    @classmethod
    def pmla(cls, size: int) -> "AgentModel":
        return cls("pmla", size)

    @classmethod
    def rm(cls) -> "AgentModel":
        return cls("rm")

    @classmethod
    def parse(cls, text: str) -> "AgentModel":
        kind, _, arg = text.strip().lower().partition(":")
        if kind == "pmla":
            if not arg:
                raise ValueError("pmla model needs a size, e.g. pmla:3")
            return cls.pmla(int(arg))
        if arg:
            raise ValueError(f"model {kind!r} takes no argument")
        return cls(kind)

    @property
    def rotates(self) -> bool:
        return self.kind == "rm"

    def __str__(self) -> str:
        return f"pmla:{self.size}" if self.kind == "pmla" else self.kind


def parse_map(text: str, name: str = "") -> GridMap:
    """Parse MovingAI ``.map`` text."""
    lines = text.splitlines()
    header = {}
    expected = ("type", "height", "width", "map")
    for lineno, key in enumerate(expected, start=1):
        if lineno > len(lines):
            raise MapFormatError(f"missing '{key}' header", lineno)
        parts = lines[lineno - 1].split()
        if not parts or parts[0].lower() != key:
            raise MapFormatError(f"expected '{key}' header", lineno)
        if key in ("height", "width"):
            if len(parts) != 2 or not parts[1].isdigit() or int(parts[1]) < 1:
                raise MapFormatError(f"bad {key} value", lineno)
            header[key] = int(parts[1])
    height, width = header["height"], header["width"]
    body = lines[4:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != height:
        raise MapFormatError(
            f"header says height {height} but {len(body)} rows follow", 4 + len(body))
    blocked = np.zeros((height, width), dtype=bool)
    for y, row in enumerate(body):
        lineno = 5 + y
        row = row.rstrip("\r")
        if len(row) != width:
            raise MapFormatError(f"row has {len(row)} cells, expected {width}", lineno)
        for x, ch in enumerate(row):
            if ch in BLOCKED_CHARS:
                blocked[y, x] = True
            elif ch not in PASSABLE_CHARS:
                raise MapFormatError(f"unknown cell character {ch!r}", lineno)
    return GridMap(width, height, blocked, name)


def load_map(path) -> GridMap:
    from pathlib import Path

    path = Path(path)
    return parse_map(path.read_text(), name=path.stem)


def parse_scen(text: str, grid: GridMap, model: AgentModel | None = None,
               heading: int = E) -> list[tuple[KinState, tuple[int, int]]]:
    """Parse MovingAI ``.scen`` text into ``(start, goal_cell)`` pairs in file order.

    Cells are checked against ``model`` (footprint anchors for PMLA). RM
    starts get ``heading`` since the format carries none.
    """
    model = model or AgentModel.pm()
    space = state_space(grid, model)
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or (lineno == 1 and line.lower().startswith("version")):
            continue
        fields = raw.rstrip("\r\n").split("\t")
        if len(fields) != 9:
            raise MapFormatError(f"expected 9 tab-separated fields, got {len(fields)}", lineno)
        try:
            w, h, sx, sy, gx, gy = (int(f) for f in fields[2:8])
        except ValueError:
            raise MapFormatError("non-integer coordinate field", lineno) from None
        if (w, h) != (grid.width, grid.height):
            raise MapFormatError(
                f"scenario map size {w}x{h} does not match map {grid.width}x{grid.height}", lineno)
        start = KinState(sx, sy, heading if model.rotates else None)
        if not space.valid_cell(sx, sy):
            raise MapFormatError(f"start ({sx},{sy}) is not a valid {model} cell", lineno)
        if not space.valid_cell(gx, gy):
            raise MapFormatError(f"goal ({gx},{gy}) is not a valid {model} cell", lineno)
        out.append((start, (gx, gy)))
    return out


def footprint(s: KinState, model: AgentModel) -> set[tuple[int, int]]:
    k = model.size if model.kind == "pmla" else 1
    return {(s.x + dx, s.y + dy) for dy in range(k) for dx in range(k)}


class StateSpace:
    """All valid states of one agent model on one map, with successor tables.

    Build through :func:`state_space`, which caches per (map, model).
    """

    def __init__(self, grid: GridMap, model: AgentModel):
        self.grid = grid
        self.model = model
        k = model.size if model.kind == "pmla" else 1
        self.size = k
        anchor_ok = _valid_anchors(grid.blocked, k)
        self._anchor_ok = anchor_ok
        ys, xs = np.nonzero(anchor_ok)
        # row-major state order keeps ids deterministic
        cells = [(int(x), int(y)) for y, x in zip(ys, xs)]
        W = grid.width
        if model.rotates:
            self.states = [KinState(x, y, h) for x, y in cells for h in range(4)]
        else:
            self.states = [KinState(x, y) for x, y in cells]
        self.n = len(self.states)
        self.index = {s: i for i, s in enumerate(self.states)}
        self.cell = [s.y * W + s.x for s in self.states]
        fp_cache = {}
        fps = []
        for s in self.states:
            key = (s.x, s.y)
            fp = fp_cache.get(key)
            if fp is None:
                fp = frozenset((s.y + dy) * W + s.x + dx for dy in range(k) for dx in range(k))
                fp_cache[key] = fp
            fps.append(fp)
        self.fp = fps
        self.succ = [self._successors(s) for s in self.states]
        self._pred_csr = None
        self._dist_cache: dict[tuple[int, int], DistanceTable] = {}
        self.max_branching = max((len(t) for t in self.succ), default=1)

    def _successors(self, s: KinState) -> tuple[int, ...]:
        index = self.index
        if self.model.rotates:
            out = [index[s]]
            dx, dy = HEADING_STEP[s.heading]
            fwd = index.get(KinState(s.x + dx, s.y + dy, s.heading))
            if fwd is not None:
                out.append(fwd)
            out.append(index[KinState(s.x, s.y, (s.heading - 1) % 4)])
            out.append(index[KinState(s.x, s.y, (s.heading + 1) % 4)])
            return tuple(out)
        out = []
        for dx, dy in MOVES:
            nxt = index.get(KinState(s.x + dx, s.y + dy))
            if nxt is not None:
                out.append(nxt)
        return tuple(out)

    def valid_cell(self, x: int, y: int) -> bool:
        g = self.grid
        return g.in_bounds(x, y) and bool(self._anchor_ok[y, x])

    def id_of(self, s: KinState) -> int:
        if not self.model.rotates and s.heading is not None:
            s = KinState(s.x, s.y)
        try:
            return self.index[s]
        except KeyError:
            raise ValueError(f"{s} is not a valid {self.model} state") from None

    def state(self, i: int) -> KinState:
        return self.states[i]

    def to_states(self, path: Sequence[int]) -> list[KinState]:
        return [self.states[i] for i in path]

    def goal_states(self, goal: tuple[int, int]) -> list[int]:
        x, y = goal
        if not self.valid_cell(x, y):
            raise ValueError(f"goal {goal} is not a valid {self.model} cell")
        if self.model.rotates:
            return [self.index[KinState(x, y, h)] for h in range(4)]
        return [self.index[KinState(x, y)]]

    def at_goal(self, i: int, goal: tuple[int, int]) -> bool:
        s = self.states[i]
        return s.x == goal[0] and s.y == goal[1]

    def predecessor_csr(self) -> tuple[np.ndarray, np.ndarray]:
        if self._pred_csr is None:
            counts = np.zeros(self.n + 1, dtype=np.int64)
            for nxts in self.succ:
                for j in nxts:
                    counts[j + 1] += 1
            indptr = np.cumsum(counts)
            indices = np.empty(indptr[-1], dtype=np.int32)
            fill = indptr[:-1].copy()
            for i, nxts in enumerate(self.succ):
                for j in nxts:
                    indices[fill[j]] = i
                    fill[j] += 1
            self._pred_csr = (indptr, indices)
        return self._pred_csr

    def distance(self, goal: tuple[int, int]) -> "DistanceTable":
        goal = (int(goal[0]), int(goal[1]))
        table = self._dist_cache.get(goal)
        if table is None:
            table = DistanceTable(self, goal)
            self._dist_cache[goal] = table
        return table

    def clear_distance_cache(self) -> None:
        self._dist_cache.clear()


def _valid_anchors(blocked: np.ndarray, k: int) -> np.ndarray:
    """Boolean (H, W) array: True where a k x k footprint anchored top-left fits."""
    H, W = blocked.shape
    ok = np.zeros((H, W), dtype=bool)
    if k > H or k > W:
        return ok
    integral = np.zeros((H + 1, W + 1), dtype=np.int64)
    integral[1:, 1:] = np.cumsum(np.cumsum(blocked, axis=0), axis=1)
    window = (integral[k:, k:] - integral[:-k, k:] - integral[k:, :-k] + integral[:-k, :-k])
    ok[: H - k + 1, : W - k + 1] = window == 0
    return ok


@lru_cache(maxsize=64)
def state_space(grid: GridMap, model: AgentModel) -> StateSpace:
    return StateSpace(grid, model)


@numba.njit(cache=True)
def _backward_bfs(indptr, indices, sources, n):
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    head = 0
    tail = 0
    for s in sources:
        if dist[s] < 0:
            dist[s] = 0
            queue[tail] = s
            tail += 1
    while head < tail:
        u = queue[head]
        head += 1
        du = dist[u] + 1
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if dist[v] < 0:
                dist[v] = du
                queue[tail] = v
                tail += 1
    return dist


class DistanceTable:
    """Exact unit-cost distance from every state of a space to a goal cell.

    ``values`` is indexed by state id; unreachable states hold ``unreachable``
    (the dtype maximum). Item access by :class:`KinState` returns ``math.inf``
    for those.
    """

    def __init__(self, space: StateSpace, goal: tuple[int, int]):
        self.space = space
        self.goal = goal
        sources = np.asarray(space.goal_states(goal), dtype=np.int64)
        indptr, indices = space.predecessor_csr()
        raw = _backward_bfs(indptr, indices, sources, space.n)
        dtype = np.uint16 if space.n < np.iinfo(np.uint16).max else np.uint32
        self.unreachable = int(np.iinfo(dtype).max)
        raw[raw < 0] = self.unreachable
        self.values = raw.astype(dtype)

    def __getitem__(self, s: KinState) -> float:
        v = int(self.values[self.space.id_of(s)])
        return math.inf if v == self.unreachable else v

    def of(self, i: int) -> int:
        return int(self.values[i])


def distance_map(goal: tuple[int, int], model: AgentModel, grid: GridMap) -> DistanceTable:
    return state_space(grid, model).distance(goal)


def successors(s: KinState, model: AgentModel, grid: GridMap) -> list[KinState]:
    space = state_space(grid, model)
    return space.to_states(space.succ[space.id_of(s)])


def random_map(width: int, height: int, n_blocked: int, seed: int, name: str = "",
               connected: bool = True) -> GridMap:
    """Uniformly scattered obstacles; with ``connected`` the passable cells form one
    4-connected component. Disconnected samples are redrawn up to 100 times; after
    that, cells outside the largest component of the last sample are blocked too."""
    rng = np.random.default_rng(seed)
    name = name or f"random-{width}-{height}-{seed}"
    for _ in range(100):
        blocked = np.zeros(height * width, dtype=bool)
        blocked[rng.choice(height * width, size=n_blocked, replace=False)] = True
        blocked = blocked.reshape(height, width)
        if not connected or _component_count(blocked) == 1:
            return GridMap(width, height, blocked, name)
    return GridMap(width, height, _keep_largest_component(blocked), name)


def _component_count(blocked: np.ndarray) -> int:
    from scipy import ndimage

    return ndimage.label(~blocked)[1]


def _keep_largest_component(blocked: np.ndarray) -> np.ndarray:
    from scipy import ndimage

    labels, count = ndimage.label(~blocked)
    if count == 0:
        raise RuntimeError("map has no passable cell")
    sizes = np.bincount(labels.ravel())[1:]
    return labels != (int(np.argmax(sizes)) + 1)
