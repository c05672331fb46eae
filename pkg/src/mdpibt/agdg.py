"""Agent dependency graph: hard and soft edges plus the add/remove procedures."""
from __future__ import annotations

import heapq
from typing import Callable, Iterable

_MISSING = object()


class DependencyGraph:
    """Directed graph over agent ids with at most one edge per ordered pair.

    Hard in-edges carry a stamp from a global counter so parents can be
    ordered by recency; soft edges converted to hard get a fresh stamp.
    """

    def __init__(self):
        self._hard_out: dict[int, dict[int, None]] = {}
        self._hard_in: dict[int, dict[int, int]] = {}
        self._soft_out: dict[int, dict[int, None]] = {}
        self._soft_in: dict[int, dict[int, None]] = {}
        self._stamp = 0

    def __bool__(self) -> bool:
        return any(self._hard_out.values()) or any(self._soft_out.values())

    def clear(self) -> None:
        self._hard_out.clear()
        self._hard_in.clear()
        self._soft_out.clear()
        self._soft_in.clear()

    def _next_stamp(self) -> int:
        self._stamp += 1
        return self._stamp

    def add_hard(self, src: int, dst: int) -> None:
        if src == dst:
            raise ValueError("self-dependency")
        self._drop_soft(src, dst)
        self._hard_out.setdefault(src, {})[dst] = None
        self._hard_in.setdefault(dst, {})[src] = self._next_stamp()

    def add_soft(self, src: int, dst: int) -> None:
        if src == dst:
            raise ValueError("self-dependency")
        if dst in self._hard_out.get(src, ()):
            return
        self._soft_out.setdefault(src, {})[dst] = None
        self._soft_in.setdefault(dst, {})[src] = None

    def _drop_soft(self, src: int, dst: int) -> None:
        out = self._soft_out.get(src)
        if out and dst in out:
            del out[dst]
            del self._soft_in[dst][src]

    def remove_hard(self, src: int, dst: int) -> None:
        del self._hard_out[src][dst]
        del self._hard_in[dst][src]

    def has_hard(self, src: int, dst: int) -> bool:
        return dst in self._hard_out.get(src, ())

    def has_soft(self, src: int, dst: int) -> bool:
        return dst in self._soft_out.get(src, ())

    def hard_children(self, a: int) -> list[int]:
        return list(self._hard_out.get(a, ()))

    def hard_parents(self, a: int) -> list[int]:
        """Hard parents of ``a``, least recently added first."""
        inc = self._hard_in.get(a)
        if not inc:
            return []
        return sorted(inc, key=inc.__getitem__)

    def hard_stamp(self, src: int, dst: int) -> int:
        return self._hard_in[dst][src]

    def hard_in_degree(self, a: int) -> int:
        return len(self._hard_in.get(a, ()))

    def soft_parents(self, a: int) -> list[int]:
        return list(self._soft_in.get(a, ()))

    def soft_children(self, a: int) -> list[int]:
        return list(self._soft_out.get(a, ()))

    def convert_soft_in_to_hard(self, a: int) -> list[int]:
        sources = list(self._soft_in.get(a, ()))
        for src in sources:
            self.add_hard(src, a)
        return sources

    def remove_soft_out(self, a: int) -> list[int]:
        out = self._soft_out.pop(a, None)
        if not out:
            return []
        for dst in out:
            del self._soft_in[dst][a]
        return list(out)

    def edges(self):
        """Yield ``(src, kind, dst)`` with kind ``"hard"`` or ``"soft"``."""
        for src in sorted(self._hard_out):
            for dst in self._hard_out[src]:
                yield src, "hard", dst
        for src in sorted(self._soft_out):
            for dst in self._soft_out[src]:
                yield src, "soft", dst

    def export(self) -> str:
        arrows = {"hard": "->", "soft": "-->"}
        return "".join(f"{s} {arrows[k]} {d}\n" for s, k, d in self.edges())


class PlanQueue:
    """Agents waiting to be planned; no duplicates, O(1) membership.

    ``stack`` mode pops the most recently pushed agent (pushing a present
    agent moves it to the top). ``priority`` mode pops the smallest key from
    ``key_of`` and uses lazy deletion for ``erase``.
    """

    def __init__(self, mode: str = "stack", key_of: Callable[[int], object] | None = None):
        if mode not in ("stack", "priority"):
            raise ValueError(f"unknown queue mode {mode!r}")
        if mode == "priority" and key_of is None:
            raise ValueError("priority queue needs key_of")
        self.mode = mode
        self._key_of = key_of
        self._items: dict[int, None] = {}
        self._heap: list = []

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)

    def __contains__(self, a) -> bool:
        return a in self._items

    def __iter__(self):
        return iter(list(self._items))

    def push(self, a: int) -> None:
        if self.mode == "stack":
            self._items.pop(a, None)
            self._items[a] = None
        elif a not in self._items:
            self._items[a] = None
            heapq.heappush(self._heap, (self._key_of(a), a))

    def pop(self) -> int:
        if self.mode == "stack":
            a, _ = self._items.popitem()
            return a
        while True:
            _, a = heapq.heappop(self._heap)
            if a in self._items:
                del self._items[a]
                return a

    def erase(self, a: int) -> None:
        del self._items[a]


def add_depend(graph: DependencyGraph, k: int, colliders: Iterable[int],
               queue: PlanQueue, is_planned: Callable[[int], bool],
               on_edge: Callable | None = None) -> None:
    """Record dependencies of ``k``'s new tentative path.

    ``colliders`` are the agents (other than ``k``) whose safe paths collide
    with that path. Unplanned ones get a hard edge and are queued, planned
    ones a soft edge. Agents are queued in the given order.
    """
    for i in colliders:
        if i == k:
            continue
        if is_planned(i):
            graph.add_soft(k, i)
            if on_edge:
                on_edge("add_soft", k, i)
        else:
            graph.add_hard(k, i)
            queue.push(i)
            if on_edge:
                on_edge("add_hard", k, i)


def remove_depend(graph: DependencyGraph, p: int, queue: PlanQueue,
                  unplan: Callable[[int], None], reset_index: Callable[[int], None],
                  on_edge: Callable | None = None) -> list[int]:
    """Unplan ``p`` and, recursively, every hard descendant.

    Follows the recursive procedure exactly, written with an explicit frame
    stack. A node entered a second time in the same cascade only has its
    queue membership re-synchronised; its edges were already handled.
    Returns the agents visited, in entry order.
    """
    visited: dict[int, None] = {}

    def sync(x):
        indeg = graph.hard_in_degree(x)
        if indeg > 0 and x not in queue:
            queue.push(x)
        elif indeg == 0 and x in queue:
            queue.erase(x)

    def enter(x):
        if x in visited:
            sync(x)
            return None
        visited[x] = None
        unplan(x)
        for src in graph.convert_soft_in_to_hard(x):
            if on_edge:
                on_edge("convert", src, x)
        sync(x)
        for dst in graph.remove_soft_out(x):
            if on_edge:
                on_edge("remove_soft", x, dst)
        return iter(graph.hard_children(x))

    frames = [(p, enter(p))]
    while frames:
        x, children = frames[-1]
        c = next(children, _MISSING)
        if c is _MISSING:
            frames.pop()
            continue
        graph.remove_hard(x, c)
        if on_edge:
            on_edge("remove_hard", x, c)
        reset_index(c)
        sub = enter(c)
        if sub is not None:
            frames.append((c, sub))
    return list(visited)
