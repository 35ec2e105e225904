"""Directed graphs over global variable indices 0..n-1.

Holds the model types (:class:`Dag`, :class:`Polytree`, :class:`PathModel`,
:class:`PathSignModel`), reachability-based d-separation and exhaustive
enumerators for the model classes at small n.
"""

from __future__ import annotations

import itertools
import math
import numbers
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator

from .errors import CapacityError, InputError

# largest n each class may be enumerated at; keeps every enumeration < ~1e7 items
ENUMERATION_CAPS = {
    "dag": 5,
    "polytree": 7,
    "path": 8,
    "path_sign": 8,
    "direction": 8,
}

MODEL_CLASSES = tuple(ENUMERATION_CAPS)


def _check_node(n, v, what="node"):
    if isinstance(v, bool) or not isinstance(v, numbers.Integral) or not 0 <= v < n:
        raise InputError(f"{what} {v!r} is not a valid index for n={n}")


def is_acyclic(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    """Return True iff the directed graph on ``n`` nodes admits a topological order."""
    edges = list(edges)
    indeg = [0] * n
    children = [[] for _ in range(n)]
    for p, c in edges:
        _check_node(n, p)
        _check_node(n, c)
        indeg[c] += 1
        children[p].append(c)
    queue = [v for v in range(n) if indeg[v] == 0]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    return seen == n


def _skeleton_is_forest(n, edges):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p, c in edges:
        rp, rc = find(p), find(c)
        if rp == rc:
            return False
        parent[rp] = rc
    return True


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph with nodes ``0..n-1``.

    ``edges`` is stored as a frozenset of ``(parent, child)`` tuples; any
    iterable of pairs is accepted on construction.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)
    names: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise InputError(f"node count must be a positive integer, got {self.n!r}")
        raw = [tuple(e) for e in self.edges]
        edges = frozenset((int(p), int(c)) for p, c in raw)
        if len(edges) != len(raw):
            raise InputError("duplicate edges")
        for p, c in edges:
            _check_node(self.n, p)
            _check_node(self.n, c)
            if p == c:
                raise InputError(f"self-loop at node {p}")
        if not is_acyclic(self.n, edges):
            raise InputError("graph contains a directed cycle")
        object.__setattr__(self, "edges", edges)
        if self.names is not None:
            names = tuple(str(x) for x in self.names)
            if len(names) != self.n:
                raise InputError(f"{len(names)} names given for {self.n} nodes")
            object.__setattr__(self, "names", names)
        self._check_class()

    def _check_class(self):
        pass

    @classmethod
    def _trusted(cls, n, edges):
        # enumerator output is valid by construction; skip re-validation
        obj = object.__new__(cls)
        object.__setattr__(obj, "n", n)
        object.__setattr__(obj, "edges", frozenset(edges))
        object.__setattr__(obj, "names", None)
        return obj

    @cached_property
    def parents(self) -> tuple[frozenset, ...]:
        out = [set() for _ in range(self.n)]
        for p, c in self.edges:
            out[c].add(p)
        return tuple(frozenset(s) for s in out)

    @cached_property
    def children(self) -> tuple[frozenset, ...]:
        out = [set() for _ in range(self.n)]
        for p, c in self.edges:
            out[p].add(c)
        return tuple(frozenset(s) for s in out)

    @cached_property
    def sorted_edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted(self.edges))

    def key(self):
        """Canonical serialization used for ordering and tie-breaking."""
        return (self.n, self.sorted_edges)

    def to_json(self) -> dict:
        out = {"n": self.n, "edges": [list(e) for e in self.sorted_edges]}
        if self.names is not None:
            out["names"] = list(self.names)
        return out

    @classmethod
    def from_json(cls, obj: dict):
        try:
            n = obj["n"]
            edges = [tuple(e) for e in obj.get("edges", [])]
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed graph JSON: {exc}") from exc
        if any(len(e) != 2 for e in edges):
            raise InputError("every edge must be a [parent, child] pair")
        return cls(n, edges, obj.get("names"))

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, edges={list(self.sorted_edges)})"


class Polytree(Dag):
    """DAG whose undirected skeleton has no cycle (a tree or a forest)."""

    def _check_class(self):
        if not _skeleton_is_forest(self.n, self.edges):
            raise InputError("skeleton contains an undirected cycle")

    def to_json(self) -> dict:
        return {**super().to_json(), "class": "polytree"}


def is_polytree(dag: Dag) -> bool:
    return _skeleton_is_forest(dag.n, dag.edges)


def ancestors(dag: Dag, node: int) -> frozenset:
    """Nodes with a directed path into ``node`` (``node`` itself excluded)."""
    _check_node(dag.n, node)
    seen = set()
    stack = [node]
    while stack:
        for p in dag.parents[stack.pop()]:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return frozenset(seen)


def descendants(dag: Dag, node: int) -> frozenset:
    _check_node(dag.n, node)
    seen = set()
    stack = [node]
    while stack:
        for c in dag.children[stack.pop()]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return frozenset(seen)


def has_directed_path(dag: Dag, i: int, j: int) -> bool:
    return j in descendants(dag, i)


_UP, _DOWN = 0, 1


def d_connected_set(dag: Dag, source: int, conditioning: Iterable[int] = ()) -> frozenset:
    """All nodes d-connected to ``source`` given ``conditioning``.

    Reachability traversal over (node, direction) states; linear in the
    number of edges. ``source`` and conditioning nodes are never returned.
    """
    _check_node(dag.n, source)
    z = frozenset(conditioning)
    for v in z:
        _check_node(dag.n, v, "conditioning node")
    parents, children = dag.parents, dag.children
    # Z together with its ancestors: colliders in this set are open
    active = set(z)
    stack = list(z)
    while stack:
        for p in parents[stack.pop()]:
            if p not in active:
                active.add(p)
                stack.append(p)

    reached = set()
    visited = set()
    stack = [(source, _UP)]
    while stack:
        state = stack.pop()
        if state in visited:
            continue
        visited.add(state)
        v, direction = state
        if v not in z:
            reached.add(v)
        if direction == _UP:
            if v in z:
                continue
            stack.extend((p, _UP) for p in parents[v])
            stack.extend((c, _DOWN) for c in children[v])
        else:
            if v not in z:
                stack.extend((c, _DOWN) for c in children[v])
            if v in active:
                stack.extend((p, _UP) for p in parents[v])
    reached.discard(source)
    return frozenset(reached)


def d_separated(dag: Dag, i: int, j: int, conditioning: Iterable[int] = ()) -> bool:
    """True iff ``i`` and ``j`` are d-separated by ``conditioning`` in ``dag``."""
    z = frozenset(conditioning)
    _check_node(dag.n, i)
    _check_node(dag.n, j)
    if i == j:
        raise InputError("d-separation needs two distinct nodes")
    if i in z or j in z:
        raise InputError("query nodes must not be in the conditioning set")
    return j not in d_connected_set(dag, i, z)


def _ancestors_avoiding(dag: Dag, node: int, avoid: int) -> set:
    seen = set()
    stack = [node]
    while stack:
        for p in dag.parents[stack.pop()]:
            if p != avoid and p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def common_causes(dag: Dag, i: int, j: int) -> set:
    """Third nodes with directed paths to ``i`` avoiding ``j`` and to ``j`` avoiding ``i``."""
    _check_node(dag.n, i)
    _check_node(dag.n, j)
    if i == j:
        raise InputError("common causes need two distinct nodes")
    return _ancestors_avoiding(dag, i, j) & _ancestors_avoiding(dag, j, i)


def common_cause_free(dag: Dag, i: int, j: int) -> bool:
    """True iff no third node is a common cause of ``i`` and ``j``.

    A common cause reaches ``i`` by a directed path avoiding ``j`` and
    ``j`` by one avoiding ``i``; in ``0 -> 1 -> 2`` node 0 influences 2
    only through 1, so (1, 2) stays unconfounded.
    """
    return not common_causes(dag, i, j)


# -- collider-free path models ------------------------------------------------


def _check_perm(perm):
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(len(perm))) or not perm:
        raise InputError(f"{perm!r} is not a permutation of 0..n-1")
    return perm


@dataclass(frozen=True)
class PathModel:
    """Collider-free path ``perm[0] - perm[1] - ... - perm[n-1]``.

    ``adj_corr[i]`` is the correlation between ``perm[i]`` and ``perm[i+1]``.
    The model is stored with ``perm[0] < perm[-1]``; a reversed input is
    flipped so equal models compare equal.
    """

    perm: tuple
    adj_corr: tuple

    def __post_init__(self):
        perm = _check_perm(self.perm)
        r = tuple(float(x) for x in self.adj_corr)
        if len(r) != len(perm) - 1:
            raise InputError(f"need {len(perm) - 1} adjacent correlations, got {len(r)}")
        for x in r:
            if not 0.0 < abs(x) <= 1.0:
                raise InputError(f"adjacent correlation {x} outside [-1,1]\\{{0}}")
        if len(perm) > 1 and perm[0] > perm[-1]:
            perm, r = perm[::-1], r[::-1]
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "adj_corr", r)

    @property
    def n(self) -> int:
        return len(self.perm)

    @cached_property
    def position(self) -> tuple:
        pos = [0] * self.n
        for k, v in enumerate(self.perm):
            pos[v] = k
        return tuple(pos)

    @cached_property
    def edge_log_abs(self) -> tuple:
        """Per-edge log|r|."""
        return tuple(math.log(abs(x)) for x in self.adj_corr)

    @cached_property
    def cumulative_log_abs(self) -> tuple:
        """Running sum of per-edge log|r| from the first path position (0 at position 0)."""
        return (0.0,) + tuple(itertools.accumulate(self.edge_log_abs))

    @cached_property
    def cumulative_sign(self) -> tuple:
        signs = [1]
        for x in self.adj_corr:
            signs.append(signs[-1] * (1 if x > 0 else -1))
        return tuple(signs)

    def to_dag(self) -> Dag:
        return Dag(self.n, zip(self.perm, self.perm[1:]))

    def key(self):
        return (self.n, self.perm, self.adj_corr)

    def to_json(self) -> dict:
        return {"perm": list(self.perm), "adj_corr": list(self.adj_corr)}

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(tuple(obj["perm"]), tuple(obj["adj_corr"]))
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed path model JSON: {exc}") from exc


@dataclass(frozen=True)
class PathSignModel:
    """Collider-free path carrying only the sign of each adjacent correlation."""

    perm: tuple
    adj_sign: tuple

    def __post_init__(self):
        perm = _check_perm(self.perm)
        s = tuple(int(x) for x in self.adj_sign)
        if len(s) != len(perm) - 1:
            raise InputError(f"need {len(perm) - 1} adjacent signs, got {len(s)}")
        if any(x not in (-1, 1) for x in s):
            raise InputError(f"signs must be +1/-1, got {s}")
        if len(perm) > 1 and perm[0] > perm[-1]:
            perm, s = perm[::-1], s[::-1]
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "adj_sign", s)

    @property
    def n(self) -> int:
        return len(self.perm)

    @cached_property
    def position(self) -> tuple:
        pos = [0] * self.n
        for k, v in enumerate(self.perm):
            pos[v] = k
        return tuple(pos)

    @cached_property
    def cumulative_sign(self) -> tuple:
        out = [1]
        for x in self.adj_sign:
            out.append(out[-1] * x)
        return tuple(out)

    def to_dag(self) -> Dag:
        return Dag(self.n, zip(self.perm, self.perm[1:]))

    def key(self):
        return (self.n, self.perm, self.adj_sign)

    def to_json(self) -> dict:
        return {"perm": list(self.perm), "adj_sign": list(self.adj_sign)}

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(tuple(obj["perm"]), tuple(obj["adj_sign"]))
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed path-sign model JSON: {exc}") from exc


def model_from_json(obj: dict):
    """Dispatch on the keys present in a model JSON object."""
    if "adj_corr" in obj:
        return PathModel.from_json(obj)
    if "adj_sign" in obj:
        return PathSignModel.from_json(obj)
    dag = Dag.from_json(obj)
    if obj.get("class") == "polytree":
        return Polytree(dag.n, dag.edges, dag.names)
    return dag


# -- enumeration -------------------------------------------------------------


def _check_cap(cls, n):
    if cls not in ENUMERATION_CAPS:
        raise InputError(f"unknown model class {cls!r}; expected one of {MODEL_CLASSES}")
    if not isinstance(n, int) or n < 1:
        raise InputError(f"n must be a positive integer, got {n!r}")
    if n > ENUMERATION_CAPS[cls]:
        raise CapacityError(f"enumerating {cls}", n, ENUMERATION_CAPS[cls])


def _dag_edge_sets(n):
    pairs = list(itertools.combinations(range(n), 2))
    out = []
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        edges = []
        for (a, b), s in zip(pairs, states):
            if s == 1:
                edges.append((a, b))
            elif s == 2:
                edges.append((b, a))
        if is_acyclic(n, edges):
            out.append(tuple(sorted(edges)))
    out.sort()
    return out


def _forest_edge_sets(n):
    pairs = list(itertools.combinations(range(n), 2))
    forests = []

    def extend(start, chosen, comp):
        forests.append(list(chosen))
        for k in range(start, len(pairs)):
            a, b = pairs[k]
            if comp[a] == comp[b]:
                continue
            old, new = comp[a], comp[b]
            merged = [new if c == old else c for c in comp]
            chosen.append((a, b))
            extend(k + 1, chosen, merged)
            chosen.pop()

    extend(0, [], list(range(n)))
    out = []
    for skel in forests:
        for flips in itertools.product((False, True), repeat=len(skel)):
            out.append(tuple(sorted((b, a) if f else (a, b) for (a, b), f in zip(skel, flips))))
    out.sort()
    return out


def _path_perms(n):
    return [p for p in itertools.permutations(range(n)) if n == 1 or p[0] < p[-1]]


def enumerate_models(cls: str, n: int) -> Iterator:
    """Yield every model of ``cls`` on ``n`` nodes exactly once, in canonical order.

    Order is lexicographic on the sorted edge list for ``dag`` and
    ``polytree``, and on ``(perm, parameters)`` for the path classes.

    ``path`` yields one :class:`PathModel` per path skeleton (perm modulo
    reversal) with unit adjacent correlations; its real parameters are fitted
    separately. ``direction`` yields one chain DAG per total order, which
    represents every DAG of that class inducing the same ordering.
    """
    _check_cap(cls, n)
    if cls == "dag":
        for edges in _dag_edge_sets(n):
            yield Dag._trusted(n, edges)
    elif cls == "polytree":
        for edges in _forest_edge_sets(n):
            yield Polytree._trusted(n, edges)
    elif cls == "path":
        for perm in _path_perms(n):
            yield PathModel(perm, (1.0,) * (n - 1))
    elif cls == "path_sign":
        for perm in _path_perms(n):
            for signs in itertools.product((-1, 1), repeat=n - 1):
                yield PathSignModel(perm, signs)
    elif cls == "direction":
        for perm in itertools.permutations(range(n)):
            yield Dag._trusted(n, zip(perm, perm[1:]))
