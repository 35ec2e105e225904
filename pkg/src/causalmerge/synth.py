"""Ground-truth generators: random graphs, linear SEMs, data, slices, queries."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import InputError
from .graphs import Dag, PathModel, Polytree
from .predictors import ANM, COND_INDEP, CORR, DIRECTION, QUERY_KINDS, SIGN, Query
from .stattests import Dataset

DEFAULT_COEF_RANGE = (0.5, 0.9)
NOISE_KINDS = ("gaussian", "uniform")


@dataclass(frozen=True)
class Noise:
    """Per-node noise: ``gaussian`` takes a variance, ``uniform`` a half-width."""

    kind: str = "gaussian"
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InputError(f"unknown noise kind {self.kind!r}")
        if not self.param > 0:
            raise InputError(f"noise parameter must be > 0, got {self.param}")

    @property
    def variance(self) -> float:
        if self.kind == "gaussian":
            return float(self.param)
        return float(self.param) ** 2 / 3.0

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.normal(0.0, math.sqrt(self.param), size)
        return rng.uniform(-self.param, self.param, size)


class LinearSem:
    """Linear structural equations ``X_j = sum_i a_ij X_i + N_j`` over a DAG."""

    def __init__(self, graph: Dag, coeffs: dict, noise: Sequence[Noise] | None = None):
        coeffs = {(int(i), int(j)): float(a) for (i, j), a in dict(coeffs).items()}
        if set(coeffs) != set(graph.edges):
            raise InputError("coefficients must be given for exactly the graph's edges")
        if any(a == 0.0 or not math.isfinite(a) for a in coeffs.values()):
            raise InputError("edge coefficients must be finite and nonzero")
        noise = tuple(noise) if noise is not None else (Noise(),) * graph.n
        if len(noise) != graph.n:
            raise InputError(f"{len(noise)} noise specs for {graph.n} nodes")
        self.graph = graph
        self.coeffs = coeffs
        self.noise = noise

    @property
    def n(self) -> int:
        return self.graph.n

    def weight_matrix(self) -> np.ndarray:
        """``B`` with ``B[child, parent] = a`` so that ``X = B X + N``."""
        B = np.zeros((self.n, self.n))
        for (i, j), a in self.coeffs.items():
            B[j, i] = a
        return B

    def topological_order(self) -> list[int]:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.graph.edges)
        return list(nx.lexicographical_topological_sort(g))

    def to_json(self) -> dict:
        return {
            "graph": self.graph.to_json(),
            "coeffs": [[i, j, a] for (i, j), a in sorted(self.coeffs.items())],
            "noise": [{"kind": z.kind, "param": z.param} for z in self.noise],
        }

    @classmethod
    def from_json(cls, obj: dict):
        try:
            graph = Dag.from_json(obj["graph"])
            coeffs = {(int(i), int(j)): a for i, j, a in obj["coeffs"]}
            noise = [Noise(z["kind"], z["param"]) for z in obj["noise"]] if "noise" in obj else None
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed SEM JSON: {exc}") from exc
        return cls(graph, coeffs, noise)


def _rng(seed):
    return np.random.default_rng(seed)


def _check_range(lo_hi):
    lo, hi = (float(x) for x in lo_hi)
    if not 0 < lo <= hi:
        raise InputError(f"magnitude range must satisfy 0 < lo <= hi, got {lo_hi}")
    return lo, hi


def sample_graph(cls: str, n: int, seed=None, params: dict | None = None):
    """Draw a random model of class ``dag``, ``polytree`` or ``path``.

    dag : random order, each forward edge kept with ``params['edge_prob']`` (0.5).
    polytree : uniform labeled spanning tree from a random Pruefer sequence,
        each edge oriented by a fair coin.
    path : random permutation; adjacent correlations with magnitude uniform in
        ``params['range']`` (0.5, 0.9) and random sign.
    """
    params = dict(params or {})
    if not isinstance(n, int) or n < 1:
        raise InputError(f"n must be a positive integer, got {n!r}")
    rng = _rng(seed)
    if cls == "dag":
        p = float(params.get("edge_prob", 0.5))
        if not 0.0 <= p <= 1.0:
            raise InputError(f"edge_prob must lie in [0,1], got {p}")
        order = rng.permutation(n)
        edges = [(int(order[a]), int(order[b])) for a, b in itertools.combinations(range(n), 2)
                 if rng.random() < p]
        return Dag(n, edges)
    if cls == "polytree":
        if n == 1:
            return Polytree(1)
        if n == 2:
            skel = [(0, 1)]
        else:
            tree = nx.from_prufer_sequence([int(x) for x in rng.integers(0, n, n - 2)])
            skel = sorted(tuple(sorted(e)) for e in tree.edges)
        flips = rng.random(len(skel)) < 0.5
        return Polytree(n, [(b, a) if f else (a, b) for (a, b), f in zip(skel, flips)])
    if cls == "path":
        lo, hi = _check_range(params.get("range", DEFAULT_COEF_RANGE))
        if hi > 1:
            raise InputError("correlation magnitudes must not exceed 1")
        perm = tuple(int(v) for v in rng.permutation(n))
        mags = rng.uniform(lo, hi, n - 1)
        signs = np.where(rng.random(n - 1) < 0.5, -1.0, 1.0)
        return PathModel(perm, tuple(float(x) for x in mags * signs))
    raise InputError(f"cannot sample graphs of class {cls!r}; expected dag, polytree or path")


def random_sem(graph: Dag, seed=None, coef_range=DEFAULT_COEF_RANGE,
               noise: str = "gaussian", noise_param: float = 1.0) -> LinearSem:
    """Attach coefficients with magnitude uniform in ``coef_range`` and random sign."""
    lo, hi = _check_range(coef_range)
    rng = _rng(seed)
    coeffs = {}
    for e in sorted(graph.edges):
        mag = rng.uniform(lo, hi)
        coeffs[e] = mag if rng.random() < 0.5 else -mag
    return LinearSem(graph, coeffs, [Noise(noise, noise_param)] * graph.n)


def path_sem(model: PathModel, source_position: int = 0, noise: str = "gaussian") -> LinearSem:
    """Standardized SEM on the path whose adjacent correlations equal ``model.adj_corr``.

    Edges point away from ``source_position``, so the path has no collider.
    Every variable has unit variance: child = r * parent + noise with
    variance ``1 - r**2``.
    """
    n = model.n
    if not 0 <= source_position < n:
        raise InputError(f"source position {source_position} outside 0..{n - 1}")
    if any(abs(r) >= 1 for r in model.adj_corr):
        raise InputError("path SEM needs |r| < 1 on every edge")
    coeffs = {}
    noise_var = [1.0] * n
    for k, r in enumerate(model.adj_corr):
        u, v = model.perm[k], model.perm[k + 1]
        parent, child = (u, v) if k >= source_position else (v, u)
        coeffs[(parent, child)] = r
        noise_var[child] = 1.0 - r * r
    if noise == "gaussian":
        specs = [Noise("gaussian", s) for s in noise_var]
    else:
        specs = [Noise("uniform", math.sqrt(3.0 * s)) for s in noise_var]
    return LinearSem(Dag(n, coeffs), coeffs, specs)


def sem_covariance(sem: LinearSem) -> np.ndarray:
    """Population covariance ``(I - B)^-1 diag(noise var) (I - B)^-T``."""
    inv = np.linalg.inv(np.eye(sem.n) - sem.weight_matrix())
    return inv @ np.diag([z.variance for z in sem.noise]) @ inv.T


def sample_data(sem: LinearSem, l: int, seed=None) -> Dataset:
    """``l`` i.i.d. rows, each variable computed after its parents."""
    if not isinstance(l, (int, np.integer)) or l < 1:
        raise InputError(f"sample size must be a positive integer, got {l!r}")
    rng = _rng(seed)
    noise = np.column_stack([z.draw(rng, l) for z in sem.noise])
    X = np.zeros((l, sem.n))
    parents = sem.graph.parents
    for v in sem.topological_order():
        X[:, v] = noise[:, v]
        for p in parents[v]:
            X[:, v] += sem.coeffs[(p, v)] * X[:, p]
    return Dataset(X, range(sem.n), row_ids=np.arange(l))


ROW_MODES = ("shared", "disjoint")


def slice_overlapping(d: Dataset, tuples: Sequence[Sequence[int]], row_mode: str = "shared",
                      seed=None, sizes: Sequence[int] | None = None) -> list[Dataset]:
    """Project ``d`` onto overlapping variable tuples.

    ``shared`` reuses every row for every slice. ``disjoint`` partitions a
    random permutation of the rows, so no two slices share a sample; slice
    sizes default to an even split of ``l``.
    """
    for t in tuples:
        missing = set(t) - set(d.vars)
        if missing:
            raise InputError(f"variables {sorted(missing)} are not in the dataset")
    if row_mode == "shared":
        return [d.project(tuple(t)) for t in tuples]
    if row_mode != "disjoint":
        raise InputError(f"unknown row mode {row_mode!r}; expected one of {ROW_MODES}")
    m = len(tuples)
    if sizes is None:
        sizes = [d.l // m] * m if m else []
    if len(sizes) != m or any(s < 1 for s in sizes):
        raise InputError("need one positive size per tuple")
    if sum(sizes) > d.l:
        raise InputError(f"disjoint slices need {sum(sizes)} rows, dataset has {d.l}")
    order = _rng(seed).permutation(d.l)
    base_ids = d.row_ids if d.row_ids is not None else np.arange(d.l)
    out, start = [], 0
    for t, s in zip(tuples, sizes):
        rows = np.sort(order[start:start + s])
        start += s
        out.append(Dataset(d.data[rows][:, [d.vars.index(v) for v in t]], t, row_ids=base_ids[rows]))
    return out


def query_universe(kind: str, n: int, cond_sizes: Iterable[int] = (1,), arity: int = 2) -> list[Query]:
    """All queries of ``kind`` on ``n`` variables, in canonical order.

    ``cond_indep`` pairs every unordered pair with every conditioning set
    whose size is in ``cond_sizes``; the default single conditioner gives
    ``n(n-1)(n-2)/2`` queries. ``anm`` uses ordered tuples of length ``arity``.
    """
    if kind not in QUERY_KINDS:
        raise InputError(f"unknown query kind {kind!r}")
    if kind == COND_INDEP:
        sizes = sorted(set(int(s) for s in cond_sizes))
        out = []
        for i, j in itertools.combinations(range(n), 2):
            rest = [v for v in range(n) if v not in (i, j)]
            for s in sizes:
                out.extend(Query(COND_INDEP, (i, j), z) for z in itertools.combinations(rest, s))
        return out
    if kind in (SIGN, CORR):
        return [Query(kind, p) for p in itertools.combinations(range(n), 2)]
    if kind == DIRECTION:
        return [Query(kind, p) for p in itertools.permutations(range(n), 2)]
    if kind == ANM:
        return [Query(kind, p) for p in itertools.permutations(range(n), arity)]
    raise InputError(kind)


def sample_queries(kind: str, n: int, count: int, seed=None, exclusions: Iterable[Query] = (),
                   cond_sizes: Iterable[int] = (1,), arity: int = 2) -> list[Query]:
    """Draw ``count`` queries uniformly without replacement, after removing ``exclusions``."""
    excluded = set(exclusions)
    pool = [q for q in query_universe(kind, n, cond_sizes, arity) if q not in excluded]
    if not 0 <= count <= len(pool):
        raise InputError(f"cannot draw {count} queries from a universe of {len(pool)}")
    idx = _rng(seed).permutation(len(pool))[:count]
    return [pool[k] for k in idx]
