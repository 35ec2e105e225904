"""Model-induced properties: what a causal model predicts for a query."""

from __future__ import annotations

import math
import numbers
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, InputError, ModelOutsideClassError, QueryError
from .graphs import (
    Dag,
    PathModel,
    PathSignModel,
    ancestors,
    common_causes,
    d_connected_set,
    has_directed_path,
    is_polytree,
)

COND_INDEP, SIGN, CORR, DIRECTION, ANM = "cond_indep", "sign", "corr", "direction", "anm"
QUERY_KINDS = (COND_INDEP, SIGN, CORR, DIRECTION, ANM)

# range of each query kind's outcome
OUTCOME_KIND = {
    COND_INDEP: "binary",
    SIGN: "sign",
    CORR: "real",
    DIRECTION: "sign",
    ANM: "binary",
}


def _as_index(v):
    if isinstance(v, bool) or not isinstance(v, numbers.Integral) or v < 0:
        raise QueryError(f"variable {v!r} is not a non-negative integer index")
    return int(v)


@dataclass(frozen=True)
class Query:
    """A statistical-property question about a tuple of global variables.

    ``cond_indep`` queries read ``vars[0] _||_ vars[1] | cond``; the pair and
    the conditioning set are stored sorted, since neither order matters.
    ``sign`` and ``corr`` pairs are unordered (stored sorted); ``direction``
    pairs and ``anm`` tuples keep their order.
    """

    kind: str
    vars: tuple
    cond: tuple = ()

    def __post_init__(self):
        if self.kind not in QUERY_KINDS:
            raise QueryError(f"unknown query kind {self.kind!r}")
        vs = tuple(_as_index(v) for v in self.vars)
        cond = tuple(_as_index(v) for v in self.cond)
        if self.kind == COND_INDEP:
            if len(vs) > 2 and not cond:
                vs, cond = vs[:2], vs[2:]
            if len(vs) != 2:
                raise QueryError("cond_indep needs exactly two query variables")
            vs, cond = tuple(sorted(vs)), tuple(sorted(cond))
        else:
            if cond:
                raise QueryError(f"{self.kind} queries take no conditioning set")
            if self.kind == ANM:
                if len(vs) < 2:
                    raise QueryError("anm queries need at least two variables")
            elif len(vs) != 2:
                raise QueryError(f"{self.kind} queries need exactly two variables")
            if self.kind in (SIGN, CORR):
                vs = tuple(sorted(vs))
        if len(set(vs + cond)) != len(vs) + len(cond):
            raise QueryError(f"query variables must be distinct: {vs} | {cond}")
        object.__setattr__(self, "vars", vs)
        object.__setattr__(self, "cond", cond)

    @property
    def outcome_kind(self) -> str:
        return OUTCOME_KIND[self.kind]

    @property
    def variables(self) -> tuple:
        """Every variable the query touches, in query order."""
        return self.vars + self.cond

    def check_range(self, n: int):
        for v in self.variables:
            if v >= n:
                raise QueryError(f"variable {v} out of range for n={n}")

    def to_json(self) -> dict:
        out = {"kind": self.kind, "vars": list(self.vars)}
        if self.kind == COND_INDEP:
            out["cond"] = list(self.cond)
        return out

    @classmethod
    def from_json(cls, obj: dict):
        try:
            return cls(obj["kind"], tuple(obj["vars"]), tuple(obj.get("cond", ())))
        except (KeyError, TypeError) as exc:
            raise QueryError(f"malformed query JSON: {exc}") from exc

    def __str__(self):
        if self.kind == COND_INDEP:
            return f"{self.vars[0]} _||_ {self.vars[1]} | {set(self.cond) or '{}'}"
        return f"{self.kind}{self.vars}"


@dataclass(frozen=True)
class Outcome:
    """A property value: binary {0,1}, sign {-1,+1} or real.

    For ``cond_indep`` outcomes 0 means independence and 1 dependence;
    ``label`` spells that out so the encoding cannot be flipped silently.
    """

    kind: str
    value: float
    label: str | None = None

    def __post_init__(self):
        if self.kind == "binary":
            if self.value not in (0, 1):
                raise InputError(f"binary outcome must be 0 or 1, got {self.value!r}")
            object.__setattr__(self, "value", int(self.value))
        elif self.kind == "sign":
            if self.value not in (-1, 1):
                raise InputError(f"sign outcome must be -1 or +1, got {self.value!r}")
            object.__setattr__(self, "value", int(self.value))
        elif self.kind == "real":
            v = float(self.value)
            if not math.isfinite(v):
                raise InputError(f"real outcome must be finite, got {v}")
            object.__setattr__(self, "value", v)
        else:
            raise InputError(f"unknown outcome kind {self.kind!r}")

    def __float__(self):
        return float(self.value)

    def __int__(self):
        return int(self.value)

    def to_json(self):
        out = {"kind": self.kind, "value": self.value}
        if self.label is not None:
            out["label"] = self.label
        return out


def ci_outcome(dependent: bool) -> Outcome:
    return Outcome("binary", 1 if dependent else 0, "dependent" if dependent else "independent")


def outcome_for(query: Query, value) -> Outcome:
    """Wrap a raw value (or pass an Outcome through) with the query's outcome kind."""
    if isinstance(value, Outcome):
        if value.kind != query.outcome_kind:
            raise QueryError(f"{query.kind} needs a {query.outcome_kind} outcome, got {value.kind}")
        return value
    if query.kind == COND_INDEP:
        if value not in (0, 1):
            raise InputError(f"cond_indep outcome must be 0 or 1, got {value!r}")
        return ci_outcome(bool(value))
    return Outcome(query.outcome_kind, value)


def _require_kind(q: Query, kind: str):
    if q.kind != kind:
        raise QueryError(f"expected a {kind} query, got {q.kind}")


def _graph_of(model) -> Dag:
    if isinstance(model, Dag):
        return model
    if isinstance(model, (PathModel, PathSignModel)):
        return model.to_dag()
    raise QueryError(f"{type(model).__name__} does not define a graph")


def predict_ci(model, q: Query) -> Outcome:
    """0 (independent) iff the Markov condition implies ``q``; 1 otherwise."""
    _require_kind(q, COND_INDEP)
    dag = _graph_of(model)
    q.check_range(dag.n)
    i, j = q.vars
    return ci_outcome(j in d_connected_set(dag, i, q.cond))


def predict_direction(model: Dag, i: int, j: int) -> Outcome:
    dag = _graph_of(model)
    if i == j:
        raise QueryError("direction needs two distinct nodes")
    if has_directed_path(dag, i, j):
        return Outcome("sign", 1)
    if has_directed_path(dag, j, i):
        return Outcome("sign", -1)
    raise ModelOutsideClassError(f"no directed path between {i} and {j}: model is outside the direction class")


def _positions(model, i, j):
    if i == j:
        raise QueryError("pairwise predictions need two distinct variables")
    for v in (i, j):
        if not 0 <= v < model.n:
            raise QueryError(f"variable {v} out of range for n={model.n}")
    a, b = model.position[i], model.position[j]
    return (a, b) if a < b else (b, a)


def predict_sign(model, i: int, j: int) -> Outcome:
    """Sign of the correlation: product of adjacent signs between the two positions."""
    if not isinstance(model, (PathModel, PathSignModel)):
        raise QueryError(f"{type(model).__name__} does not predict correlation signs")
    a, b = _positions(model, i, j)
    if isinstance(model, PathModel):
        neg = sum(1 for x in model.adj_corr[a:b] if x < 0)
        return Outcome("sign", -1 if neg % 2 else 1)
    return Outcome("sign", model.cumulative_sign[a] * model.cumulative_sign[b])


def predict_corr(model: PathModel, i: int, j: int) -> Outcome:
    """Correlation as the product of adjacent correlations along the path."""
    if not isinstance(model, PathModel):
        raise QueryError(f"{type(model).__name__} does not predict correlations")
    a, b = _positions(model, i, j)
    return Outcome("real", math.prod(model.adj_corr[a:b]))


ANM_READINGS = ("standard", "literal")


def predict_anm_admissible(model: Dag, tup: Sequence[int], reading: str = "standard") -> Outcome:
    """Whether the ordered tuple admits a linear additive-noise model.

    Two conditions: the tuple is causally sufficient, and no later member is
    an ancestor of an earlier one. ``reading`` picks the sufficiency notion:
    ``standard`` allows common causes that are themselves in the tuple,
    ``literal`` forbids any common cause at all. Common causes follow
    :func:`causalmerge.graphs.common_causes`.
    """
    if reading not in ANM_READINGS:
        raise ConfigError(f"unknown sufficiency reading {reading!r}; expected one of {ANM_READINGS}")
    dag = _graph_of(model)
    tup = tuple(tup)
    if len(tup) < 2 or len(set(tup)) != len(tup):
        raise QueryError("anm tuples need at least two distinct variables")
    members = set(tup)
    anc = {v: ancestors(dag, v) for v in tup}
    for x in range(len(tup)):
        for y in range(x + 1, len(tup)):
            shared = common_causes(dag, tup[x], tup[y])
            if reading == "standard":
                shared = shared - members
            if shared or tup[y] in anc[tup[x]]:
                return Outcome("binary", 0)
    return Outcome("binary", 1)


def predict(model, q: Query, anm_reading: str = "standard") -> Outcome:
    """Dispatch a query to the matching predictor."""
    if q.kind == COND_INDEP:
        return predict_ci(model, q)
    if q.kind == DIRECTION:
        return predict_direction(model, *q.vars)
    if q.kind == SIGN:
        return predict_sign(model, *q.vars)
    if q.kind == CORR:
        return predict_corr(model, *q.vars)
    return predict_anm_admissible(model, q.vars, anm_reading)


# -- batched evaluation --------------------------------------------------------


class CIBatch:
    """A fixed list of cond_indep queries packed for repeated evaluation."""

    def __init__(self, queries: Sequence[Query], n: int):
        for q in queries:
            _require_kind(q, COND_INDEP)
            q.check_range(n)
        self.n = n
        self.queries = list(queries)
        self.a = np.array([q.vars[0] for q in queries], dtype=np.int64)
        self.b = np.array([q.vars[1] for q in queries], dtype=np.int64)
        self.zmask = np.array([sum(1 << c for c in q.cond) for q in queries], dtype=np.int64)
        self.zmember = np.zeros((len(queries), n), dtype=bool)
        for k, q in enumerate(queries):
            self.zmember[k, list(q.cond)] = True
        groups = defaultdict(list)
        for k, q in enumerate(queries):
            groups[(q.vars[0], q.cond)].append(k)
        self._groups = [(a, cond, np.array(ks), self.b[ks]) for (a, cond), ks in groups.items()]

    def __len__(self):
        return len(self.queries)

    def evaluate(self, model) -> np.ndarray:
        """Predicted 0/1 outcome for every query, as an int8 array."""
        dag = _graph_of(model)
        if dag.n != self.n:
            raise QueryError(f"model has {dag.n} nodes, batch expects {self.n}")
        if is_polytree(dag):
            return _polytree_ci(dag, self)
        out = np.empty(len(self.queries), dtype=np.int8)
        for a, cond, ks, bs in self._groups:
            reach = d_connected_set(dag, a, cond)
            out[ks] = [1 if b in reach else 0 for b in bs]
        return out


def _topo_order(n, parents, children):
    indeg = [len(parents[v]) for v in range(n)]
    order = [v for v in range(n) if indeg[v] == 0]
    for v in order:
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                order.append(c)
    return order


def _polytree_ci(dag: Dag, batch: CIBatch) -> np.ndarray:
    # In a polytree two nodes share at most one path; it is open iff no
    # interior non-collider is conditioned on and every collider has a
    # conditioned descendant-or-self.
    n = dag.n
    parents, children = dag.parents, dag.children
    nbrs = [parents[v] | children[v] for v in range(n)]
    interior = [[0] * n for _ in range(n)]
    collider = [[0] * n for _ in range(n)]
    comp = [-1] * n
    for a in range(n):
        pred = {a: None}
        order = [a]
        for v in order:
            for w in nbrs[v]:
                if w not in pred:
                    pred[w] = v
                    order.append(w)
        if comp[a] < 0:
            for v in order:
                comp[v] = a
        row_i, row_c = interior[a], collider[a]
        for b in order[1:]:
            p = pred[b]
            if p == a:
                continue
            row_i[b] = row_i[p] | (1 << p)
            # p is a collider iff both of its path neighbours point into it
            row_c[b] = row_c[p] | ((1 << p) if (pred[p] in parents[p] and b in parents[p]) else 0)
    interior = np.array(interior, dtype=np.int64)
    collider = np.array(collider, dtype=np.int64)
    comp = np.array(comp, dtype=np.int64)
    anc_self = [0] * n
    for v in _topo_order(n, parents, children):
        m = 1 << v
        for u in parents[v]:
            m |= anc_self[u]
        anc_self[v] = m
    anc_self = np.array(anc_self, dtype=np.int64)
    active = np.bitwise_or.reduce(np.where(batch.zmember, anc_self[None, :], 0), axis=1)
    a, b, z = batch.a, batch.b, batch.zmask
    it, co = interior[a, b], collider[a, b]
    blocked = ((it & ~co & z) != 0) | ((co & ~active) != 0)
    separated = (comp[a] != comp[b]) | blocked
    return (~separated).astype(np.int8)
