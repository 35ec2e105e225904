"""Empirical-risk minimization over causal model classes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyQuerySetError, InputError
from .graphs import (
    Dag,
    PathModel,
    PathSignModel,
    Polytree,
    _check_cap,
    enumerate_models,
    is_acyclic,
)
from .predictors import COND_INDEP, CORR, CIBatch, Outcome, Query, outcome_for, predict
from .synth import sample_graph

log = logging.getLogger(__name__)

LOCAL_CLASSES = ("dag", "polytree", "path", "path_sign", "direction")

# fallback adjacent correlation for path edges no observed pair spans
UNCOVERED_EDGE_CORR = 0.5
ZERO_CORR_CLAMP = 1e-9


@dataclass(frozen=True)
class LabeledQuery:
    """A query with the outcome a test produced on its dataset."""

    query: Query
    outcome: Outcome

    def __post_init__(self):
        object.__setattr__(self, "outcome", outcome_for(self.query, self.outcome))

    def to_json(self):
        return {"query": self.query.to_json(), "outcome": self.outcome.value}

    @classmethod
    def from_json(cls, obj):
        try:
            q = Query.from_json(obj["query"])
            out = obj["outcome"]
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed labeled query: {exc}") from exc
        if isinstance(out, dict):
            out = out.get("value")
        return cls(q, out)


@dataclass(frozen=True)
class FitResult:
    cls: str
    model: object
    train_error: float
    evaluations: int

    def to_json(self):
        return {
            "class": self.cls,
            "model": self.model.to_json(),
            "train_error": self.train_error,
            "evaluations": self.evaluations,
        }


class _Scorer:
    """Pre-packed labeled queries; ``score(model)`` returns L(M)."""

    def __init__(self, qs: Sequence[LabeledQuery], n: int, weights: dict | None = None):
        qs = list(qs)
        if not qs:
            raise EmptyQuerySetError("empirical error of an empty query list is undefined")
        self.n = n
        self.size = len(qs)
        if weights:
            unknown = set(weights) - {lq.query.kind for lq in qs}
            if unknown:
                log.debug("weights given for absent kinds %s", sorted(unknown))
            self.w = np.array([float(weights.get(lq.query.kind, 1.0)) for lq in qs])
            if np.any(self.w < 0) or self.w.sum() <= 0:
                raise InputError("per-kind weights must be non-negative with a positive total")
        else:
            self.w = None
        ci = [k for k, lq in enumerate(qs) if lq.query.kind == COND_INDEP]
        self.ci_idx = np.array(ci, dtype=np.int64)
        self.ci_obs = np.array([qs[k].outcome.value for k in ci], dtype=np.int8)
        self.ci_batch = CIBatch([qs[k].query for k in ci], n) if ci else None
        self.other = [(k, lq.query, lq.outcome.value, lq.outcome.kind)
                      for k, lq in enumerate(qs) if lq.query.kind != COND_INDEP]
        self.corr_pairs = [(lq.query.vars[0], lq.query.vars[1], lq.outcome.value)
                           for lq in qs if lq.query.kind == CORR]

    def losses(self, model) -> np.ndarray:
        loss = np.zeros(self.size)
        if self.ci_batch is not None:
            loss[self.ci_idx] = self.ci_batch.evaluate(model) != self.ci_obs
        for k, q, obs, kind in self.other:
            pred = predict(model, q).value
            loss[k] = abs(pred - obs) if kind == "real" else float(pred != obs)
        return loss

    def score(self, model) -> float:
        loss = self.losses(model)
        if self.w is None:
            return float(loss.mean())
        return float(self.w @ loss / self.w.sum())


def empirical_error(model, qs: Sequence[LabeledQuery], weights: dict | None = None) -> float:
    """Mean absolute deviation between predicted and observed outcomes.

    Binary and sign mismatches cost 1, real outcomes cost ``|difference|``.
    ``weights`` maps query kinds to weights for a weighted mean; by default
    every query counts equally.
    """
    return _Scorer(qs, model.n, weights).score(model)


# -- path parameters -------------------------------------------------------------


@dataclass(frozen=True)
class PathParams:
    """Adjacent correlations fitted for a fixed path order.

    ``uncovered_edges`` lists path positions k (edge k -- k+1) no observed
    pair spans; they fall back to ``UNCOVERED_EDGE_CORR``. ``sign_conflicts``
    lists observed pairs whose sign disagrees with the recovered signs.
    """

    perm: tuple
    adj_corr: tuple
    uncovered_edges: tuple = ()
    sign_conflicts: tuple = ()
    zero_clamped: bool = False

    @property
    def model(self) -> PathModel:
        return PathModel(self.perm, self.adj_corr)


def fit_path_params(perm: Sequence[int], corr_pairs: Sequence[tuple[int, int, float]]) -> PathParams:
    """Least-squares fit of adjacent correlations from observed pairwise correlations.

    Magnitudes: ``log|corr(i, j)|`` is the sum of per-edge ``log|r|`` over the
    path interval between i and j, which is linear, so the per-edge values
    are solved by least squares and clamped to ``<= 0``.

    Signs: every pair fixes the product of the node signs at its two
    positions. Node signs are propagated through the graph of observed pairs
    by majority vote; a tied vote keeps the sign of the nearest already
    signed position, so the edges in between get +1.
    """
    perm = tuple(int(v) for v in perm)
    n = len(perm)
    if sorted(perm) != list(range(n)):
        raise InputError(f"{perm!r} is not a permutation")
    corr_pairs = list(corr_pairs)
    if not corr_pairs:
        raise InputError("fit_path_params needs at least one observed pair")
    pos = {v: k for k, v in enumerate(perm)}
    m = n - 1
    rows, rhs, pairs = [], [], []
    zero_clamped = False
    for i, j, c in corr_pairs:
        i, j, c = int(i), int(j), float(c)
        if i == j or i not in pos or j not in pos:
            raise InputError(f"invalid pair ({i}, {j}) for a path on {n} nodes")
        if not math.isfinite(c) or abs(c) > 1.0:
            raise InputError(f"observed correlation {c} outside [-1, 1]")
        if c == 0.0:
            zero_clamped = True
            c = ZERO_CORR_CLAMP
        a, b = sorted((pos[i], pos[j]))
        row = np.zeros(m)
        row[a:b] = 1.0
        rows.append(row)
        rhs.append(math.log(abs(c)))
        pairs.append((a, b, 1 if c > 0 else -1, (i, j)))
    if zero_clamped:
        log.warning("zero observed correlation clamped to magnitude %g", ZERO_CORR_CLAMP)

    A = np.array(rows)
    covered = A.any(axis=0) if m else np.zeros(0, dtype=bool)
    beta = np.full(m, math.log(UNCOVERED_EDGE_CORR))
    if covered.any():
        sol, *_ = np.linalg.lstsq(A[:, covered], np.array(rhs), rcond=None)
        beta[covered] = np.minimum(sol, 0.0)
    uncovered = tuple(int(k) for k in np.flatnonzero(~covered))
    if uncovered:
        log.warning("path edges %s not covered by any pair; using r=%g", uncovered, UNCOVERED_EDGE_CORR)

    node_sign = _propagate_signs(n, pairs)
    edge_sign = [node_sign[k] * node_sign[k + 1] for k in range(m)]
    conflicts = tuple(ij for a, b, s, ij in pairs if node_sign[a] * node_sign[b] != s)
    adj = tuple(float(s * math.exp(x)) for s, x in zip(edge_sign, beta))
    return PathParams(perm, adj, uncovered, conflicts, zero_clamped)


def _propagate_signs(n, pairs):
    nbrs = [[] for _ in range(n)]
    for a, b, s, _ in pairs:
        nbrs[a].append((b, s))
        nbrs[b].append((a, s))
    sign = [0] * n

    def fallback(p):
        for d in range(1, n):
            for q in (p - d, p + d):
                if 0 <= q < n and sign[q]:
                    return sign[q]
        return 1

    for root in range(n):
        if sign[root]:
            continue
        sign[root] = fallback(root)
        frontier = [root]
        while frontier:
            nxt = []
            for p in frontier:
                for q, _ in nbrs[p]:
                    if sign[q]:
                        continue
                    vote = sum(sign[r] * s for r, s in nbrs[q] if sign[r])
                    sign[q] = fallback(q) if vote == 0 else (1 if vote > 0 else -1)
                    nxt.append(q)
            frontier = nxt
    return sign


# -- exhaustive search -----------------------------------------------------------


def _path_refit(scorer: _Scorer, perm) -> PathModel:
    if not scorer.corr_pairs:
        raise InputError("the path class needs corr queries to fit its parameters")
    if len(perm) == 1:
        return PathModel(perm, ())
    return fit_path_params(perm, scorer.corr_pairs).model


def fit_exhaustive(cls: str, n: int, qs: Sequence[LabeledQuery], weights: dict | None = None) -> FitResult:
    """Score every model of the class; the first minimizer in canonical order wins."""
    _check_cap(cls, n)
    scorer = _Scorer(qs, n, weights)
    best, best_err, count = None, math.inf, 0
    for model in enumerate_models(cls, n):
        if cls == "path":
            model = _path_refit(scorer, model.perm)
        err = scorer.score(model)
        count += 1
        if err < best_err:
            best, best_err = model, err
    return FitResult(cls, best, best_err, count)


# -- local search ----------------------------------------------------------------


def _chain(perm) -> Dag:
    return Dag._trusted(len(perm), zip(perm, perm[1:]))


def _perm_of_chain(dag: Dag) -> tuple:
    child = {p: c for p, c in dag.edges}
    start = (set(range(dag.n)) - set(child.values())).pop()
    out = [start]
    while out[-1] in child:
        out.append(child[out[-1]])
    return tuple(out)


def _random_model(cls, n, rng, scorer):
    if cls == "dag":
        p = min(0.5, 2.0 / max(n - 1, 1))
        return sample_graph("dag", n, rng, {"edge_prob": p})
    if cls == "polytree":
        return sample_graph("polytree", n, rng)
    perm = tuple(int(v) for v in rng.permutation(n))
    if cls == "path":
        return _path_refit(scorer, perm)
    if cls == "path_sign":
        return PathSignModel(perm, tuple(int(s) for s in rng.choice((-1, 1), n - 1)))
    return _chain(perm)


def _components(n, edges):
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        parent[find(a)] = find(b)
    return [find(v) for v in range(n)]


def _propose_dag(model: Dag, rng):
    n = model.n
    i, j = (int(x) for x in rng.choice(n, 2, replace=False))
    edges = set(model.edges)
    if (j, i) in edges:
        i, j = j, i
    if (i, j) in edges:
        edges.remove((i, j))
        if rng.random() < 0.5:
            edges.add((j, i))
    else:
        edges.add((i, j))
    if not is_acyclic(n, edges):
        return None
    return Dag._trusted(n, edges)


def _propose_polytree(model: Dag, rng):
    n = model.n
    edges = list(model.sorted_edges)
    m = len(edges)
    u = rng.random()
    if m and u < 0.3:
        k = int(rng.integers(m))
        a, b = edges[k]
        edges[k] = (b, a)
    elif m and u < 0.85:
        k = int(rng.integers(m))
        a, b = edges.pop(k)
        comp = _components(n, edges)
        left = [v for v in range(n) if comp[v] == comp[a]]
        right = [v for v in range(n) if comp[v] == comp[b]]
        x, y = int(rng.choice(left)), int(rng.choice(right))
        new = (x, y) if rng.random() < 0.5 else (y, x)
        if new == (a, b):
            return None
        edges.append(new)
    elif m < n - 1 and (m == 0 or u < 0.93):
        comp = _components(n, edges)
        x, y = (int(v) for v in rng.choice(n, 2, replace=False))
        if comp[x] == comp[y]:
            return None
        edges.append((x, y))
    elif m:
        edges.pop(int(rng.integers(m)))
    else:
        return None
    return Polytree._trusted(n, edges)


def _propose_perm(perm, rng):
    n = len(perm)
    perm = list(perm)
    if rng.random() < 0.5:
        k = int(rng.integers(n - 1))
        perm[k], perm[k + 1] = perm[k + 1], perm[k]
    else:
        a, b = sorted(int(x) for x in rng.choice(n, 2, replace=False))
        perm[a:b + 1] = perm[a:b + 1][::-1]
    return tuple(perm)


def _propose(cls, model, rng, scorer):
    if model.n < 2:
        return None
    if cls == "dag":
        return _propose_dag(model, rng)
    if cls == "polytree":
        return _propose_polytree(model, rng)
    if cls == "path_sign":
        if rng.random() < 1 / 3:
            s = list(model.adj_sign)
            k = int(rng.integers(len(s)))
            s[k] = -s[k]
            return PathSignModel(model.perm, tuple(s))
        perm = _propose_perm(model.perm, rng)
        return PathSignModel(perm, model.adj_sign)
    if cls == "path":
        return _path_refit(scorer, _propose_perm(model.perm, rng))
    return _chain(_propose_perm(_perm_of_chain(model), rng))


def fit_local(cls: str, n: int, qs: Sequence[LabeledQuery], budget: int = 1000, restarts: int = 1,
              seed=None, weights: dict | None = None) -> FitResult:
    """Hill climbing with random restarts.

    Each restart starts from a random model and makes ``budget`` random move
    proposals, accepting only strict improvements (and stopping early at
    zero error). Moves: dag -- add/remove/reverse one edge keeping
    acyclicity; polytree -- reorient one edge, or cut one edge and reconnect
    the two parts elsewhere (plus edge insertion/removal between forest
    components); path classes -- adjacent transposition or segment reversal
    of the node order (path refits its correlations, path_sign may also flip
    one sign). Restarts are merged by (error, canonical model order, restart
    index), so the result depends only on ``seed``, ``budget`` and
    ``restarts``.
    """
    if cls not in LOCAL_CLASSES:
        raise InputError(f"unknown model class {cls!r}; expected one of {LOCAL_CLASSES}")
    if budget < 1 or restarts < 1:
        raise InputError("budget and restarts must be >= 1")
    if not isinstance(n, int) or n < 1:
        raise InputError(f"n must be a positive integer, got {n!r}")
    scorer = _Scorer(qs, n, weights)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(restarts)
    found = []
    evaluations = 0
    for r, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        model = _random_model(cls, n, rng, scorer)
        err = scorer.score(model)
        evaluations += 1
        for _ in range(budget):
            if err == 0.0:
                break
            cand = _propose(cls, model, rng, scorer)
            if cand is None:
                continue
            cand_err = scorer.score(cand)
            evaluations += 1
            if cand_err < err:
                model, err = cand, cand_err
        found.append((err, model.key(), r, model))
    err, _, _, model = min(found, key=lambda t: t[:3])
    return FitResult(cls, model, err, evaluations)
