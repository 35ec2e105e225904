import itertools
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalmerge.errors import ConfigError, InputError, ModelOutsideClassError, QueryError
from causalmerge.graphs import Dag, PathModel, PathSignModel, common_causes, enumerate_models
from causalmerge.predictors import (
    CIBatch,
    Outcome,
    Query,
    predict,
    predict_anm_admissible,
    predict_ci,
    predict_corr,
    predict_direction,
    predict_sign,
)
from causalmerge.synth import query_universe, sample_graph

from oracles import moral_dsep

CHAIN = Dag(3, [(0, 1), (1, 2)])
COLLIDER = Dag(3, [(0, 1), (2, 1)])
FORK = Dag(3, [(0, 1), (0, 2)])


def ci(i, j, *z):
    return Query("cond_indep", (i, j), z)


def test_predict_ci_examples():
    assert predict_ci(CHAIN, ci(0, 2, 1)).value == 0
    assert predict_ci(CHAIN, ci(0, 2, 1)).label == "independent"
    assert predict_ci(CHAIN, ci(0, 1)).value == 1
    assert predict_ci(COLLIDER, ci(0, 2, 1)).value == 1
    assert predict_ci(COLLIDER, ci(0, 2, 1)).label == "dependent"


def test_predict_ci_rejects_wrong_kind():
    with pytest.raises(QueryError):
        predict_ci(CHAIN, Query("sign", (0, 1)))


def test_query_normalization():
    assert Query("cond_indep", (2, 0), (3, 1)) == Query("cond_indep", (0, 2), (1, 3))
    assert Query("sign", (1, 0)) == Query("sign", (0, 1))
    assert Query("direction", (1, 0)).vars == (1, 0)
    with pytest.raises(InputError):
        Query("cond_indep", (0, 1), (1,))
    with pytest.raises(InputError):
        Query("sign", (0, 1, 2))
    with pytest.raises(InputError):
        Query("bogus", (0, 1))
    q = Query("cond_indep", (0, 3), (1,))
    assert Query.from_json(q.to_json()) == q


def test_outcome_validation():
    with pytest.raises(InputError):
        Outcome("binary", 2)
    with pytest.raises(InputError):
        Outcome("sign", 0)
    with pytest.raises(InputError):
        Outcome("real", float("nan"))


def test_predict_direction():
    assert predict_direction(CHAIN, 0, 2).value == 1
    assert predict_direction(CHAIN, 2, 0).value == -1
    with pytest.raises(ModelOutsideClassError):
        predict_direction(Dag(2), 0, 1)


def test_predict_sign_examples():
    assert predict_sign(PathSignModel((0, 1, 2), (1, -1)), 0, 2).value == -1
    assert predict_sign(PathSignModel((0, 1, 2), (-1, -1)), 0, 2).value == 1
    assert predict_sign(PathSignModel((2, 0, 1), (1, 1)), 2, 1).value == 1
    with pytest.raises(QueryError):
        predict_sign(PathSignModel((0, 1, 2), (1, 1)), 1, 1)
    with pytest.raises(QueryError):
        predict_sign(CHAIN, 0, 1)


def test_predict_corr_examples():
    m = PathModel((0, 1, 2, 3), (0.5, -0.5, 0.8))
    assert predict_corr(m, 0, 3).value == pytest.approx(0.5 * -0.5 * 0.8, abs=1e-15)
    assert predict_corr(m, 1, 2).value == -0.5
    assert predict_corr(m, 3, 0) == predict_corr(m, 0, 3)
    with pytest.raises(QueryError):
        predict_corr(m, 1, 1)


def test_predict_anm_examples():
    for reading in ("standard", "literal"):
        assert predict_anm_admissible(CHAIN, (0, 1, 2), reading).value == 1
        assert predict_anm_admissible(FORK, (1, 2), reading).value == 0
    assert predict_anm_admissible(CHAIN, (1, 0)).value == 0
    # common ancestor inside the tuple: only the literal reading objects
    assert predict_anm_admissible(FORK, (0, 1, 2), "standard").value == 1
    assert predict_anm_admissible(FORK, (0, 1, 2), "literal").value == 0
    with pytest.raises(ConfigError):
        predict_anm_admissible(CHAIN, (0, 1), "other")


def _anm_oracle(dag, tup, reading):
    # common cause via path enumeration in networkx
    g = nx.DiGraph(list(dag.edges))
    g.add_nodes_from(range(dag.n))

    def reaches_avoiding(c, t, avoid):
        h = g.subgraph(v for v in g if v != avoid)
        return nx.has_path(h, c, t)

    for x, y in itertools.combinations(range(len(tup)), 2):
        a, b = tup[x], tup[y]
        causes = {c for c in range(dag.n) if c not in (a, b)
                  and reaches_avoiding(c, a, b) and reaches_avoiding(c, b, a)}
        if reading == "standard":
            causes -= set(tup)
        if causes or nx.has_path(g, b, a):
            return 0
    return 1


def test_anm_matches_oracle_on_all_dags_n4():
    for g in enumerate_models("dag", 4):
        for tup in itertools.permutations(range(4), 3):
            for reading in ("standard", "literal"):
                assert predict_anm_admissible(g, tup, reading).value == _anm_oracle(g, tup, reading)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(3, 7), data=st.data())
def test_anm_standard_closure_is_admissible(seed, n, data):
    g = sample_graph("dag", n, seed, {"edge_prob": 0.5})
    members = set(data.draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=n, unique=True)))
    while True:
        extra = set()
        for a, b in itertools.combinations(sorted(members), 2):
            extra |= common_causes(g, a, b)
        if extra <= members:
            break
        members |= extra
    order = [v for v in nx.topological_sort(nx.DiGraph(list(g.edges))) if v in members]
    order += sorted(members - set(order))
    assert predict_anm_admissible(g, tuple(order), "standard").value == 1


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(3, 7), data=st.data())
def test_ci_invariances(seed, n, data):
    g = sample_graph("dag", n, seed, {"edge_prob": 0.4})
    i, j = data.draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=2, unique=True))
    z = data.draw(st.lists(st.sampled_from([v for v in range(n) if v not in (i, j)]), unique=True))
    ref = predict_ci(g, Query("cond_indep", (i, j), tuple(z))).value
    assert predict_ci(g, Query("cond_indep", (j, i), tuple(reversed(z)))).value == ref
    assert ref == (0 if moral_dsep(g, i, j, z) else 1)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 7))
def test_direction_antisymmetry(seed, n):
    g = sample_graph("dag", n, seed, {"edge_prob": 1.0})
    for i, j in itertools.permutations(range(n), 2):
        assert predict_direction(g, i, j).value == -predict_direction(g, j, i).value


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 8), data=st.data())
def test_sign_and_product_rule(n, data):
    perm = data.draw(st.permutations(range(n)))
    r = data.draw(st.lists(st.floats(0.05, 1.0).flatmap(lambda x: st.sampled_from([x, -x])),
                           min_size=n - 1, max_size=n - 1))
    m = PathModel(perm, r)
    s = PathSignModel(perm, [1 if x > 0 else -1 for x in r])
    for a, b in itertools.combinations(range(n), 2):
        assert predict_sign(s, a, b).value == predict_sign(m, a, b).value
        assert predict_sign(m, a, b).value == np.sign(predict_corr(m, a, b).value)
    # transitivity along the path
    pos = list(perm)
    for x, y, z in itertools.combinations(range(n), 3):
        a, b, c = pos[x], pos[y], pos[z]
        lhs = predict_corr(m, a, c).value
        rhs = predict_corr(m, a, b).value * predict_corr(m, b, c).value
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


def test_ci_batch_matches_single_queries():
    queries = query_universe("cond_indep", 5, cond_sizes=(0, 1, 2, 3))
    batch = CIBatch(queries, 5)
    for cls in ("dag", "polytree"):
        for k, g in enumerate(enumerate_models(cls, 5)):
            if k % 37:
                continue
            ref = np.array([predict_ci(g, q).value for q in queries])
            assert np.array_equal(batch.evaluate(g), ref)


def test_ci_batch_on_path_models():
    queries = query_universe("cond_indep", 4, cond_sizes=(0, 1, 2))
    batch = CIBatch(queries, 4)
    m = PathModel((2, 0, 3, 1), (0.5, 0.5, 0.5))
    assert list(batch.evaluate(m)) == [predict(m, q).value for q in queries]


def test_predict_dispatch():
    m = PathModel((0, 1, 2), (0.5, -0.4))
    assert predict(m, Query("corr", (0, 2))).value == pytest.approx(-0.2)
    assert predict(m, Query("sign", (0, 2))).value == -1
    assert predict(m, Query("cond_indep", (0, 2), (1,))).value == 0
    assert predict(CHAIN, Query("direction", (2, 0))).value == -1
    assert predict(CHAIN, Query("anm", (0, 2))).value == 1
    assert math.isclose(float(predict(m, Query("corr", (0, 1)))), 0.5)
