import json

import pytest

from causalmerge.bounds import BoundSpec, ClassSpec, binary_bound, vc_upper
from causalmerge.cli import dumps
from causalmerge.errors import ConfigError
from causalmerge.experiment import (
    SCHEMA_VERSION,
    ExperimentConfig,
    SearchSettings,
    run_experiment,
    run_seed,
)
from causalmerge.graphs import model_from_json
from causalmerge.predictors import predict_ci
from causalmerge.synth import query_universe

SMALL = dict(cls="polytree", n=6, l=2000, k_train=40, k_test=20, seeds=(0, 1),
             search=SearchSettings("local", 200, 2))


def test_config_defaults_and_json_round_trip():
    cfg = ExperimentConfig()
    assert (cfg.cls, cfg.n, cfg.l, cfg.k_train, cfg.k_test, cfg.eta) == ("polytree", 15, 10_000, 2000, 2000, 0.1)
    obj = cfg.to_json()
    assert obj["schema"] == SCHEMA_VERSION and obj["class"] == "polytree"
    assert ExperimentConfig.from_json(json.loads(json.dumps(obj))) == cfg


@pytest.mark.parametrize("bad", [
    {"cls": "path"},
    {"n": 2},
    {"k_train": 0},
    {"k_test": -1},
    {"eta": 1.0},
    {"alpha": 0.0},
    {"seeds": ()},
    {"seeds": (1, 1)},
    {"row_mode": "mixed"},
    {"labeling": "magic"},
    {"cond_sizes": (5,)},
    {"n": 5, "k_train": 100, "k_test": 100},
    {"l": 3},
    {"workers": 0},
    {"search": {"method": "anneal"}},
    {"search": {"budget": 0}},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**{**SMALL, **bad})


def test_config_from_json_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json({"n": 5})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json({"schema": SCHEMA_VERSION, "bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json([1, 2])


def test_report_fields_and_bound():
    rep = run_experiment(ExperimentConfig(**SMALL))
    assert [r.seed for r in rep.results] == [0, 1]
    eps = binary_bound(BoundSpec(40, vc_upper(ClassSpec("polytree", 6)), 0.1))
    for r in rep.results:
        assert 0.0 <= r.train_error <= 1.0 and 0.0 <= r.test_error <= 1.0
        assert r.bound_epsilon == eps
        assert r.bound_satisfied == (r.test_error <= r.train_error + eps)
    agg = rep.to_json()["aggregate"]
    assert agg["seeds"] == 2 and agg["satisfaction_rate"] == rep.satisfied_count / 2


def test_k_test_zero():
    rep = run_experiment(ExperimentConfig(**{**SMALL, "k_test": 0}))
    for r in rep.results:
        assert r.test_error is None and r.bound_satisfied is None
    agg = rep.to_json()["aggregate"]
    assert agg["satisfaction_rate"] is None and agg["mean_test_error"] is None


def test_oracle_exhaustive_realizable_case():
    # 18 of the 24 queries on 4 variables pin down the polytree's independences
    cfg = ExperimentConfig(cls="polytree", n=4, l=100, k_train=18, k_test=6, seeds=range(10),
                           labeling="oracle", search=SearchSettings("exhaustive"))
    for r in run_experiment(cfg).results:
        assert r.train_error == 0.0 and r.test_error == 0.0


def test_oracle_train_error_zero_for_dags():
    with pytest.warns(UserWarning, match="below h"):
        cfg = ExperimentConfig(cls="dag", n=4, l=100, k_train=12, k_test=12, seeds=range(5),
                               labeling="oracle", search=SearchSettings("exhaustive"))
        results = run_experiment(cfg).results
    for r in results:
        assert r.train_error == 0.0
        truth, model = model_from_json(r.truth), model_from_json(r.model)
        disagree = sum(predict_ci(truth, q).value != predict_ci(model, q).value
                       for q in query_universe("cond_indep", 4, (0, 1, 2)))
        assert r.test_error <= disagree / 12


def test_bit_reproducible_reports():
    cfg = ExperimentConfig(**{**SMALL, "row_mode": "disjoint", "l": 200})
    assert dumps(run_experiment(cfg).to_json()) == dumps(run_experiment(cfg).to_json())
    single = run_seed(cfg, 1)
    assert single == run_experiment(cfg).results[1]


def test_parallel_matches_serial():
    cfg = ExperimentConfig(**SMALL)
    par = ExperimentConfig(**{**SMALL, "workers": 2, "seeds": (1, 0)})
    assert run_experiment(par).results == run_experiment(cfg).results
