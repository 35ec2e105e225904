"""End-to-end generalization experiments: learn from observed subsets, predict unobserved ones."""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundSpec, ClassSpec, binary_bound, vc_upper
from .errors import ConfigError, InputError
from .predictors import COND_INDEP, predict_ci
from .search import LabeledQuery, fit_exhaustive, fit_local
from .stattests import TestConfig, ci_test
from .synth import ROW_MODES, random_sem, sample_data, sample_graph, sample_queries, query_universe

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXPERIMENT_CLASSES = ("polytree", "dag")
LABELINGS = ("fisher_z", "oracle")
SEARCH_METHODS = ("local", "exhaustive")


@dataclass(frozen=True)
class SearchSettings:
    method: str = "local"
    budget: int = 5000
    restarts: int = 2

    def __post_init__(self):
        if self.method not in SEARCH_METHODS:
            raise ConfigError(f"search method must be one of {SEARCH_METHODS}, got {self.method!r}")
        if self.budget < 1 or self.restarts < 1:
            raise ConfigError("search budget and restarts must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    """Pipeline parameters; see ``README.md`` for the JSON schema.

    ``l`` is the sample size of every per-query dataset. ``row_mode``
    ``shared`` projects one sample of ``l`` rows onto each query's
    variables; ``disjoint`` draws an independent sample per query.
    """

    cls: str = "polytree"
    n: int = 15
    l: int = 10_000
    k_train: int = 2000
    k_test: int = 2000
    eta: float = 0.1
    alpha: float = 0.05
    seeds: tuple = tuple(range(20))
    row_mode: str = "shared"
    labeling: str = "fisher_z"
    cond_sizes: tuple = (0, 1, 2)
    params: dict = field(default_factory=dict)
    coef_range: tuple = (0.5, 0.9)
    variant: str = "full"
    search: SearchSettings = SearchSettings()
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "cond_sizes", tuple(sorted({int(c) for c in self.cond_sizes})))
        object.__setattr__(self, "coef_range", tuple(float(c) for c in self.coef_range))
        if isinstance(self.search, dict):
            object.__setattr__(self, "search", _build(SearchSettings, self.search))
        if self.cls not in EXPERIMENT_CLASSES:
            raise ConfigError(f"experiment class must be one of {EXPERIMENT_CLASSES}, got {self.cls!r}")
        if not isinstance(self.n, int) or self.n < 3:
            raise ConfigError(f"n must be an integer >= 3, got {self.n!r}")
        if self.l < 1 or self.k_train < 1 or self.k_test < 0:
            raise ConfigError("need l >= 1, k_train >= 1 and k_test >= 0")
        if not 0 < self.eta < 1 or not 0 < self.alpha < 1:
            raise ConfigError("eta and alpha must lie in (0,1)")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be a non-empty list of distinct integers")
        if self.row_mode not in ROW_MODES:
            raise ConfigError(f"row_mode must be one of {ROW_MODES}")
        if self.labeling not in LABELINGS:
            raise ConfigError(f"labeling must be one of {LABELINGS}")
        if any(c < 0 or c > self.n - 2 for c in self.cond_sizes) or not self.cond_sizes:
            raise ConfigError(f"conditioning sizes must lie in 0..{self.n - 2}")
        if self.labeling == "fisher_z" and self.l < max(self.cond_sizes) + 4:
            raise ConfigError("l too small for the Fisher z test")
        size = len(query_universe(COND_INDEP, self.n, self.cond_sizes))
        if self.k_train + self.k_test > size:
            raise ConfigError(f"k_train + k_test = {self.k_train + self.k_test} exceeds the "
                              f"query universe of {size}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            TestConfig(self.alpha)
            BoundSpec(self.k_train, max(1.0, vc_upper(ClassSpec(self.cls, self.n))), self.eta,
                      variant=self.variant)
        except InputError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        out["class"] = out.pop("cls")
        for key in ("seeds", "cond_sizes", "coef_range"):
            out[key] = list(out[key])
        return {"schema": SCHEMA_VERSION, **out}

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("experiment config must be a JSON object")
        obj = dict(obj)
        schema = obj.pop("schema", None)
        if schema != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {schema!r}; expected {SCHEMA_VERSION}")
        if "class" in obj:
            obj["cls"] = obj.pop("class")
        return _build(cls, obj)


def _build(kind, obj):
    names = {f.name for f in dataclasses.fields(kind)}
    unknown = set(obj) - names
    if unknown:
        raise ConfigError(f"unknown {kind.__name__} fields: {sorted(unknown)}")
    try:
        return kind(**obj)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class SeedResult:
    seed: int
    train_error: float
    test_error: float | None
    bound_epsilon: float
    bound_satisfied: bool | None
    evaluations: int
    truth: dict
    model: dict

    def to_json(self):
        return dataclasses.asdict(self)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    results: list

    @property
    def satisfied_count(self) -> int:
        return sum(1 for r in self.results if r.bound_satisfied)

    @property
    def satisfaction_rate(self) -> float | None:
        if self.config.k_test == 0:
            return None
        return self.satisfied_count / len(self.results)

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "config": self.config.to_json(),
            "results": [r.to_json() for r in self.results],
            "aggregate": {
                "seeds": len(self.results),
                "bound_satisfied": self.satisfied_count if self.config.k_test else None,
                "satisfaction_rate": self.satisfaction_rate,
                "mean_train_error": float(np.mean([r.train_error for r in self.results])),
                "mean_test_error": (float(np.mean([r.test_error for r in self.results]))
                                    if self.config.k_test else None),
            },
        }


def _label(cfg, sem, truth, queries, stream):
    if cfg.labeling == "oracle":
        return [LabeledQuery(q, predict_ci(truth, q)) for q in queries]
    tcfg = TestConfig(cfg.alpha)
    if cfg.row_mode == "shared":
        base = sample_data(sem, cfg.l, stream)
        return [LabeledQuery(q, ci_test(base.project(q.variables), q, tcfg)) for q in queries]
    streams = stream.spawn(len(queries))
    out = []
    for q, s in zip(queries, streams):
        d = sample_data(sem, cfg.l, s).project(q.variables)
        out.append(LabeledQuery(q, ci_test(d, q, tcfg)))
    return out


def run_seed(cfg: ExperimentConfig, seed: int) -> SeedResult:
    """Generate truth, label train/test queries, fit on train, score on test."""
    s_graph, s_sem, s_train, s_test, s_query, s_search = np.random.SeedSequence(seed).spawn(6)
    params = dict(cfg.params)
    truth = sample_graph(cfg.cls, cfg.n, np.random.default_rng(s_graph), params)
    sem = random_sem(truth, np.random.default_rng(s_sem), cfg.coef_range)
    qrng = np.random.default_rng(s_query)
    train_q = sample_queries(COND_INDEP, cfg.n, cfg.k_train, qrng, cond_sizes=cfg.cond_sizes)
    test_q = sample_queries(COND_INDEP, cfg.n, cfg.k_test, qrng, exclusions=train_q,
                            cond_sizes=cfg.cond_sizes)
    train = _label(cfg, sem, truth, train_q, s_train)
    if cfg.search.method == "exhaustive":
        fit = fit_exhaustive(cfg.cls, cfg.n, train)
    else:
        fit = fit_local(cfg.cls, cfg.n, train, cfg.search.budget, cfg.search.restarts,
                        seed=s_search)
    h = max(1.0, vc_upper(ClassSpec(cfg.cls, cfg.n)))
    eps = binary_bound(BoundSpec(cfg.k_train, h, cfg.eta, variant=cfg.variant))
    test_error = satisfied = None
    if test_q:
        test = _label(cfg, sem, truth, test_q, s_test)
        preds = [predict_ci(fit.model, lq.query).value for lq in test]
        test_error = float(np.mean([p != lq.outcome.value for p, lq in zip(preds, test)]))
        satisfied = test_error <= fit.train_error + eps
    log.info("seed %d: train %.4f test %s eps %.4f", seed, fit.train_error, test_error, eps)
    return SeedResult(seed, fit.train_error, test_error, eps, satisfied, fit.evaluations,
                      truth.to_json(), fit.model.to_json())


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run every seed (in parallel with ``cfg.workers > 1``); results ordered by seed."""
    seeds = sorted(cfg.seeds)
    if cfg.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_seed, [cfg] * len(seeds), seeds))
    else:
        results = [run_seed(cfg, s) for s in seeds]
    return ExperimentReport(cfg, results)
