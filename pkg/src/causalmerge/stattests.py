"""Statistical tests and estimators that map a dataset to an outcome."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import (
    ConfigError,
    DegenerateDataError,
    DegenerateSignError,
    InputError,
    InsufficientDataError,
    QueryError,
)
from .predictors import (
    ANM,
    COND_INDEP,
    CORR,
    DIRECTION,
    SIGN,
    Outcome,
    Query,
    ci_outcome,
    predict_anm_admissible,
    predict_direction,
)


class Dataset:
    """An ``l x k`` observation matrix whose columns are global variables ``vars``.

    ``row_ids`` optionally records which rows of a parent sample the data
    came from (set by slicing).
    """

    def __init__(self, data, vars: Sequence[int], row_ids=None, names=None):
        arr = np.array(data, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise InputError(f"data must be a 2-d matrix, got shape {arr.shape}")
        vars = tuple(int(v) for v in vars)
        if arr.shape[0] < 1:
            raise InputError("a dataset needs at least one row")
        if arr.shape[1] != len(vars):
            raise InputError(f"{arr.shape[1]} columns but {len(vars)} variable indices")
        if len(set(vars)) != len(vars) or any(v < 0 for v in vars):
            raise InputError(f"variable indices must be distinct and non-negative: {vars}")
        if not np.all(np.isfinite(arr)):
            raise InputError("dataset contains non-finite values")
        arr.setflags(write=False)
        self.data = arr
        self.vars = vars
        self.row_ids = None if row_ids is None else np.asarray(row_ids, dtype=np.int64)
        self.names = None if names is None else tuple(names)
        self._col = {v: k for k, v in enumerate(vars)}

    @property
    def l(self) -> int:
        return self.data.shape[0]

    @property
    def k(self) -> int:
        return self.data.shape[1]

    def column(self, v: int) -> np.ndarray:
        try:
            return self.data[:, self._col[v]]
        except KeyError:
            raise InputError(f"variable {v} is not in this dataset {self.vars}") from None

    def columns(self, vs: Sequence[int]) -> np.ndarray:
        return np.column_stack([self.column(v) for v in vs]) if vs else np.empty((self.l, 0))

    def project(self, vs: Sequence[int]) -> "Dataset":
        return Dataset(self.columns(vs), vs, row_ids=self.row_ids)

    def __repr__(self):
        return f"Dataset(l={self.l}, vars={self.vars})"


@dataclass(frozen=True)
class TestConfig:
    """Tunable confidence settings.

    alpha : significance level of the Fisher-z test.
    min_abs_corr : |r| below this makes the sign test refuse to answer.
    """

    __test__ = False  # not a pytest class

    alpha: float = 0.05
    min_abs_corr: float = 0.02

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0,1), got {self.alpha}")
        if self.min_abs_corr < 0:
            raise ConfigError(f"min_abs_corr must be >= 0, got {self.min_abs_corr}")


def _corr_of(x, y):
    x = x - x.mean()
    y = y - y.mean()
    sxx, syy = float(x @ x), float(y @ y)
    scale = max(float(np.abs(x).max(initial=0.0)), float(np.abs(y).max(initial=0.0)), 1.0)
    # relative floor so round-off residue is not mistaken for variance
    floor = (1e-12 * scale) ** 2 * len(x)
    if sxx <= floor or syy <= floor:
        raise DegenerateDataError("zero-variance column")
    r = float(x @ y) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def pearson_corr(d: Dataset, i: int, j: int) -> float:
    return _corr_of(d.column(i), d.column(j))


def partial_corr(d: Dataset, i: int, j: int, cond: Sequence[int] = ()) -> float:
    """Correlation of the residuals of ``i`` and ``j`` after least-squares regression on ``cond``."""
    cond = tuple(cond)
    if not cond:
        return pearson_corr(d, i, j)
    if i in cond or j in cond or i == j:
        raise QueryError("partial correlation needs two distinct variables outside the conditioning set")
    if d.l <= len(cond) + 2:
        raise DegenerateDataError(f"{d.l} rows cannot support regression on {len(cond)} variables")
    design = np.column_stack([np.ones(d.l), d.columns(cond)])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise DegenerateDataError("singular regression design")
    targets = np.column_stack([d.column(i), d.column(j)])
    coef, *_ = np.linalg.lstsq(design, targets, rcond=None)
    resid = targets - design @ coef
    return _corr_of(resid[:, 0], resid[:, 1])


def fisher_z_pvalue(r: float, l: int, n_cond: int) -> float:
    """Two-sided p-value of H0: partial correlation = 0."""
    dof = l - n_cond - 3
    if dof < 1:
        raise InsufficientDataError(f"Fisher z needs l >= |Z| + 4 (l={l}, |Z|={n_cond})")
    if abs(r) >= 1.0:
        return 0.0
    z = math.atanh(r) * math.sqrt(dof)
    return float(2.0 * stats.norm.sf(abs(z)))


def ci_test(d: Dataset, q: Query, cfg: TestConfig = TestConfig()) -> Outcome:
    """Fisher-z partial-correlation test; 0 (independent) iff p >= alpha."""
    if q.kind != COND_INDEP:
        raise QueryError(f"ci_test needs a cond_indep query, got {q.kind}")
    if d.l < len(q.cond) + 4:
        raise InsufficientDataError(f"Fisher z needs l >= |Z| + 4 (l={d.l}, |Z|={len(q.cond)})")
    r = partial_corr(d, q.vars[0], q.vars[1], q.cond)
    return ci_outcome(fisher_z_pvalue(r, d.l, len(q.cond)) < cfg.alpha)


def sign_test(d: Dataset, i: int, j: int, cfg: TestConfig = TestConfig()) -> Outcome:
    r = pearson_corr(d, i, j)
    if abs(r) < cfg.min_abs_corr or r == 0.0:
        raise DegenerateSignError(f"|corr|={abs(r):.3g} below min_abs_corr={cfg.min_abs_corr}")
    return Outcome("sign", 1 if r > 0 else -1)


def cumulant_direction_score(x: np.ndarray, y: np.ndarray) -> float:
    """Fourth-order cumulant asymmetry, positive when x -> y is favoured.

    For standardized x, y with correlation rho the score is
    ``sign(excess kurtosis of x) * rho * mean(x**3 y - x y**3)``; under a
    linear model x -> y with non-Gaussian noise it has the sign of
    ``rho**2 (1 - rho**2) |excess kurtosis of x|``. Heuristic and
    non-normative: it assumes cause and effect share the kurtosis sign.
    """
    x = (x - x.mean()) / x.std()
    y = (y - y.mean()) / y.std()
    rho = float(np.mean(x * y))
    kurt = float(np.mean(x**4) - 3.0)
    return float(np.sign(kurt) * rho * np.mean(x**3 * y - x * y**3))


DIRECTION_METHODS = ("cumulant", "oracle")


def direction_test(d: Dataset | None, i: int, j: int, method: str = "cumulant", model=None) -> Outcome:
    """+1 for inferred i -> j, -1 for j -> i.

    ``oracle`` answers from the ground-truth ``model`` by reachability;
    ``cumulant`` uses :func:`cumulant_direction_score`, with an exact zero
    broken towards the lower index as cause.
    """
    if method == "oracle":
        if model is None:
            raise ConfigError("the oracle direction test needs a ground-truth model")
        return predict_direction(model, i, j)
    if method != "cumulant":
        raise ConfigError(f"unknown direction method {method!r}; expected one of {DIRECTION_METHODS}")
    if i == j:
        raise QueryError("direction needs two distinct variables")
    try:
        score = cumulant_direction_score(d.column(i), d.column(j))
    except FloatingPointError as exc:
        raise DegenerateDataError(str(exc)) from exc
    if not math.isfinite(score):
        raise DegenerateDataError("direction score is not finite (zero-variance column?)")
    if score == 0.0:
        return Outcome("sign", 1 if i < j else -1)
    return Outcome("sign", 1 if score > 0 else -1)


def run_test(d: Dataset, q: Query, cfg: TestConfig = TestConfig(), model=None,
             direction_method: str = "cumulant") -> Outcome:
    """Apply the test/estimator matching ``q.kind`` to ``d``.

    ``anm`` has no data-driven test here: it is only answered by the oracle
    (``model`` required).
    """
    if q.kind == COND_INDEP:
        return ci_test(d, q, cfg)
    if q.kind == SIGN:
        return sign_test(d, *q.vars, cfg)
    if q.kind == CORR:
        return Outcome("real", pearson_corr(d, *q.vars))
    if q.kind == DIRECTION:
        return direction_test(d, *q.vars, method=direction_method, model=model)
    if q.kind == ANM:
        if model is None:
            raise ConfigError("no data-driven test exists for anm queries; pass a ground-truth model")
        return predict_anm_admissible(model, q.vars)
    raise QueryError(f"unknown query kind {q.kind!r}")


# -- I/O ------------------------------------------------------------------------


def read_dataset_csv(path, vars: Sequence[int] | None = None) -> Dataset:
    """Read a CSV with a header row of variable names.

    Without ``vars`` the columns are assumed to be variables ``0..k-1``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path} is empty") from None
        try:
            rows = [[float(x) for x in row] for row in reader if row]
        except ValueError as exc:
            raise InputError(f"{path}: non-numeric value ({exc})") from exc
    if vars is None:
        vars = range(len(header))
    return Dataset(np.array(rows, dtype=float).reshape(len(rows), len(header)), vars, names=header)


def write_dataset_csv(d: Dataset, path, names: Sequence[str] | None = None):
    names = names or d.names or [f"X{v}" for v in d.vars]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in d.data:
            w.writerow([format(float(x), ".17g") for x in row])


def read_manifest(path) -> list[Dataset]:
    """Load every dataset listed in a manifest JSON.

    The manifest is one ``{"file": ..., "vars": [...]}`` object or a list
    of them; file paths are resolved relative to the manifest.
    """
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    entries = obj if isinstance(obj, list) else [obj]
    out = []
    for e in entries:
        try:
            out.append(read_dataset_csv(path.parent / e["file"], e["vars"]))
        except (KeyError, TypeError) as exc:
            raise InputError(f"manifest entry {e!r} needs 'file' and 'vars'") from exc
    return out
