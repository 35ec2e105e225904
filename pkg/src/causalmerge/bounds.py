"""VC-dimension formulas, generalization bounds, sample-size inversion and shatter checks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DivergenceError, InputError
from .graphs import MODEL_CLASSES, _check_cap, enumerate_models
from .predictors import COND_INDEP, DIRECTION, SIGN, CIBatch, Query, predict
from .synth import query_universe

VARIANTS = ("full", "sqrt_only")
VC_CLASSES = ("dag", "polytree", "path_sign", "path_corr", "direction")


@dataclass(frozen=True)
class BoundSpec:
    """Inputs of the deviation terms.

    k : number of datasets; h : VC dimension; eta : failure probability;
    range : [A, B] for real-valued properties; variant : ``full`` keeps the
    leading factor 2 of the binary bound, ``sqrt_only`` drops it.
    """

    k: float
    h: float
    eta: float = 0.1
    range: tuple = (0.0, 1.0)
    variant: str = "full"

    def __post_init__(self):
        if not self.k >= 1 or not self.h >= 1:
            raise InputError(f"need k >= 1 and h >= 1, got k={self.k}, h={self.h}")
        if not 0.0 < self.eta < 1.0:
            raise InputError(f"eta must lie in (0,1), got {self.eta}")
        a, b = (float(x) for x in self.range)
        if not a < b:
            raise InputError(f"range needs A < B, got {self.range}")
        object.__setattr__(self, "range", (a, b))
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.k < self.h:
            warnings.warn(f"k={self.k} below h={self.h}; the bound is not informative there", stacklevel=3)


@dataclass(frozen=True)
class ClassSpec:
    cls: str
    n: int
    h_override: float | None = None

    def __post_init__(self):
        if self.cls not in VC_CLASSES:
            raise InputError(f"unknown class {self.cls!r}; expected one of {VC_CLASSES}")
        if not isinstance(self.n, int) or self.n < 1:
            raise InputError(f"n must be a positive integer, got {self.n!r}")


def vc_upper(cs: ClassSpec) -> float:
    """Upper bound on the VC dimension of the class on ``n`` variables.

    dag: ``n log2 n + n(n-1)/2`` (log2 of a bound on the number of DAGs);
    polytree: ``n (log2 n + 1)``; path_sign: ``n``; direction: ``n - 1``;
    path_corr: only O(n) is known, so ``h_override`` or ``4(n+1)``.
    """
    n = cs.n
    if cs.cls == "dag":
        return n * math.log2(n) + n * (n - 1) / 2
    if cs.cls == "polytree":
        return n * (math.log2(n) + 1)
    if cs.cls == "path_sign":
        return float(n)
    if cs.cls == "path_corr":
        return float(cs.h_override) if cs.h_override is not None else 4.0 * (n + 1)
    return float(n - 1)


def binary_bound(bs: BoundSpec) -> float:
    """Deviation term ``2 sqrt((h (ln(2k/h) + 1) - ln(eta/9)) / k)`` (halved for sqrt_only)."""
    rad = (bs.h * (math.log(2 * bs.k / bs.h) + 1) - math.log(bs.eta / 9)) / bs.k
    if rad < 0:
        raise InputError(f"k={bs.k} is too small relative to h={bs.h} for the bound to be defined")
    term = math.sqrt(rad)
    return 2.0 * term if bs.variant == "full" else term


def real_bound(bs: BoundSpec) -> float:
    """Deviation term ``(B - A) sqrt((h (ln(k/h) + 1) - ln(eta/4)) / k)``."""
    a, b = bs.range
    rad = (bs.h * (math.log(bs.k / bs.h) + 1) - math.log(bs.eta / 4)) / bs.k
    if rad < 0:
        raise InputError(f"k={bs.k} is too small relative to h={bs.h} for the bound to be defined")
    return (b - a) * math.sqrt(rad)


def _binary_at(k, h, eta, variant):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return binary_bound(BoundSpec(k, h, eta, variant=variant))


def required_k(h: float, eta: float, epsilon_target: float, variant: str = "full") -> int:
    """Smallest integer ``k >= ceil(h)`` with ``binary_bound <= epsilon_target``.

    The bound is strictly decreasing in k on ``k >= h/2``, so exponential
    bracketing followed by bisection finds the threshold.
    """
    if not epsilon_target > 0:
        raise InputError(f"epsilon_target must be > 0, got {epsilon_target}")
    if not h >= 1:
        raise InputError(f"h must be >= 1, got {h}")
    lo = math.ceil(h)
    if _binary_at(lo, h, eta, variant) <= epsilon_target:
        return lo
    hi = lo
    while _binary_at(hi, h, eta, variant) > epsilon_target:
        lo = hi
        hi *= 2
        if hi > 2**63:
            raise DivergenceError(f"no k below 2**63 reaches epsilon={epsilon_target}")
    # invariant: bound(lo) > eps >= bound(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _binary_at(mid, h, eta, variant) <= epsilon_target:
            hi = mid
        else:
            lo = mid
    assert _binary_at(hi, h, eta, variant) <= epsilon_target < _binary_at(hi - 1, h, eta, variant)
    return hi


def polytree_h(n: int) -> float:
    return n * (math.log2(n) + 1)


def possible_tests(n: int) -> int:
    """Number of single-conditioner independence queries ``n(n-1)(n-2)/2``."""
    return n * (n - 1) * (n - 2) // 2


FIGURE1_COLUMNS = ("n", "required_k_full", "required_k_sqrt_only", "possible_tests",
                   "ratio_full", "ratio_sqrt_only")


def figure1_curves(n_min: int = 10, n_max: int = 120, eta: float = 0.1,
                   epsilon_target: float = 0.1) -> list[dict]:
    """Required vs. available independence tests for polytrees on n variables.

    One row per n with both bound variants side by side; ``ratio`` is
    required_k / possible_tests.
    """
    if not 3 <= n_min <= n_max:
        raise InputError(f"need 3 <= n_min <= n_max, got {n_min}..{n_max}")
    rows = []
    for n in range(n_min, n_max + 1):
        h = polytree_h(n)
        row = {"n": n}
        total = possible_tests(n)
        for v in VARIANTS:
            row[f"required_k_{v}"] = required_k(h, eta, epsilon_target, v)
        row["possible_tests"] = total
        for v in VARIANTS:
            row[f"ratio_{v}"] = row[f"required_k_{v}"] / total
        rows.append({c: row[c] for c in FIGURE1_COLUMNS})
    return rows


# -- empirical shattering --------------------------------------------------------

# query kind whose binary outcome defines shattering for each enumerable class
SHATTER_KIND = {"dag": COND_INDEP, "polytree": COND_INDEP, "path": COND_INDEP,
                "path_sign": SIGN, "direction": DIRECTION}


def _binary_value(outcome) -> int:
    if outcome.kind == "real":
        raise InputError("shattering needs binary or sign queries")
    return 1 if outcome.value == 1 else 0


def behaviour_matrix(cls: str, n: int, queries: Sequence[Query]) -> np.ndarray:
    """Distinct rows of the 0/1 model-by-query prediction matrix (sign +1 -> 1)."""
    _check_cap(cls, n)
    queries = list(queries)
    for q in queries:
        if q.outcome_kind == "real":
            raise InputError(f"shattering needs binary or sign queries, got {q.kind}")
        q.check_range(n)
    if not queries:
        return np.zeros((1, 0), dtype=np.uint8)
    ci = [k for k, q in enumerate(queries) if q.kind == COND_INDEP]
    rest = [k for k, q in enumerate(queries) if q.kind != COND_INDEP]
    batch = CIBatch([queries[k] for k in ci], n) if ci else None
    rows = set()
    for m in enumerate_models(cls, n):
        row = np.zeros(len(queries), dtype=np.uint8)
        if batch is not None:
            row[ci] = batch.evaluate(m)
        for k in rest:
            row[k] = _binary_value(predict(m, queries[k]))
        rows.add(row.tobytes())
    return np.array([np.frombuffer(r, dtype=np.uint8) for r in sorted(rows)], dtype=np.uint8)


def _shattered(codes: np.ndarray, size: int) -> bool:
    return np.count_nonzero(np.bincount(codes, minlength=1 << size)) == 1 << size


def shatters(cls: str, n: int, queries: Sequence[Query]) -> bool:
    """True iff every labeling of ``queries`` is predicted by some model of the class."""
    queries = list(queries)
    if len(set(queries)) != len(queries):
        return False
    M = behaviour_matrix(cls, n, queries)
    if len(queries) > 62 or M.shape[0] < 1 << len(queries):
        return False
    codes = M.astype(np.int64) @ (1 << np.arange(len(queries), dtype=np.int64))
    return _shattered(codes, len(queries))


def default_universe(cls: str, n: int) -> list[Query]:
    return query_universe(SHATTER_KIND[cls], n)


def estimate_vc(cls: str, n: int, search_budget: int | None = None, seed=None,
                queries: Sequence[Query] | None = None) -> int:
    """Size of the largest shattered query set found; a lower bound on the VC dimension.

    Without ``search_budget`` the search is exhaustive: a depth-first walk
    over shattered sets in increasing index order, extending a set only by
    queries that extended its parent (shattered sets are closed under
    subsets). With a budget, ``search_budget`` randomized greedy passes are
    made instead.
    """
    if cls not in SHATTER_KIND:
        raise InputError(f"unknown class {cls!r}; expected one of {MODEL_CLASSES}")
    universe = list(queries) if queries is not None else default_universe(cls, n)
    if not universe:
        _check_cap(cls, n)
        return 0
    M = behaviour_matrix(cls, n, universe).astype(np.int64)
    if M.shape[0] < 2:
        return 0
    cols = M.T
    if search_budget is None:
        return _exhaustive_vc(M)
    rng = np.random.default_rng(seed)
    best = 0
    for _ in range(search_budget):
        codes = np.zeros(M.shape[0], dtype=np.int64)
        size = 0
        for q in rng.permutation(len(cols)):
            trial = codes * 2 + cols[q]
            if _shattered(trial, size + 1):
                codes, size = trial, size + 1
        best = max(best, size)
    return best


def _growth_cap(codes: np.ndarray, size: int) -> int:
    # every label class must still hold 2**extra models to split further
    smallest = int(np.bincount(codes, minlength=1 << size).min())
    return size + int(math.floor(math.log2(smallest))) if smallest else -1


def _exhaustive_vc(rows: np.ndarray) -> int:
    # complementary or identical columns are interchangeable for shattering
    canon = np.where(rows[:1, :] == 1, 1 - rows, rows)
    _, keep = np.unique(canon.T, axis=0, return_index=True)
    rows = rows[:, np.sort(keep)]
    cols = rows.T
    best = 0
    start = [q for q in range(len(cols)) if _shattered(cols[q], 1)]
    # stack entries: (codes, size, candidate extensions greater than the last member)
    stack = [(cols[q], 1, [c for c in start if c > q]) for q in reversed(start)]
    while stack:
        codes, size, cands = stack.pop()
        best = max(best, size)
        if size + len(cands) <= best or _growth_cap(codes, size) <= best:
            continue
        children = [(q, codes * 2 + cols[q]) for q in cands]
        children = [(q, c) for q, c in children if _shattered(c, size + 1)]
        valid = [q for q, _ in children]
        for idx in range(len(children) - 1, -1, -1):
            stack.append((children[idx][1], size + 1, valid[idx + 1:]))
    return best
