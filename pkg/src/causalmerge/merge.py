"""Merging marginal distributions with causal constraints into a joint model."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateDataError,
    InconsistencyError,
    InputError,
    QueryError,
    VacuousConditionWarning,
    ZeroMassWarning,
)
from .graphs import Dag, _check_cap, common_cause_free, enumerate_models, has_directed_path
from .predictors import COND_INDEP, Query

DEFAULT_TOL = 1e-9


def _vars(vs) -> tuple:
    vs = tuple(int(v) for v in vs)
    if len(set(vs)) != len(vs):
        raise InputError(f"duplicate variables in {vs}")
    return vs


class DiscreteDist:
    """Joint probability table; axis ``k`` belongs to variable ``vars[k]``."""

    def __init__(self, vars: Sequence[int], cards: Sequence[int], probs):
        self.vars = _vars(vars)
        self.cards = tuple(int(c) for c in cards)
        if len(self.cards) != len(self.vars) or any(c < 1 for c in self.cards):
            raise InputError("need one positive cardinality per variable")
        p = np.array(probs, dtype=float)
        if p.size != int(np.prod(self.cards)):
            raise InputError(f"{p.size} probabilities for cardinalities {self.cards}")
        p = p.reshape(self.cards)
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InputError("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise InputError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        self.probs = p

    def axis(self, v: int) -> int:
        try:
            return self.vars.index(v)
        except ValueError:
            raise QueryError(f"variable {v} not in distribution over {self.vars}") from None

    def marginal(self, keep: Sequence[int]) -> "DiscreteDist":
        """Sum out everything but ``keep``; axes follow the order of ``keep``."""
        keep = _vars(keep)
        axes = [self.axis(v) for v in keep]
        drop = [k for k in range(len(self.vars)) if k not in axes]
        # exact summation, so marginals do not depend on reduction order
        p = np.transpose(self.probs, axes + drop)
        if drop:
            flat = p.reshape(-1, int(np.prod(p.shape[len(axes):])))
            p = np.array([math.fsum(r) for r in flat]).reshape(p.shape[:len(axes)])
        return DiscreteDist._raw(keep, [self.cards[a] for a in axes], p)

    @classmethod
    def _raw(cls, vars, cards, probs):
        obj = cls.__new__(cls)
        obj.vars, obj.cards = tuple(vars), tuple(cards)
        obj.probs = np.asarray(probs, dtype=float).reshape(obj.cards)
        return obj

    def to_json(self):
        return {"vars": list(self.vars), "cards": list(self.cards),
                "probs": [float(x) for x in self.probs.ravel()]}

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(obj["vars"], obj["cards"], obj["probs"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed discrete distribution: {exc}") from exc

    def __repr__(self):
        return f"DiscreteDist(vars={self.vars}, cards={self.cards})"


class GaussianDist:
    """Multivariate normal over ``vars``."""

    def __init__(self, vars: Sequence[int], mean, cov):
        self.vars = _vars(vars)
        k = len(self.vars)
        mean = np.array(mean, dtype=float).reshape(-1)
        cov = np.array(cov, dtype=float)
        if mean.shape != (k,) or cov.shape != (k, k):
            raise InputError(f"mean/cov shapes {mean.shape}/{cov.shape} do not fit {k} variables")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InputError("mean and covariance must be finite")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max(initial=0))):
            raise InputError("covariance is not symmetric")
        if k and np.linalg.eigvalsh(cov).min() < -1e-10:
            raise InputError("covariance is not positive semi-definite")
        mean.setflags(write=False)
        cov.setflags(write=False)
        self.mean, self.cov = mean, cov

    def index(self, vs: Sequence[int]) -> list[int]:
        try:
            return [self.vars.index(v) for v in vs]
        except ValueError:
            raise QueryError(f"variables {list(vs)} not all in {self.vars}") from None

    def marginal(self, keep: Sequence[int]) -> "GaussianDist":
        idx = self.index(keep)
        return GaussianDist(keep, self.mean[idx], self.cov[np.ix_(idx, idx)])

    def to_json(self):
        return {"vars": list(self.vars), "mean": [float(x) for x in self.mean],
                "cov": [[float(x) for x in row] for row in self.cov]}

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(obj["vars"], obj["mean"], obj["cov"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed Gaussian distribution: {exc}") from exc

    def __repr__(self):
        return f"GaussianDist(vars={self.vars})"


def dist_from_json(obj):
    if isinstance(obj, dict) and "probs" in obj:
        return DiscreteDist.from_json(obj)
    if isinstance(obj, dict) and "cov" in obj:
        return GaussianDist.from_json(obj)
    raise InputError("distribution JSON needs either 'probs' or 'cov'")


# -- structural constraints ------------------------------------------------------

CONSTRAINT_KINDS = ("edge_required", "unconfounded", "edge_forbidden")


@dataclass(frozen=True)
class CausalConstraint:
    """``edge_required``/``edge_forbidden`` i -> j refer to a directed path
    (possibly indirect) unless ``direct``; ``unconfounded`` means
    :func:`causalmerge.graphs.common_cause_free` holds."""

    kind: str
    i: int
    j: int
    direct: bool = False

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise InputError(f"unknown constraint kind {self.kind!r}; expected one of {CONSTRAINT_KINDS}")
        if self.i == self.j:
            raise InputError("a constraint needs two distinct nodes")

    def check_range(self, n: int):
        if not (0 <= self.i < n and 0 <= self.j < n):
            raise InputError(f"constraint {self} refers to nodes outside 0..{n - 1}")

    def holds(self, dag: Dag) -> bool:
        if self.kind == "unconfounded":
            return common_cause_free(dag, self.i, self.j)
        linked = (self.i, self.j) in dag.edges if self.direct else has_directed_path(dag, self.i, self.j)
        return linked if self.kind == "edge_required" else not linked

    def to_json(self):
        return {"kind": self.kind, "i": self.i, "j": self.j, "direct": self.direct}

    @classmethod
    def from_json(cls, obj):
        try:
            return cls(obj["kind"], int(obj["i"]), int(obj["j"]), bool(obj.get("direct", False)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed constraint: {exc}") from exc


def enumerate_constrained_dags(n: int, constraints: Iterable[CausalConstraint]) -> set:
    """Every DAG on ``n`` nodes satisfying all constraints."""
    _check_cap("dag", n)
    constraints = list(constraints)
    for c in constraints:
        c.check_range(n)
    return {g for g in enumerate_models("dag", n) if all(c.holds(g) for c in constraints)}


# -- chain merges ----------------------------------------------------------------


def _split(a_vars, b_vars):
    shared = [v for v in a_vars if v in b_vars]
    if not shared:
        raise InputError(f"no shared variable between {a_vars} and {b_vars}")
    left = [v for v in a_vars if v not in shared]
    right = [v for v in b_vars if v not in shared]
    return left, shared, right


def merge_chain_discrete(p_xy: DiscreteDist, p_yz: DiscreteDist, tol: float = DEFAULT_TOL) -> DiscreteDist:
    """Joint ``P(x, y) P(z | y)`` with variables ordered X, Y, Z.

    Y is the set of shared variables. Its two marginals must agree within
    total variation ``tol``. Where ``P(Y=y) = 0`` in ``p_yz`` the
    conditional is taken uniform (with a warning).
    """
    xs, ys, zs = _split(p_xy.vars, p_yz.vars)
    for y in ys:
        if p_xy.cards[p_xy.axis(y)] != p_yz.cards[p_yz.axis(y)]:
            raise InputError(f"variable {y} has different cardinalities in the two inputs")
    a = p_xy.marginal(xs + ys).probs
    b = p_yz.marginal(ys + zs).probs
    nx_, ny, nz = len(xs), len(ys), len(zs)
    my_a = a.sum(axis=tuple(range(nx_))) if nx_ else a
    my_b = b.sum(axis=tuple(range(ny, ny + nz))) if nz else b
    tv = 0.5 * float(np.abs(my_a - my_b).sum())
    if tv > tol:
        raise InconsistencyError(f"Y-marginals disagree: total variation {tv:.3g} > tol {tol:g}")
    zcard = int(np.prod(b.shape[ny:]))
    mass = my_b.reshape(my_b.shape + (1,) * nz)
    zero = mass == 0
    if zero.any():
        warnings.warn("zero-probability Y values; using a uniform conditional there", ZeroMassWarning,
                      stacklevel=2)
    cond = np.where(zero, 1.0 / zcard, b / np.where(zero, 1.0, mass))
    joint = a.reshape(a.shape + (1,) * nz) * cond.reshape((1,) * nx_ + cond.shape)
    joint = _match_row_sums(joint.reshape(a.shape + (zcard,)), a).reshape(joint.shape)
    cards = [p_xy.cards[p_xy.axis(v)] for v in xs + ys] + [p_yz.cards[p_yz.axis(v)] for v in zs]
    return DiscreteDist._raw(xs + ys + zs, cards, joint)


def _match_row_sums(rows, target):
    # shift entries by whole ulps until the exact row sum rounds to the
    # target, so marginalizing reproduces it bit for bit; the largest entry
    # goes first, finer-grained entries break round-half-even deadlocks
    flat = rows.reshape(-1, rows.shape[-1]).copy()
    for row, t in zip(flat, np.asarray(target, dtype=float).ravel()):
        order = np.argsort(-row, kind="stable")
        row[order[0]] = max(0.0, t - math.fsum(np.delete(row, order[0])))
        for idx in order:
            for _ in range(16):
                got = math.fsum(row)
                if got == t:
                    break
                row[idx] = max(0.0, np.nextafter(row[idx], math.inf if got < t else 0.0))
            if math.fsum(row) == t:
                break
    return flat.reshape(rows.shape)


def merge_chain_gaussian(p_xy: GaussianDist, p_yz: GaussianDist, tol: float = DEFAULT_TOL) -> GaussianDist:
    """Joint Gaussian with X and Z independent given Y.

    ``cov(X, Z) = cov(X, Y) cov(Y, Y)^-1 cov(Y, Z)``; every other moment is
    copied from the input that contains it.
    """
    xs, ys, zs = _split(p_xy.vars, p_yz.vars)
    ia, ib = p_xy.index(ys), p_yz.index(ys)
    gap = max(float(np.abs(p_xy.mean[ia] - p_yz.mean[ib]).max()),
              float(np.abs(p_xy.cov[np.ix_(ia, ia)] - p_yz.cov[np.ix_(ib, ib)]).max()))
    if gap > tol:
        raise InconsistencyError(f"Y moments disagree by {gap:.3g} > tol {tol:g}")
    a = p_xy.marginal(xs + ys)
    b = p_yz.marginal(ys + zs)
    nx_, ny = len(xs), len(ys)
    s_yy = a.cov[nx_:, nx_:]
    if np.any(np.diag(s_yy) <= 0) or np.linalg.matrix_rank(s_yy) < ny:
        raise DegenerateDataError("var(Y) must be positive definite")
    s_xy = a.cov[:nx_, nx_:]
    s_yz = b.cov[:ny, ny:]
    s_xz = s_xy @ np.linalg.solve(s_yy, s_yz)
    k = nx_ + ny + len(zs)
    cov = np.zeros((k, k))
    cov[:nx_ + ny, :nx_ + ny] = a.cov
    cov[nx_:, nx_:][ny:, :] = b.cov[ny:, :]
    cov[nx_:, nx_:][:, ny:] = b.cov[:, ny:]
    cov[:nx_, nx_ + ny:] = s_xz
    cov[nx_ + ny:, :nx_] = s_xz.T
    mean = np.concatenate([a.mean, b.mean[ny:]])
    return GaussianDist(xs + ys + zs, mean, cov)


# -- exact independence checks ---------------------------------------------------


def gaussian_partial_corr(dist: GaussianDist, i: int, j: int, cond: Sequence[int] = ()) -> float:
    """Population partial correlation from the Schur complement of the covariance."""
    ia, ic = dist.index([i, j]), dist.index(list(cond))
    s = dist.cov[np.ix_(ia, ia)]
    if ic:
        s_ac = dist.cov[np.ix_(ia, ic)]
        s = s - s_ac @ np.linalg.solve(dist.cov[np.ix_(ic, ic)], s_ac.T)
    if s[0, 0] <= 0 or s[1, 1] <= 0:
        raise DegenerateDataError("zero conditional variance")
    return float(s[0, 1] / np.sqrt(s[0, 0] * s[1, 1]))


def check_ci_exact(dist, q: Query, tol: float = DEFAULT_TOL) -> bool:
    """Whether ``q``'s independence holds in the population distribution within ``tol``."""
    if q.kind != COND_INDEP:
        raise QueryError(f"check_ci_exact needs a cond_indep query, got {q.kind}")
    (i, j), cond = q.vars, q.cond
    if isinstance(dist, GaussianDist):
        return abs(gaussian_partial_corr(dist, i, j, cond)) <= tol
    if not isinstance(dist, DiscreteDist):
        raise InputError(f"unsupported distribution type {type(dist).__name__}")
    p = dist.marginal([i, j, *cond]).probs
    p = p.reshape(p.shape[0], p.shape[1], -1)
    pc = p.sum(axis=(0, 1))
    live = pc > 0
    if not live.any():
        warnings.warn("conditioning event has probability 0 everywhere", VacuousConditionWarning,
                      stacklevel=2)
        return True
    pab = p[:, :, live] / pc[live]
    pa = pab.sum(axis=1, keepdims=True)
    pb = pab.sum(axis=0, keepdims=True)
    return float(np.abs(pab - pa * pb).max()) <= tol
