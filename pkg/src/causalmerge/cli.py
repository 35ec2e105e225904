"""Command-line entry point: ``causalmerge <subcommand> ...``.

Exit codes: 0 success, 1 input error, 2 inconsistency or capacity error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .bounds import (
    FIGURE1_COLUMNS,
    VARIANTS,
    VC_CLASSES,
    BoundSpec,
    ClassSpec,
    binary_bound,
    figure1_curves,
    real_bound,
    required_k,
    vc_upper,
)
from .errors import (
    CapacityError,
    CausalMergeError,
    DivergenceError,
    InconsistencyError,
    InputError,
)
from .experiment import ExperimentConfig, run_experiment
from .graphs import MODEL_CLASSES, model_from_json
from .merge import (
    CausalConstraint,
    DiscreteDist,
    GaussianDist,
    dist_from_json,
    enumerate_constrained_dags,
    merge_chain_discrete,
    merge_chain_gaussian,
)
from .predictors import Query, predict
from .search import LabeledQuery, fit_exhaustive, fit_local
from .stattests import (
    DIRECTION_METHODS,
    Dataset,
    TestConfig,
    read_dataset_csv,
    read_manifest,
    run_test,
    write_dataset_csv,
)
from .synth import LinearSem, random_sem, sample_data, sample_graph, slice_overlapping

log = logging.getLogger("causalmerge")


# -- output ----------------------------------------------------------------------


def _encode(obj):
    """JSON text with every float written to 17 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        return format(x, ".17g") if not x.is_integer() or abs(x) >= 1e16 else format(x, ".1f")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return _encode(obj) + "\n"


def _write(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _write_json(obj, out):
    _write(dumps(obj), out)


def _read_json(path):
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
        return json.loads(text)
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def _read_queries(path) -> list[Query]:
    obj = _read_json(path)
    if not isinstance(obj, list):
        raise InputError("a query file holds a JSON list of queries")
    return [Query.from_json(q.get("query", q) if isinstance(q, dict) else q) for q in obj]


def _read_labeled(path) -> list[LabeledQuery]:
    obj = _read_json(path)
    if not isinstance(obj, list):
        raise InputError("a labeled-query file holds a JSON list")
    return [LabeledQuery.from_json(x) for x in obj]


def _read_model(path):
    obj = _read_json(path)
    if isinstance(obj, dict) and "model" in obj:
        obj = obj["model"]
    return model_from_json(obj)


def _json_arg(text, what):
    try:
        return json.loads(text) if text else {}
    except json.JSONDecodeError as exc:
        raise InputError(f"--{what} is not valid JSON ({exc})") from exc


def _int_range(text: str):
    try:
        lo, hi = (int(x) for x in text.split(".."))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO..HI, got {text!r}") from None
    return lo, hi


# -- subcommands -----------------------------------------------------------------


def cmd_generate(args):
    if args.what == "graph":
        g = sample_graph(args.cls, args.n, args.seed, _json_arg(args.params, "params"))
        _write_json(g.to_json(), args.out)
    elif args.what == "sem":
        if not args.graph:
            raise InputError("generate sem needs --graph")
        g = model_from_json(_read_json(args.graph))
        if hasattr(g, "to_dag"):
            g = g.to_dag()
        sem = random_sem(g, args.seed, tuple(args.coef_range), args.noise, args.noise_param)
        _write_json(sem.to_json(), args.out)
    else:
        if not args.sem:
            raise InputError("generate data needs --sem")
        sem = LinearSem.from_json(_read_json(args.sem))
        d = sample_data(sem, args.l, args.seed)
        if args.out in (None, "-"):
            buf = io.StringIO()
            w = csv.writer(buf)
            w.writerow([f"X{v}" for v in d.vars])
            w.writerows([[format(float(x), ".17g") for x in row] for row in d.data])
            sys.stdout.write(buf.getvalue())
        else:
            write_dataset_csv(d, args.out)


def _parse_tuples(text):
    try:
        return [tuple(int(v) for v in part.split(",")) for part in text.split(";") if part.strip()]
    except ValueError:
        raise InputError(f"--tuples expects e.g. '0,1;1,2', got {text!r}") from None


def cmd_slice(args):
    d = read_dataset_csv(args.data)
    tuples = _parse_tuples(args.tuples)
    parts = slice_overlapping(d, tuples, args.row_mode, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for k, (t, part) in enumerate(zip(tuples, parts)):
        name = f"slice_{k}.csv"
        write_dataset_csv(part, out / name, names=[f"X{v}" for v in t])
        manifest.append({"file": name, "vars": list(t)})
    (out / "manifest.json").write_text(dumps(manifest))


def _datasets(args) -> list[Dataset]:
    if args.manifest:
        return read_manifest(args.manifest)
    if args.data:
        return [read_dataset_csv(args.data)]
    raise InputError("test needs --manifest or --data")


def cmd_test(args):
    datasets = _datasets(args)
    cfg = TestConfig(args.alpha, args.min_abs_corr)
    model = _read_model(args.model) if args.model else None
    out = []
    for q in _read_queries(args.queries):
        need = set(q.variables)
        d = next((d for d in datasets if need <= set(d.vars)), None)
        if d is None:
            raise InputError(f"no dataset observes all variables of {q}")
        res = run_test(d, q, cfg, model=model, direction_method=args.direction_method)
        out.append(LabeledQuery(q, res).to_json())
    _write_json(out, args.out)


def cmd_fit(args):
    qs = _read_labeled(args.queries)
    if args.method == "exhaustive":
        res = fit_exhaustive(args.cls, args.n, qs)
    else:
        res = fit_local(args.cls, args.n, qs, args.budget, args.restarts, args.seed)
    _write_json(res.to_json(), args.out)


def cmd_predict(args):
    model = _read_model(args.model)
    out = [LabeledQuery(q, predict(model, q, args.anm_reading)).to_json()
           for q in _read_queries(args.queries)]
    _write_json(out, args.out)


def cmd_bounds(args):
    if args.h is None:
        if not (args.cls and args.n):
            raise InputError("bounds needs --h or --class with --n")
        h = vc_upper(ClassSpec(args.cls, args.n, args.h_override))
    else:
        h = args.h
    result = {"h": h, "eta": args.eta, "variant": args.variant}
    if args.target is not None:
        result["epsilon_target"] = args.target
        result["required_k"] = required_k(h, args.eta, args.target, args.variant)
    if args.k is not None:
        bs = BoundSpec(args.k, h, args.eta, tuple(args.range), args.variant)
        result["k"] = args.k
        result["epsilon"] = real_bound(bs) if args.kind == "real" else binary_bound(bs)
        result["kind"] = args.kind
    if "epsilon" not in result and "required_k" not in result:
        raise InputError("bounds needs --k (deviation term) and/or --target (required k)")
    _write_json(result, args.out)


def cmd_figure1(args):
    lo, hi = args.n
    rows = figure1_curves(lo, hi, args.eta, args.epsilon)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIGURE1_COLUMNS)
    for r in rows:
        w.writerow([format(r[c], ".17g") if isinstance(r[c], float) else r[c] for c in FIGURE1_COLUMNS])
    _write(buf.getvalue(), args.out)


def cmd_merge(args):
    a, b = dist_from_json(_read_json(args.first)), dist_from_json(_read_json(args.second))
    if isinstance(a, DiscreteDist) and isinstance(b, DiscreteDist):
        merged = merge_chain_discrete(a, b, args.tol)
    elif isinstance(a, GaussianDist) and isinstance(b, GaussianDist):
        merged = merge_chain_gaussian(a, b, args.tol)
    else:
        raise InputError("both distributions must be discrete or both Gaussian")
    _write_json(merged.to_json(), args.out)


def cmd_enumerate(args):
    cons = []
    if args.constraints:
        obj = _read_json(args.constraints)
        if not isinstance(obj, list):
            raise InputError("constraints file holds a JSON list")
        cons = [CausalConstraint.from_json(c) for c in obj]
    if args.direct:
        cons = [CausalConstraint(c.kind, c.i, c.j, True) for c in cons]
    dags = sorted(enumerate_constrained_dags(args.n, cons), key=lambda g: g.key())
    _write_json({"count": len(dags), "dags": [g.to_json() for g in dags]}, args.out)


def cmd_experiment(args):
    obj = _read_json(args.config)
    if args.workers is not None:
        obj = {**obj, "workers": args.workers}
    if args.seed is not None:
        obj = {**obj, "seeds": [args.seed]}
    report = run_experiment(ExperimentConfig.from_json(obj))
    _write_json(report.to_json(), args.out)


# -- parser ----------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="causalmerge", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=func)
        sp.add_argument("--out", default="-", help="output path (default stdout)")
        return sp

    sp = add("generate", cmd_generate, "random graphs, SEMs or data")
    sp.add_argument("what", choices=("graph", "sem", "data"))
    sp.add_argument("--class", dest="cls", default="polytree", choices=("dag", "polytree", "path"))
    sp.add_argument("--n", type=int, default=5)
    sp.add_argument("--params", help="generator params as JSON, e.g. '{\"edge_prob\": 0.3}'")
    sp.add_argument("--graph", help="graph JSON for 'sem'")
    sp.add_argument("--sem", help="SEM JSON for 'data'")
    sp.add_argument("--coef-range", type=float, nargs=2, default=(0.5, 0.9))
    sp.add_argument("--noise", choices=("gaussian", "uniform"), default="gaussian")
    sp.add_argument("--noise-param", type=float, default=1.0)
    sp.add_argument("--l", type=int, default=1000)
    sp.add_argument("--seed", type=int)

    sp = add("slice", cmd_slice, "project a dataset onto overlapping variable tuples")
    sp.add_argument("--data", required=True)
    sp.add_argument("--tuples", required=True, help="e.g. '0,1;1,2'")
    sp.add_argument("--row-mode", choices=("shared", "disjoint"), default="shared")
    sp.add_argument("--seed", type=int)

    sp = add("test", cmd_test, "run statistical tests on datasets")
    sp.add_argument("--queries", required=True)
    sp.add_argument("--manifest")
    sp.add_argument("--data")
    sp.add_argument("--model", help="ground-truth model for oracle tests")
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--min-abs-corr", type=float, default=0.02)
    sp.add_argument("--direction-method", choices=DIRECTION_METHODS, default="cumulant")

    sp = add("fit", cmd_fit, "fit a model to labeled queries")
    sp.add_argument("--queries", required=True)
    sp.add_argument("--class", dest="cls", required=True, choices=MODEL_CLASSES)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--method", choices=("exhaustive", "local"), default="exhaustive")
    sp.add_argument("--budget", type=int, default=1000)
    sp.add_argument("--restarts", type=int, default=1)
    sp.add_argument("--seed", type=int)

    sp = add("predict", cmd_predict, "model predictions for queries")
    sp.add_argument("--model", required=True)
    sp.add_argument("--queries", required=True)
    sp.add_argument("--anm-reading", choices=("standard", "literal"), default="standard")

    sp = add("bounds", cmd_bounds, "generalization bound and required sample count")
    sp.add_argument("--k", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--class", dest="cls", choices=VC_CLASSES)
    sp.add_argument("--n", type=int)
    sp.add_argument("--h-override", type=float)
    sp.add_argument("--eta", type=float, default=0.1)
    sp.add_argument("--variant", choices=VARIANTS, default="full")
    sp.add_argument("--kind", choices=("binary", "real"), default="binary")
    sp.add_argument("--range", type=float, nargs=2, default=(0.0, 1.0), metavar=("A", "B"))
    sp.add_argument("--target", type=float, help="epsilon target for required k")

    sp = add("figure1", cmd_figure1, "required vs possible tests for polytrees, as CSV")
    sp.add_argument("--n", type=_int_range, default=(10, 120), help="LO..HI")
    sp.add_argument("--eta", type=float, default=0.1)
    sp.add_argument("--epsilon", type=float, default=0.1)

    sp = add("merge", cmd_merge, "merge two overlapping marginals along a chain")
    sp.add_argument("first")
    sp.add_argument("second")
    sp.add_argument("--tol", type=float, default=1e-9)

    sp = add("enumerate", cmd_enumerate, "DAGs satisfying causal constraints")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--constraints")
    sp.add_argument("--direct", action="store_true", help="read cause constraints as direct edges")

    sp = add("experiment", cmd_experiment, "run an experiment config")
    sp.add_argument("config")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--seed", type=int, help="run only this seed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (InconsistencyError, CapacityError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InputError, CausalMergeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
