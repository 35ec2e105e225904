import csv
import json

import numpy as np
import pytest

from causalmerge.bounds import BoundSpec, binary_bound
from causalmerge.cli import dumps, main
from causalmerge.merge import DiscreteDist, check_ci_exact
from causalmerge.predictors import Query


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def test_generate_pipeline(tmp_path, capsys):
    g, sem, data = tmp_path / "g.json", tmp_path / "sem.json", tmp_path / "d.csv"
    assert run(capsys, "generate", "graph", "--class", "polytree", "--n", 4, "--seed", 1, "--out", g)[0] == 0
    assert run(capsys, "generate", "sem", "--graph", g, "--seed", 2, "--out", sem)[0] == 0
    assert run(capsys, "generate", "data", "--sem", sem, "--l", 50, "--seed", 3, "--out", data)[0] == 0
    rows = list(csv.reader(data.open()))
    assert rows[0] == ["X0", "X1", "X2", "X3"] and len(rows) == 51
    code, out, _ = run(capsys, "generate", "data", "--sem", sem, "--l", 50, "--seed", 3)
    assert code == 0 and out.splitlines()[1:] == [",".join(r) for r in rows[1:]]

    sl = tmp_path / "slices"
    assert run(capsys, "slice", "--data", data, "--tuples", "0,1;1,2", "--out", sl)[0] == 0
    manifest = json.loads((sl / "manifest.json").read_text())
    assert [m["vars"] for m in manifest] == [[0, 1], [1, 2]]

    qs = write(tmp_path / "q.json", [{"kind": "cond_indep", "vars": [0, 1], "cond": []}])
    code, out, _ = run(capsys, "test", "--queries", qs, "--manifest", sl / "manifest.json")
    assert code == 0 and json.loads(out)[0]["outcome"] in (0, 1)


def test_generate_is_seed_deterministic(capsys):
    a = run(capsys, "generate", "graph", "--class", "dag", "--n", 6, "--seed", 9)[1]
    b = run(capsys, "generate", "graph", "--class", "dag", "--n", 6, "--seed", 9)[1]
    assert a == b


def test_predict_fit_round_trip(tmp_path, capsys):
    model = write(tmp_path / "m.json", {"class": "dag", "n": 3, "edges": [[0, 1], [1, 2]]})
    queries = [{"kind": "cond_indep", "vars": [i, j], "cond": c}
               for i, j, c in [(0, 1, []), (0, 2, []), (1, 2, []), (0, 2, [1]), (0, 1, [2]), (1, 2, [0])]]
    qs = write(tmp_path / "q.json", queries)
    code, out, _ = run(capsys, "predict", "--model", model, "--queries", qs)
    assert code == 0
    labeled = json.loads(out)
    assert [lq["outcome"] for lq in labeled] == [1, 1, 1, 0, 1, 1]
    lq = write(tmp_path / "lq.json", labeled)
    code, out, _ = run(capsys, "fit", "--queries", lq, "--class", "dag", "--n", 3)
    fit = json.loads(out)
    assert code == 0 and fit["train_error"] == 0.0
    assert sorted(map(tuple, fit["model"]["edges"])) == [(0, 1), (1, 2)]
    code, out, _ = run(capsys, "fit", "--queries", lq, "--class", "dag", "--n", 3,
                       "--method", "local", "--budget", 50, "--restarts", 4, "--seed", 0)
    assert code == 0 and json.loads(out)["train_error"] == 0.0


def test_bounds_pinned(capsys):
    code, out, _ = run(capsys, "bounds", "--k", 1000, "--h", 50)
    res = json.loads(out)
    assert code == 0 and res["epsilon"] == 0.9776375245990245
    assert res["epsilon"] == binary_bound(BoundSpec(1000, 50, 0.1))
    code, out, _ = run(capsys, "bounds", "--h", 10, "--target", 0.5)
    assert code == 0 and json.loads(out)["required_k"] == 1095
    code, out, _ = run(capsys, "bounds", "--class", "dag", "--n", 10, "--k", 10_000)
    assert round(json.loads(out)["h"], 2) == 78.22


def test_bounds_errors(capsys):
    assert run(capsys, "bounds", "--h", 10)[0] == 1
    assert run(capsys, "bounds", "--k", 100, "--h", 10, "--eta", 1.5)[0] == 1


def test_figure1_csv(tmp_path, capsys):
    out = tmp_path / "fig.csv"
    assert run(capsys, "figure1", "--n", "10..120", "--out", out)[0] == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 111
    assert all(int(r["possible_tests"]) == int(r["n"]) * (int(r["n"]) - 1) * (int(r["n"]) - 2) // 2
               for r in rows)
    with pytest.raises(SystemExit) as exc:
        main(["figure1", "--n", "10-20"])
    assert exc.value.code == 1


def test_merge_discrete(tmp_path, capsys):
    rng = np.random.default_rng(0)
    pxy = rng.dirichlet(np.ones(6)).reshape(2, 3)
    py = pxy.sum(axis=0)
    pz_y = rng.dirichlet(np.ones(2), size=3)
    pyz = py[:, None] * pz_y
    a = write(tmp_path / "a.json", DiscreteDist([0, 1], [2, 3], pxy).to_json())
    b = write(tmp_path / "b.json", DiscreteDist([1, 2], [3, 2], pyz).to_json())
    code, out, _ = run(capsys, "merge", a, b)
    assert code == 0
    joint = DiscreteDist.from_json(json.loads(out))
    assert joint.vars == (0, 1, 2)
    assert check_ci_exact(joint, Query("cond_indep", (0, 2), (1,)), 1e-9)


def test_merge_inconsistent_exits_2(tmp_path, capsys):
    a = write(tmp_path / "a.json", DiscreteDist([0, 1], [2, 2], [[0.25, 0.25], [0.25, 0.25]]).to_json())
    b = write(tmp_path / "b.json", DiscreteDist([1, 2], [2, 2], [[0.4, 0.4], [0.1, 0.1]]).to_json())
    code, _, err = run(capsys, "merge", a, b)
    assert code == 2 and "error" in err


def test_merge_mixed_kinds(tmp_path, capsys):
    a = write(tmp_path / "a.json", DiscreteDist([0, 1], [2, 2], [[0.25, 0.25], [0.25, 0.25]]).to_json())
    b = write(tmp_path / "b.json", {"vars": [1, 2], "mean": [0, 0], "cov": [[1, 0], [0, 1]]})
    assert run(capsys, "merge", a, b)[0] == 1


def test_enumerate_chain_and_collider(tmp_path, capsys):
    chain = write(tmp_path / "c.json", [
        {"kind": "edge_required", "i": 0, "j": 1}, {"kind": "edge_required", "i": 1, "j": 2},
        {"kind": "unconfounded", "i": 0, "j": 1}, {"kind": "unconfounded", "i": 1, "j": 2},
        {"kind": "edge_forbidden", "i": 0, "j": 2},
    ])
    code, out, _ = run(capsys, "enumerate", "--n", 3, "--constraints", chain, "--direct")
    res = json.loads(out)
    assert code == 0 and res["count"] == 1
    assert sorted(map(tuple, res["dags"][0]["edges"])) == [(0, 1), (1, 2)]
    assert run(capsys, "enumerate", "--n", 9)[0] == 2


def test_experiment_subcommand(tmp_path, capsys):
    cfg = write(tmp_path / "cfg.json", {
        "schema": 1, "class": "polytree", "n": 4, "l": 100, "k_train": 18, "k_test": 6,
        "seeds": [0, 1, 2], "labeling": "oracle", "search": {"method": "exhaustive"},
    })
    code, out, _ = run(capsys, "experiment", cfg)
    assert code == 0
    report = json.loads(out)
    assert [r["seed"] for r in report["results"]] == [0, 1, 2]
    code, again, _ = run(capsys, "experiment", cfg)
    assert again == out
    code, one, _ = run(capsys, "experiment", cfg, "--seed", 1)
    assert json.loads(one)["results"] == [report["results"][1]]
    assert dumps(json.loads(out)) == out


def test_input_errors_exit_1(tmp_path, capsys):
    assert run(capsys, "predict", "--model", tmp_path / "missing.json", "--queries", tmp_path / "q.json")[0] == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "experiment", bad)[0] == 1
    assert run(capsys, "experiment", write(tmp_path / "cfg.json", {"schema": 1, "n": 2}))[0] == 1
    with pytest.raises(SystemExit) as exc:
        main(["nosuchcommand"])
    assert exc.value.code == 1
