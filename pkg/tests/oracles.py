"""Independent reference implementations used only by the tests."""

import itertools

import networkx as nx

from causalmerge.graphs import Dag


def _anc_closure(dag: Dag, nodes):
    g = nx.DiGraph(list(dag.edges))
    g.add_nodes_from(range(dag.n))
    out = set(nodes)
    for v in nodes:
        out |= nx.ancestors(g, v)
    return out


def moral_dsep(dag: Dag, i, j, z) -> bool:
    """Separation in the moralized ancestral graph (Lauritzen's criterion)."""
    keep = _anc_closure(dag, {i, j, *z})
    und = nx.Graph()
    und.add_nodes_from(keep)
    for v in keep:
        pa = [p for p in dag.parents[v] if p in keep]
        und.add_edges_from((p, v) for p in pa)
        und.add_edges_from(itertools.combinations(pa, 2))
    und.remove_nodes_from(z)
    return not nx.has_path(und, i, j)


def path_dsep(dag: Dag, i, j, z) -> bool:
    """Enumerate every simple undirected path and apply the blocking rules."""
    und = nx.Graph(list(dag.edges))
    und.add_nodes_from(range(dag.n))
    z = set(z)
    g = nx.DiGraph(list(dag.edges))
    g.add_nodes_from(range(dag.n))
    desc = {v: nx.descendants(g, v) for v in range(dag.n)}
    for path in nx.all_simple_paths(und, i, j):
        open_ = True
        for a, m, b in zip(path, path[1:], path[2:]):
            collider = (a, m) in dag.edges and (b, m) in dag.edges
            if collider:
                if m not in z and not (desc[m] & z):
                    open_ = False
                    break
            elif m in z:
                open_ = False
                break
        if open_:
            return False
    return True


def nx_dsep(dag: Dag, i, j, z) -> bool:
    g = nx.DiGraph(list(dag.edges))
    g.add_nodes_from(range(dag.n))
    check = getattr(nx, "is_d_separator", None) or nx.d_separated
    return check(g, {i}, {j}, set(z))


def all_ci_queries(n):
    for i, j in itertools.combinations(range(n), 2):
        rest = [v for v in range(n) if v not in (i, j)]
        for s in range(len(rest) + 1):
            for z in itertools.combinations(rest, s):
                yield i, j, z


def brute_dags(n):
    """All DAGs by filtering every subset of the n(n-1) directed edges."""
    pairs = list(itertools.permutations(range(n), 2))
    out = set()
    for mask in range(1 << len(pairs)):
        edges = [pairs[k] for k in range(len(pairs)) if mask >> k & 1]
        g = nx.DiGraph(edges)
        if nx.is_directed_acyclic_graph(g):
            out.add(frozenset(edges))
    return out
