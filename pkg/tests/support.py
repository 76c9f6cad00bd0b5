"""Independent oracles and fixtures shared by the test modules."""

from __future__ import annotations

import itertools
import math

import networkx as nx
import numpy as np

from molkit.catalog import build_catalog
from molkit.chemgraph import (
    ChemicalGraph,
    FringeTree,
    decompose,
    element_counts,
    extract_fringe_trees,
    suppress_hydrogens,
)
from molkit.gnn import GnnConfig, GnnModel, compute_bigM, interval_bigM, with_bigM
from molkit.spec import build_spec, preset_edges
from molkit.synth import random_dataset, ring_or_chain_molecule


# ---------------------------------------------------------------- graph isomorphism


def to_networkx(g: ChemicalGraph) -> nx.Graph:
    h = suppress_hydrogens(g)
    out = nx.Graph()
    for i, a in enumerate(h.atoms):
        out.add_node(i, label=(a.element, a.hydrogens, a.ion))
    for b in h.bonds:
        out.add_edge(b.u, b.v, order=b.order)
    return out


def isomorphic(g1: ChemicalGraph, g2: ChemicalGraph) -> bool:
    return nx.is_isomorphic(
        to_networkx(g1),
        to_networkx(g2),
        node_match=lambda a, b: a["label"] == b["label"],
        edge_match=lambda a, b: a["order"] == b["order"],
    )


# ---------------------------------------------------------------- rooted trees


def parent_arrays(n: int):
    """Every parent array with parent[v] < v; covers all rooted shapes of size n."""
    for tail in itertools.product(*[range(v) for v in range(1, n)]):
        yield (-1,) + tail


def children_of(parents) -> list[list[int]]:
    ch = [[] for _ in parents]
    for v, p in enumerate(parents):
        if p >= 0:
            ch[p].append(v)
    return ch


def rooted_isomorphic(t1: FringeTree, t2: FringeTree) -> bool:
    """Backtracking search for a label-preserving bijection between children."""
    if t1.size != t2.size:
        return False
    c1, c2 = children_of(t1.parents), children_of(t2.parents)

    def label(t, v):
        return (t.elements[v], t.hydrogens[v], t.ions[v], t.orders[v] if v else 0)

    def match(u: int, v: int) -> bool:
        if label(t1, u) != label(t2, v) or len(c1[u]) != len(c2[v]):
            return False
        return assign(c1[u], list(c2[v]))

    def assign(left: list[int], right: list[int]) -> bool:
        if not left:
            return True
        u = left[0]
        for k, v in enumerate(right):
            if match(u, v) and assign(left[1:], right[:k] + right[k + 1:]):
                return True
        return False

    return match(0, 0)


def shuffled_tree(t: FringeTree, rng: np.random.Generator) -> FringeTree:
    """Same tree under a random relabelling of its non-root nodes."""
    n = t.size
    perm = [0] + [int(x) + 1 for x in rng.permutation(n - 1)]  # old -> new
    inv = [0] * n
    for old, new in enumerate(perm):
        inv[new] = old
    parents = [-1] + [perm[t.parents[inv[v]]] for v in range(1, n)]
    return FringeTree.build(
        [t.elements[inv[v]] for v in range(n)],
        [t.hydrogens[inv[v]] for v in range(n)],
        [t.ions[inv[v]] for v in range(n)],
        parents,
        [t.orders[inv[v]] if v else 0 for v in range(n)],
    )


# ---------------------------------------------------------------- micro instances


def i5_micro(g: ChemicalGraph, cfg: GnnConfig | None = None, seed: int = 0, rho: int = 2):
    """Spec shaped like I5 whose catalog is exactly the trees of ``g``, plus a model."""
    cat = build_catalog([g], rho)
    spec = build_spec(preset_edges("I5"), 3, cat, (3, 9), 1, max(9, g.n_atoms))
    model = GnnModel.initialize(cfg or GnnConfig(), cat.trees, seed=seed)
    model = with_bigM(model, compute_bigM(model, [g]).bounds)
    return spec, model


def i5_molecules(seed: int, count: int) -> list[ChemicalGraph]:
    rng = np.random.default_rng(seed)
    return [ring_or_chain_molecule(rng)[0] for _ in range(count)]


def tiny_instance(g: ChemicalGraph, seed: int, cfg: GnnConfig | None = None):
    """Two seed vertices joined by a path; small enough for enumeration."""
    cat = build_catalog([g], 2)
    spec = build_spec([(1, 2, "GE1")], 2, cat, (2, 4), 2, 14)
    model = GnnModel.initialize(cfg or GnnConfig(layers=1, k_hid=4, k_c=4, head=(4,)), cat.trees, seed=seed)
    model = with_bigM(model, interval_bigM(model, 4, cat))
    return spec, model


def tiny_pool(seed: int = 3, count: int = 400):
    """Acyclic molecules with at most four interior vertices and a small catalog."""
    out = []
    for g in random_dataset(np.random.default_rng(seed), count, (5, 9), ring_prob=0.0):
        if len(decompose(g, 2).interior) > 4:
            continue
        cat = build_catalog([g], 2)
        if len(cat) > 4 or len({t.elements[0] for t in cat.trees}) > 2:
            continue
        out.append(g)
    return out


def r_squared(pred, truth) -> float:
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    ss = ((truth - truth.mean()) ** 2).sum()
    return 1.0 - ((pred - truth) ** 2).sum() / ss if ss > 0 else math.nan


def satisfies_spec(g: ChemicalGraph, spec) -> list[str]:
    """Counting bounds of ``spec`` re-evaluated from scratch; returns what fails."""
    bad = []
    d = decompose(g, spec.rho)
    if not spec.n_lb <= g.n_atoms <= spec.n_star:
        bad.append(f"n = {g.n_atoms}")
    if not spec.nint[0] <= len(d.interior) <= spec.nint[1]:
        bad.append(f"nint = {len(d.interior)}")
    counts = element_counts(g)
    for a, n in counts.items():
        lo, hi = spec.na.get(a, (0, 0))
        if not lo <= n <= hi:
            bad.append(f"na[{a}] = {n}")
    for v in d.interior:
        if g.atoms[v].element not in spec.elements_int:
            bad.append(f"interior element {g.atoms[v].element}")
    codes = {t.code: p for p, t in enumerate(spec.catalog.trees, start=1)}
    used = {}
    for t in extract_fringe_trees(d, g):
        p = codes.get(t.code)
        if p is None:
            bad.append("uncatalogued fringe tree")
            continue
        used[p] = used.get(p, 0) + 1
    for p, n in used.items():
        lo, hi = spec.fc.get(p, (0, 0))
        if not lo <= n <= hi:
            bad.append(f"fc[{p}] = {n}")
    return bad
