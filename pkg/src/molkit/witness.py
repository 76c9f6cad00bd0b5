"""Map molecules onto the MILP variables and back.

``encode_witness`` embeds a molecule into the scheme graph of a
specification and fills every variable, so the model can be checked on a
known-feasible point.  ``decode_solution`` turns a solver assignment into a
chemical graph.  ``brute_force_feasibility`` decides tiny instances by
enumerating graphs directly, without touching the MILP.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .chemgraph import (
    Atom,
    Bond,
    ChemGraphError,
    ChemicalGraph,
    ElementTable,
    decompose,
    default_elements,
    extract_fringe_trees,
    leaf_edge_configs,
)
from .gnn import GnnModel, forward, forward_input, prepare
from .milp_core import MilpModel, Report, check_assignment
from .milp_encode import Encoder, assemble, encoder_for, mass_bounds
from .spec import Specification, seed_rank


class WitnessError(ValueError):
    pass


@dataclass
class Embedding:
    """Placement of the interior of a molecule onto the scheme graph."""

    phi: tuple[int, ...]  # graph vertex of seed vertex c (index c-1)
    direct: dict[int, bool]  # seed edge -> realised as a plain edge
    paths: dict[int, tuple[int, ...]]  # seed edge -> internal vertices, tail to head
    leaves: dict[tuple[str, int], tuple[int, ...]]  # (kind, index) root -> vertices outward
    t_order: list[int] = field(default_factory=list)  # graph vertex of T(i)
    t_colour: list[int] = field(default_factory=list)
    f_order: list[int] = field(default_factory=list)
    f_colour: list[int] = field(default_factory=list)


@dataclass
class WitnessResult:
    assignment: dict[str, float]
    report: Report
    embedding: Embedding | None
    candidates: int


# ---------------------------------------------------------------- embedding search


def _interior_adjacency(d) -> dict[int, dict[int, int]]:
    inside = set(d.interior)
    return {
        v: {w: o for w, o in d.graph.adjacency[v].items() if w in inside} for v in d.interior
    }


def _simple_paths(adj, src, dst, blocked, lo, hi):
    """Internal-vertex tuples of simple src-dst paths with lo..hi internal vertices."""
    out = []

    def walk(u, trail):
        if len(trail) > hi:
            return
        for w in adj[u]:
            if w == dst and trail and len(trail) >= lo:
                out.append(tuple(trail))
            elif w not in blocked and w not in trail and w != src and w != dst:
                trail.append(w)
                walk(w, trail)
                trail.pop()

    walk(src, [])
    return out


def _edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def embeddings(d, spec: Specification, reasons: Counter | None = None) -> Iterator[Embedding]:
    """Every structurally valid embedding of the interior of ``d``.

    ``reasons`` collects why rejected candidates failed.
    """
    reasons = Counter() if reasons is None else reasons
    seed = spec.seed
    adj = _interior_adjacency(d)
    interior = list(d.interior)
    all_edges = {_edge(u, v) for u in adj for v in adj[u]}
    tCt = seed.t_c_tilde
    n_path_max = spec.tT

    for phi in itertools.permutations(interior, seed.t_c):
        cset = set(phi)

        def place(k, used, direct, paths, covered):
            if k > seed.m_c:
                yield dict(direct), dict(paths), set(covered)
                return
            e = seed.edge(k)
            a, b = phi[e.tail - 1], phi[e.head - 1]
            lo, hi = e.length
            if e.cls != "GE2" and b in adj[a] and lo <= 1 <= hi and _edge(a, b) not in covered:
                direct[k] = True
                covered.add(_edge(a, b))
                yield from place(k + 1, used, direct, paths, covered)
                covered.discard(_edge(a, b))
                direct[k] = False
            if e.cls == "ZeroOne" and lo == 0:
                direct[k] = False
                yield from place(k + 1, used, direct, paths, covered)
            if e.cls in ("GE2", "GE1"):
                direct[k] = False
                room = n_path_max - sum(len(p) for p in paths.values())
                for p in _simple_paths(adj, a, b, used, max(1, lo - 1), min(hi - 1, room)):
                    chain = [a, *p, b]
                    es = {_edge(u, v) for u, v in zip(chain, chain[1:])}
                    if es & covered:
                        continue
                    paths[k] = p
                    yield from place(k + 1, used | set(p), direct, paths, covered | es)
                    del paths[k]

        placed = False
        for direct, paths, covered in place(1, set(cset), {}, {}, set()):
            placed = True
            tset = {v for p in paths.values() for v in p}
            rest = [v for v in interior if v not in cset and v not in tset]
            if len(rest) > spec.tF:
                reasons["more leftover vertices than leaf-path slots"] += 1
                continue
            leaves = _leaf_paths(adj, rest, cset, tset, all_edges - covered, phi, tCt, d)
            if leaves is None:
                reasons["leftover vertices do not form rooted leaf paths"] += 1
                continue
            yield _ordered(Embedding(tuple(phi), direct, paths, {}), leaves, spec)
        if not placed:
            reasons["seed edges cannot be realised between the chosen seed vertices"] += 1


def _leaf_paths(adj, rest, cset, tset, free_edges, phi, tCt, d):
    """Split the leftover vertices into rooted leaf paths, or None if impossible."""
    rset = set(rest)
    for u, v in free_edges:
        if u not in rset and v not in rset:
            return None
    seen: set[int] = set()
    found = []
    for start in rest:
        if start in seen:
            continue
        comp, stack = [], [start]
        seen.add(start)
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in adj[u]:
                if w in rset and w not in seen:
                    seen.add(w)
                    stack.append(w)
        inner = {u: [w for w in adj[u] if w in rset] for u in comp}
        outer = [(u, w) for u in comp for w in adj[u] if w not in rset]
        if len(outer) != 1 or any(len(n) > 2 for n in inner.values()):
            return None
        if sum(len(n) for n in inner.values()) != 2 * (len(comp) - 1):
            return None  # contains a cycle
        first, root = outer[0]
        if len(inner[first]) > 1:
            return None
        order = [first]
        while len(order) < len(comp):
            order.append(next(w for w in inner[order[-1]] if w not in order[-2:]))
        if len(adj[order[-1]]) != 1 and len(order) > 1:
            return None
        if len(order) == 1 and len(adj[first]) != 1:
            return None
        found.append((root, tuple(order)))
    out = {}
    for root, order in found:
        if root in cset:
            c = phi.index(root) + 1
            if c > tCt:
                return None
            key = ("C", c)
        else:
            key = ("T", root)  # replaced by the T index once known
        if key in out:
            return None
        out[key] = order
    return out


def _ordered(emb: Embedding, leaves, spec: Specification) -> Embedding:
    tCt = spec.seed.t_c_tilde
    for k in sorted(emb.paths, reverse=True):
        for v in emb.paths[k]:
            emb.t_order.append(v)
            emb.t_colour.append(k)
    t_index = {v: i + 1 for i, v in enumerate(emb.t_order)}
    for (kind, r), order in leaves.items():
        emb.leaves[("C", r) if kind == "C" else ("T", t_index[r])] = order
    colour = {key: key[1] if key[0] == "C" else tCt + key[1] for key in emb.leaves}
    for key in sorted(emb.leaves, key=lambda k: -colour[k]):
        for v in emb.leaves[key]:
            emb.f_order.append(v)
            emb.f_colour.append(colour[key])
    return emb


# ---------------------------------------------------------------- assignment


def _block_ends(colours: Sequence[int]) -> tuple[dict[int, int], dict[int, int]]:
    """First and last 1-based position of every colour in a chain."""
    first: dict[int, int] = {}
    last: dict[int, int] = {}
    for i, c in enumerate(colours, start=1):
        first.setdefault(c, i)
        last[c] = i
    return first, last


class _Filler:
    def __init__(self, e: Encoder):
        self.e = e
        self.a: dict[str, float] = {}

    def __setitem__(self, name: str, value) -> None:
        self.a[name] = float(value)

    def onehot(self, prefix: str, value: int, choices) -> None:
        for c in choices:
            self.a[f"{prefix}_{c}"] = 1.0 if c == value else 0.0


def fill_assignment(
    g: ChemicalGraph,
    emb: Embedding,
    spec: Specification,
    model: GnnModel | None = None,
    table: ElementTable | None = None,
) -> dict[str, float]:
    """Values of every MILP variable for molecule ``g`` placed as ``emb``."""
    table = table or default_elements()
    e = encoder_for(spec, table)
    rho = spec.rho
    d = decompose(g, rho)
    h = d.graph
    trees = dict(zip(d.interior, extract_fringe_trees(d, g)))
    cat = spec.catalog
    f = _Filler(e)
    seed = spec.seed
    tT, tF, tC, tCt, cF, kC = e.tT, e.tF, e.tC, e.tCt, e.cF, e.kC

    verts = {"C": list(emb.phi), "T": list(emb.t_order), "F": list(emb.f_order)}

    def gv(X, i):
        lst = verts[X]
        return lst[i - 1] if i <= len(lst) else None

    def order(u, v):
        return h.adjacency[u][v]

    nT, nF = len(emb.t_order), len(emb.f_order)
    t_col = emb.t_colour + [0] * (tT - nT)
    f_col = emb.f_colour + [0] * (tF - nF)
    useT = [0] * (tT + 2)
    for i in range(2, nT + 1):
        useT[i] = int(t_col[i - 1] == t_col[i - 2])
    useF = [0] * (tF + 2)
    for i in range(2, nF + 1):
        useF[i] = int(f_col[i - 1] == f_col[i - 2])
    t_first, t_last = _block_ends(emb.t_colour)
    f_first, _ = _block_ends(emb.f_colour)

    def f_root(c):
        return gv("C", c) if c <= tCt else gv("T", c - tCt)

    # cyclical base
    for k in range(1, e.mC + 1):
        f[f"useC_{k}"] = int(emb.direct.get(k, False))
    for i in range(1, tT + 1):
        f[f"vT_{i}"] = int(i <= nT)
        f[f"chiT_{i}"] = t_col[i - 1]
        f.onehot(f"chiTk_{i}", t_col[i - 1], range(0, kC + 1))
    for i in range(1, tT + 2):
        f[f"useT_{i}"] = useT[i]
    clrT = Counter(t_col)
    for k in range(0, kC + 1):
        f[f"clrT_{k}"] = clrT[k]
        f[f"dchiT_{k}"] = int(clrT[k] > 0)
    for i in range(1, tC + 1):
        f[f"degCm_{i}"] = sum(emb.direct.get(k, False) for k in e.ia_minus(i))
        f[f"degCp_{i}"] = sum(emb.direct.get(k, False) for k in e.ia_plus(i))
    zero_one = seed.indices("ZeroOne")
    f["rank"] = seed_rank(seed) - len(zero_one) + sum(emb.direct.get(k, False) for k in zero_one)

    # leaf paths
    f["nint"] = len(d.interior)
    for i in range(1, tF + 1):
        f[f"vF_{i}"] = int(i <= nF)
        f[f"chiF_{i}"] = f_col[i - 1]
        f.onehot(f"chiFc_{i}", f_col[i - 1], range(0, cF + 1))
    for i in range(1, tF + 2):
        f[f"useF_{i}"] = useF[i]
    clrF = Counter(f_col)
    for c in range(0, cF + 1):
        f[f"clrF_{c}"] = clrF[c]
        f[f"dchiF_{c}"] = int(clrF[c] > 0)
    for k in e.pathable:
        for i in range(1, tT + 1):
            f[f"bl_{k}_{i}"] = int(t_col[i - 1] == k and clrF[tCt + i] > 0)

    # fringe trees
    f["nG"] = h.n_atoms
    fc = Counter()
    ac = Counter()
    for X in "CTF":
        for i in range(1, e.size(X) + 1):
            v = gv(X, i)
            t = trees[v] if v is not None else None
            p = cat.id_of(t) if t is not None else None
            if t is not None and p is None:
                raise WitnessError(f"fringe tree at vertex {v} is not in the catalog")
            for q in e.fringe_ids(X, i):
                f[e.fr(X, i, q)] = int(q == p)
            st = t.stats if t is not None else None
            f[f"degex{X}_{i}"] = st.root_degree if st else 0
            f[f"hyd{X}_{i}"] = st.root_hydrogens if st else 0
            f[f"ion{X}_{i}"] = st.root_ion if st else 0
            f[f"ht{X}_{i}"] = st.height if st else 0
            if p is not None:
                fc[p] += 1
                for key, cnt in st.leaf_configs:
                    ac[key] += cnt
    for p in range(1, len(cat) + 1):
        f[f"fc_{p}"] = fc[p]
    for j, key in enumerate(e.ac_keys, start=1):
        f[f"aclf_{j}"] = ac[key]
    for k in e.pathable:
        chosen = None
        lo = seed.edge(k).ch[0]
        for i in range(1, tT + 1):
            if t_col[i - 1] != k:
                continue
            ht = f.a[f"htT_{i}"]
            has_leaf = clrF[tCt + i] > 0
            reach = clrF[tCt + i] + rho if has_leaf else ht
            if chosen is None or reach >= lo:
                chosen = i
                if reach >= lo:
                    break
        for i in range(1, tT + 1):
            f[f"sigma_{k}_{i}"] = int(i == chosen)

    # degrees
    for X in "CTF":
        d0 = 1 if X == "C" else 0
        for i in range(1, e.size(X) + 1):
            v = gv(X, i)
            deg = h.degree(v) if v is not None else 0
            dint = len([w for w in h.adjacency[v] if w in trees]) if v is not None else 0
            hyd = h.atoms[v].hydrogens if v is not None else 0
            f[f"deg{X}_{i}"] = deg
            f[f"degint{X}_{i}"] = dint
            f.onehot(f"dg{X}_{i}", deg + hyd, range(d0, 5))
            f.onehot(f"dgint{X}_{i}", dint, range(d0, 5))
    for i in range(1, tC + 1):
        f[f"degCT_{i}"] = sum(clrT[k] > 0 for k in e.ib_plus(i))
        f[f"degTC_{i}"] = sum(clrT[k] > 0 for k in e.ib_minus(i))
    for dd in range(1, 5):
        f[f"dg_{dd}"] = sum(
            f.a.get(f"dg{X}_{i}_{dd}", 0) for X in "CTF" for i in range(1, e.size(X) + 1)
        )
        f[f"dgint_{dd}"] = sum(
            f.a.get(f"dgint{X}_{i}_{dd}", 0) for X in "CTF" for i in range(1, e.size(X) + 1)
        )

    # multiplicities
    beta: dict[str, int] = {}
    for k in e.direct:
        t, hh = emb.phi[e.tail(k) - 1], emb.phi[e.head(k) - 1]
        beta[f"bC_{k}"] = order(t, hh) if emb.direct.get(k) else 0
    for i in range(2, tT + 1):
        beta[f"bT_{i}"] = order(gv("T", i - 1), gv("T", i)) if useT[i] else 0
    for i in range(2, tF + 1):
        beta[f"bF_{i}"] = order(gv("F", i - 1), gv("F", i)) if useF[i] else 0
    for k in e.pathable:
        if k in t_first:
            beta[f"bCT_{k}"] = order(emb.phi[e.tail(k) - 1], gv("T", t_first[k]))
            beta[f"bTC_{k}"] = order(gv("T", t_last[k]), emb.phi[e.head(k) - 1])
        else:
            beta[f"bCT_{k}"] = beta[f"bTC_{k}"] = 0
    for c in range(1, cF + 1):
        beta[f"bsF_{c}"] = order(f_root(c), gv("F", f_first[c])) if c in f_first else 0
    prefixes = {"bT": "dbT", "bF": "dbF", "bC": "dbC", "bCT": "dbCT", "bTC": "dbTC", "bsF": "dbsF"}
    for name, val in beta.items():
        f[name] = val
        pre, idx = name.split("_", 1)
        f.onehot(f"{prefixes[pre]}_{idx}", val, range(0, 4))
    for X in "CTF":
        for i in range(1, e.size(X) + 1):
            v = gv(X, i)
            f[f"bex{X}_{i}"] = trees[v].stats.root_bond_sum if v is not None else 0
    for mm in (1, 2, 3):
        fam = {
            "C": [f"dbC_{k}_{mm}" for k in e.direct],
            "T": [f"dbT_{i}_{mm}" for i in range(2, tT + 1)],
            "CT": [f"dbCT_{k}_{mm}" for k in e.pathable],
            "TC": [f"dbTC_{k}_{mm}" for k in e.pathable],
            "F": [f"dbF_{i}_{mm}" for i in range(2, tF + 1)],
            "CF": [f"dbsF_{c}_{mm}" for c in range(1, tCt + 1)],
            "TF": [f"dbsF_{c}_{mm}" for c in range(tCt + 1, cF + 1)],
        }
        tot = 0
        for name, vs in fam.items():
            s = sum(f.a[v] for v in vs)
            f[f"bd{name}_{mm}"] = s
            tot += s
        f[f"bdint_{mm}"] = tot

    # elements, valence, counts
    for i in range(1, tT + 1):
        col = t_col[i - 1]
        f[f"bCTv_{i}"] = beta[f"bCT_{col}"] if i <= nT and not useT[i] else 0
        f[f"bTCv_{i}"] = beta[f"bTC_{col}"] if i <= nT and not useT[i + 1] else 0
    for i in range(1, tF + 1):
        col = f_col[i - 1]
        first = i <= nF and not useF[i]
        f[f"bCFv_{i}"] = beta[f"bsF_{col}"] if first and col <= tCt else 0
        f[f"bTFv_{i}"] = beta[f"bsF_{col}"] if first and col > tCt else 0
    naX = {X: Counter() for X in "CTF"}
    naexX = {X: Counter() for X in "CTF"}
    for X in "CTF":
        for i in range(1, e.size(X) + 1):
            v = gv(X, i)
            el = h.atoms[v].element if v is not None else None
            f[f"al{X}_{i}"] = e.code.get(el, 0) if el else 0
            for a in e.lam_int:
                f[f"da{X}_{i}_{a}"] = int(a == el)
            if v is not None:
                naX[X][el] += 1
                for a in e.lam_ex:
                    naexX[X][a] += trees[v].stats.count(a)
    for a in e.lam_int:
        for X in "CTF":
            f[f"na{X}_{a}"] = naX[X][a]
        f[f"naint_{a}"] = sum(naX[X][a] for X in "CTF")
    for a in e.lam_ex:
        for X in "CTF":
            f[f"naex{X}_{a}"] = naexX[X][a]
        f[f"naex_{a}"] = sum(naexX[X][a] for X in "CTF")
    for a in e.lam:
        f[f"na_{a}"] = f.a.get(f"naint_{a}", 0) + f.a.get(f"naex_{a}", 0)
    mass = sum(table.mass10(a) * f.a[f"na_{a}"] for a in e.lam)
    f["Mass"] = mass
    n_atoms = h.n_atoms + (f.a["naex_H"] if "H" in e.lam_ex else 0)
    _, lo, hi = mass_bounds(e)
    for n in range(lo, hi + 1):
        f[f"datm_{n}"] = int(n == n_atoms)
    f["msbar"] = mass / n_atoms
    for k in e.pathable:
        for i in range(2, tT + 1):
            for mm in (2, 3):
                f[f"bdTk_{k}_{i}_{mm}"] = int(t_col[i - 1] == k and f.a[f"dbT_{i}_{mm}"] == 1)

    if model is not None:
        _fill_gnn(f, g, emb, spec, model, table, gv, t_col, f_col, useT, useF,
                  t_first, t_last, f_first, f_root)
    return f.a


def _fill_gnn(f, g, emb, spec, model, table, gv, t_col, f_col, useT, useF,
              t_first, t_last, f_first, f_root):
    e = f.e
    cfg = model.config
    x = prepare(g, cfg.rho, spec.catalog, table)
    tr = forward_input(model, x)
    row = {v: r for r, v in enumerate(x.vertices)}
    L, K = cfg.layers, cfg.k_hid
    tCt = e.tCt

    def vec(kind, l, v):
        if v is None:
            n = tr.theta[l].shape[1] if kind == "theta" else K
            return np.zeros(n)
        src = {"theta": tr.theta, "tau": tr.tau, "msg": tr.messages}[kind]
        return src[l][row[v]]

    for X in "CTF":
        for i in range(1, e.size(X) + 1):
            v = gv(X, i)
            th0 = vec("theta", 0, v)
            for z, val in enumerate(th0, start=1):
                f[f"th{X}_{i}_{z}_0"] = val
            for l in range(1, L + 1):
                th, tau = vec("theta", l, v), vec("tau", l, v)
                for z in range(1, K + 1):
                    f[f"th{X}_{i}_{z}_{l}"] = th[z - 1]
                    f[f"tau{X}_{i}_{z}_{l}"] = tau[z - 1]
                    f[f"dt{X}_{i}_{z}_{l}"] = int(tau[z - 1] < 0)
    for l in range(L):
        def put(name, v):
            m = vec("msg", l, v)
            for z in range(1, K + 1):
                f[f"{name}_{z}_{l}"] = m[z - 1]

        for k in e.direct:
            on = emb.direct.get(k, False)
            put(f"thCm_{k}", emb.phi[e.tail(k) - 1] if on else None)
            put(f"thCp_{k}", emb.phi[e.head(k) - 1] if on else None)
        for X, use in (("T", useT), ("F", useF)):
            n = e.size(X)
            for i in range(1, n + 1):
                put(f"th{X}m_{i}", gv(X, i - 1) if use[i] else None)
                put(f"th{X}p_{i}", gv(X, i + 1) if i + 1 <= n and use[i + 1] else None)
        for k in e.pathable:
            put(f"thCTT_{k}", gv("T", t_first[k]) if k in t_first else None)
            put(f"thTCT_{k}", gv("T", t_last[k]) if k in t_last else None)
        nT = len(emb.t_order)
        for i in range(1, e.tT + 1):
            k = t_col[i - 1]
            first = i <= nT and not useT[i]
            last = i <= nT and not useT[i + 1]
            put(f"thCTC_{i}", emb.phi[e.tail(k) - 1] if first else None)
            put(f"thTCC_{i}", emb.phi[e.head(k) - 1] if last else None)
            c = tCt + i
            put(f"thTFF_{i}", gv("F", f_first[c]) if c in f_first else None)
        for c in range(1, tCt + 1):
            put(f"thCFF_{c}", gv("F", f_first[c]) if c in f_first else None)
        nF = len(emb.f_order)
        for i in range(1, e.tF + 1):
            c = f_col[i - 1]
            first = i <= nF and not useF[i]
            put(f"thCFC_{i}", f_root(c) if first and c <= tCt else None)
            put(f"thTFT_{i}", f_root(c) if first and c > tCt else None)
    for q, (t, th) in enumerate(zip(tr.tau_r, tr.theta_r), start=1):
        f[f"tauR_{q}"] = t
        f[f"thR_{q}"] = th
        f[f"dtR_{q}"] = int(t < 0)
    for j, (pre, post) in enumerate(zip(tr.head_pre, tr.head_post), start=1):
        for hh, (a, b) in enumerate(zip(pre, post), start=1):
            f[f"tauH_{j}_{hh}"] = a
            f[f"thH_{j}_{hh}"] = b
            f[f"dtH_{j}_{hh}"] = int(a < 0)
    f["y"] = tr.y


def encode_witness(
    g: ChemicalGraph,
    spec: Specification,
    model: GnnModel | None = None,
    milp: MilpModel | None = None,
    y_range: Sequence[float] | None = None,
    table: ElementTable | None = None,
    max_candidates: int = 200,
) -> WitnessResult:
    """Assignment for ``g`` with the fewest violated rows among its embeddings.

    Stops at the first embedding that satisfies every row.  ``milp`` may be
    passed to reuse an assembled model.
    """
    table = table or default_elements()
    d = decompose(g, spec.rho)
    for v, t in zip(d.interior, extract_fringe_trees(d, g)):
        if spec.catalog.id_of(t) is None:
            raise WitnessError(f"fringe tree at vertex {v} is not in the catalog: {t.code.decode()}")
    n_int = len(d.interior)
    if not spec.nint[0] <= n_int <= spec.nint[1]:
        raise WitnessError(f"interior has {n_int} vertices, outside {spec.nint}")
    milp = milp or assemble(spec, model, y_range, table)
    best: WitnessResult | None = None
    count = 0
    reasons: Counter = Counter()
    for emb in embeddings(d, spec, reasons):
        count += 1
        a = fill_assignment(g, emb, spec, model, table)
        rep = check_assignment(milp, a)
        if best is None or _badness(rep) < _badness(best.report):
            best = WitnessResult(a, rep, emb, count)
        if rep.ok or count >= max_candidates:
            break
    if best is None:
        why = "; ".join(f"{r} ({n}x)" for r, n in reasons.most_common()) or "no candidate seed placement"
        raise WitnessError(f"molecule does not fit the scheme graph: {why}")
    best.candidates = count
    return best


def _badness(r: Report) -> int:
    return len(r.violations) + len(r.integrality) + len(r.bounds)


# ---------------------------------------------------------------- decoding


INDICATOR_TOL = 1e-6


def _int(values: Mapping[str, float], name: str) -> int:
    v = values.get(name, 0.0)
    r = round(v)
    if abs(v - r) > INDICATOR_TOL:
        raise WitnessError(f"{name} = {v!r} is not integral")
    return int(r)


def _on(values: Mapping[str, float], name: str) -> bool:
    return _int(values, name) == 1


@dataclass
class DecodedGraph:
    graph: ChemicalGraph
    y: float | None  # value of the output variable
    interior: dict[tuple[str, int], int]  # scheme vertex -> atom index
    fringe: dict[tuple[str, int], int]  # scheme vertex -> catalog id


def decode_solution(
    values: Mapping[str, float], spec: Specification, table: ElementTable | None = None
) -> DecodedGraph:
    """Chemical graph described by a solver assignment.

    Indicators must be within ``INDICATOR_TOL`` of 0 or 1.
    """
    table = table or default_elements()
    e = encoder_for(spec, table)
    atoms: list[Atom] = []
    bonds: list[Bond] = []
    where: dict[tuple[str, int], int] = {}
    fringe: dict[tuple[str, int], int] = {}
    for X in "CTF":
        for i in range(1, e.size(X) + 1):
            if X != "C" and not _on(values, f"v{X}_{i}"):
                continue
            els = [a for a in e.lam_int if _on(values, f"da{X}_{i}_{a}")]
            ids = [p for p in e.fringe_ids(X, i) if _on(values, e.fr(X, i, p))]
            if len(els) != 1 or len(ids) != 1:
                raise WitnessError(f"vertex {X}{i}: no unique element or fringe tree")
            t = e.trees[ids[0]]
            if t.elements[0] != els[0]:
                raise WitnessError(f"vertex {X}{i}: fringe root {t.elements[0]} but element {els[0]}")
            where[(X, i)] = len(atoms)
            fringe[(X, i)] = ids[0]
            atoms.append(Atom(t.elements[0], t.hydrogens[0], t.ions[0]))

    def link(a, b, name):
        order = _int(values, name)
        if order < 1:
            raise WitnessError(f"{name}: zero multiplicity on a used edge")
        bonds.append(Bond(where[a], where[b], order))

    for k in e.direct:
        if _on(values, f"useC_{k}"):
            link(("C", e.tail(k)), ("C", e.head(k)), f"bC_{k}")
    for X, n in (("T", e.tT), ("F", e.tF)):
        for i in range(2, n + 1):
            if _on(values, f"use{X}_{i}"):
                link((X, i - 1), (X, i), f"b{X}_{i}")
    for i in range(1, e.tT + 1):
        if not _on(values, f"vT_{i}"):
            continue
        k = _int(values, f"chiT_{i}")
        if not _on(values, f"useT_{i}"):
            link(("C", e.tail(k)), ("T", i), f"bCT_{k}")
        if not _on(values, f"useT_{i+1}"):
            link(("T", i), ("C", e.head(k)), f"bTC_{k}")
    for i in range(1, e.tF + 1):
        if not _on(values, f"vF_{i}") or _on(values, f"useF_{i}"):
            continue
        c = _int(values, f"chiF_{i}")
        root = ("C", c) if c <= e.tCt else ("T", c - e.tCt)
        link(root, ("F", i), f"bsF_{c}")
    for key, p in fringe.items():
        t = e.trees[p]
        index = {0: where[key]}
        for v in range(1, t.size):
            index[v] = len(atoms)
            atoms.append(Atom(t.elements[v], t.hydrogens[v], t.ions[v]))
            bonds.append(Bond(index[t.parents[v]], index[v], t.orders[v]))
    g = ChemicalGraph(tuple(atoms), tuple(bonds))
    g.validate(table)
    n_int = len(where)
    try:
        got = len(decompose(g, spec.rho).interior)
    except ChemGraphError as exc:
        raise WitnessError(f"decoded graph cannot be decomposed: {exc}") from None
    if got != n_int:
        raise WitnessError(f"decoded graph has {got} interior vertices, scheme used {n_int}")
    return DecodedGraph(g, values.get("y"), where, fringe)


# ---------------------------------------------------------------- brute force

BRUTE_LIMITS = {"nint": 4, "catalog": 4, "elements_int": 2}


@dataclass
class BruteResult:
    feasible: bool
    witness: ChemicalGraph | None
    y: float | None
    examined: int


def _check_spec(g: ChemicalGraph, spec: Specification, table: ElementTable, n_int: int) -> bool:
    """Counting bounds of ``spec`` evaluated directly on a candidate graph."""
    n = g.n_atoms
    if not (spec.n_lb <= n <= spec.n_star and spec.nint[0] <= n_int <= spec.nint[1]):
        return False
    d = decompose(g, spec.rho)
    if len(d.interior) != n_int:
        return False
    counts = Counter(a.element for a in g.atoms)
    h = sum(a.hydrogens for a in g.atoms)
    if h:
        counts["H"] += h
    for a, (lo, hi) in spec.na.items():
        if not lo <= counts.get(a, 0) <= hi:
            return False
    if any(a not in spec.na for a in counts):
        return False
    inner = Counter(g.atoms[v].element for v in d.interior)
    for a, (lo, hi) in spec.na_int.items():
        if not lo <= inner.get(a, 0) <= hi:
            return False
    trees = extract_fringe_trees(d, g)
    ids = Counter(spec.catalog.id_of(t) for t in trees)
    for p, (lo, hi) in spec.fc.items():
        if not lo <= ids.get(p, 0) <= hi:
            return False
    for key, cnt in leaf_edge_configs(g).items():
        lo, hi = spec.aclf.get(key, (0, 0))
        if not lo <= cnt <= hi:
            return False
    for key, (lo, _) in spec.aclf.items():
        if lo > 0 and leaf_edge_configs(g).get(key, 0) < lo:
            return False
    dg, dgi = Counter(), Counter()
    for v in d.interior:
        dg[g.degree(v) + g.atoms[v].hydrogens] += 1
        dgi[d.interior_degree(v)] += 1
    for dd in range(1, 5):
        lo, hi = spec.dg.get(dd, (0, n))
        if not lo <= dg.get(dd, 0) <= hi:
            return False
        lo, hi = spec.dg_int.get(dd, (0, n))
        if not lo <= dgi.get(dd, 0) <= hi:
            return False
    return True


def _skeletons(spec: Specification):
    """Interior skeletons: (kind list, edges (u, v, seed edge or None, role), leaf roots).

    Vertices 0..tC-1 are the seed vertices.  Each candidate lists, for every
    seed edge, a realised length (0 = absent, 1 = plain edge, >1 = path) and
    for every root a leaf-path length.
    """
    seed = spec.seed
    n_max = spec.nint[1]
    choices = []
    for k in range(1, seed.m_c + 1):
        e = seed.edge(k)
        lo, hi = e.length
        opts = [L for L in range(lo, min(hi, n_max - seed.t_c + 1) + 1)]
        if e.cls == "GE2":
            opts = [L for L in opts if L >= 2]
        if e.cls == "EQ1":
            opts = [1]
        choices.append(opts)
    for lengths in itertools.product(*choices):
        n_t = sum(max(0, L - 1) for L in lengths)
        if seed.t_c + n_t > n_max:
            continue
        vertices = list(range(seed.t_c))
        edges = []
        t_roots = []
        for k, L in enumerate(lengths, start=1):
            e = seed.edge(k)
            if L == 0:
                continue
            chain = [e.tail - 1]
            for _ in range(L - 1):
                chain.append(len(vertices))
                t_roots.append((len(vertices), k))
                vertices.append(len(vertices))
            chain.append(e.head - 1)
            edges += [(u, v) for u, v in zip(chain, chain[1:])]
        roots = [(c - 1, None) for c in range(1, seed.t_c + 1) if seed.vertices[c - 1].bl[1] >= 1]
        roots += t_roots
        spare = n_max - len(vertices)
        yield from _with_leaves(vertices, edges, roots, spare, lengths, spec)


def _with_leaves(vertices, edges, roots, spare, lengths, spec):
    # leaf-path length per root, 0 meaning none
    for ls in itertools.product(range(spare + 1), repeat=len(roots)):
        if sum(ls) > spare or sum(ls) > spec.tF:
            continue
        vs = list(vertices)
        es = list(edges)
        ends = []
        bl = Counter()
        for (r, k), L in zip(roots, ls):
            if L == 0:
                continue
            prev = r
            for _ in range(L):
                vs.append(len(vs))
                es.append((prev, vs[-1]))
                prev = vs[-1]
            ends.append(prev)
            if k is not None:
                bl[k] += 1
        seed = spec.seed
        on_c = {r for (r, k), L in zip(roots, ls) if k is None and L > 0}
        ok = all(
            seed.edge(k).bl[0] <= bl[k] <= seed.edge(k).bl[1]
            for k in range(1, seed.m_c + 1)
            if lengths[k - 1] >= 2
        )
        ok = ok and all(c in on_c for c in range(seed.t_c) if seed.vertices[c].bl[0] >= 1)
        if ok:
            yield vs, es, ends


def _orders(n, edges, need):
    """Bond orders 1..3 on ``edges`` meeting the per-vertex sum ``need``."""
    out = []
    cur = [0] * len(edges)
    rem = list(need)

    def go(j):
        if j == len(edges):
            if all(r == 0 for r in rem):
                out.append(tuple(cur))
            return
        u, v = edges[j]
        for o in (1, 2, 3):
            if rem[u] >= o and rem[v] >= o:
                rem[u] -= o
                rem[v] -= o
                cur[j] = o
                go(j + 1)
                rem[u] += o
                rem[v] += o

    go(0)
    return out


def _assemble_graph(vs, es, ords, trees):
    atoms, bonds = [], []
    for v in vs:
        t = trees[v]
        atoms.append(Atom(t.elements[0], t.hydrogens[0], t.ions[0]))
    for (u, v), o in zip(es, ords):
        bonds.append(Bond(u, v, o))
    for v in vs:
        t = trees[v]
        index = {0: v}
        for x in range(1, t.size):
            index[x] = len(atoms)
            atoms.append(Atom(t.elements[x], t.hydrogens[x], t.ions[x]))
            bonds.append(Bond(index[t.parents[x]], index[x], t.orders[x]))
    return ChemicalGraph(tuple(atoms), tuple(bonds))


def brute_force_feasibility(
    spec: Specification,
    model: GnnModel,
    y_range: Sequence[float],
    table: ElementTable | None = None,
    tol: float = 1e-6,
) -> BruteResult:
    """Decide a tiny instance by enumerating every admissible graph.

    Returns the feasible graph with the smallest canonical key, so results
    are reproducible.  Refuses instances above ``BRUTE_LIMITS``.
    """
    table = table or default_elements()
    if spec.nint[1] > BRUTE_LIMITS["nint"]:
        raise WitnessError(f"brute force needs nint <= {BRUTE_LIMITS['nint']}")
    if len(spec.catalog) > BRUTE_LIMITS["catalog"]:
        raise WitnessError(f"brute force needs at most {BRUTE_LIMITS['catalog']} fringe trees")
    if len(spec.elements_int) > BRUTE_LIMITS["elements_int"]:
        raise WitnessError("brute force needs at most two interior elements")
    cat = spec.catalog
    rho = spec.rho
    lo, hi = y_range
    lo = -math.inf if lo is None else lo
    hi = math.inf if hi is None else hi
    if lo > hi:
        return BruteResult(False, None, None, 0)
    examined = 0
    best = None
    t_c = spec.seed.t_c
    for vs, es, ends in _skeletons(spec):
        n = len(vs)
        if n < spec.nint[0]:
            continue
        ideg = Counter()
        for u, v in es:
            ideg[u] += 1
            ideg[v] += 1
        options = []
        for v in vs:
            kind, idx = ("C", v + 1) if v < t_c else ("T", 1)
            ids = spec.fringe_ids(kind, idx)
            opts = []
            for p in ids:
                t = cat.tree(p)
                st = t.stats
                if t.elements[0] not in spec.elements_int:
                    continue
                if v < t_c and t.elements[0] not in spec.allowed_elements(v + 1):
                    continue
                if ideg[v] + st.root_degree + st.root_hydrogens > 4:
                    continue
                if (v in ends or ideg[v] == 1) and st.height != rho:
                    continue
                if ideg[v] == 0:
                    continue
                opts.append(p)
            options.append(opts)
        for pick in itertools.product(*options):
            trees = {v: cat.tree(p) for v, p in zip(vs, pick)}
            need = [
                table.valence(trees[v].elements[0]) + trees[v].ions[0] - trees[v].stats.root_bond_sum
                for v in vs
            ]
            if any(r < ideg[v] for v, r in zip(vs, need)):
                continue
            for ords in _orders(n, es, need):
                examined += 1
                g = _assemble_graph(vs, es, ords, trees)
                try:
                    g.validate(table)
                    if not _check_spec(g, spec, table, n):
                        continue
                    y, _ = forward(g, model, cat, table)
                except (ChemGraphError, ValueError):
                    continue
                if lo - tol <= y <= hi + tol:
                    key = _graph_key(g)
                    if best is None or key < best[0]:
                        best = (key, g, y)
    if best is None:
        return BruteResult(False, None, None, examined)
    return BruteResult(True, best[1], best[2], examined)


def _graph_key(g: ChemicalGraph) -> tuple:
    return (
        g.n_atoms,
        tuple((a.element, a.hydrogens, a.ion) for a in g.atoms),
        tuple((b.u, b.v, b.order) for b in g.bonds),
    )
