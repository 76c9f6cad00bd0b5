"""MILP encoding of a topological specification plus a trained GNN.

Scheme graph layout (all indices 1-based):

* ``C`` vertices are the seed vertices; every one is used.
* ``T`` vertices 1..tT form a chain; a pure path replacing seed edge ``k``
  takes a contiguous block of them with colour ``k``.  Colours decrease
  along the chain and ``useT_i`` marks the chain edge between T(i-1) and
  T(i).  The first vertex of a block touches tail(k), the last head(k).
* ``F`` vertices 1..tF form a second chain split into leaf paths.  Colour
  ``c <= t~C`` roots the path at seed vertex ``c``; colour ``t~C + i`` at
  T vertex ``i``.  The first vertex of a block touches its root.

Variable names follow the table in the README.  Every family has a tag so
``MilpModel.counts()`` can report sizes per block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .chemgraph import ElementTable, default_elements
from .gnn import ONE_HOT, GnnModel
from .milp_core import MilpError, MilpModel
from .spec import Specification, seed_rank

Terms = list[tuple[str, float]]


def _neg(terms: Iterable[tuple[str, float]]) -> Terms:
    return [(v, -c) for v, c in terms]


@dataclass
class Encoder:
    """Shared index sets and the model being built."""

    spec: Specification
    m: MilpModel
    table: ElementTable

    def __post_init__(self):
        s = self.spec
        seed = s.seed
        self.tC, self.mC = seed.t_c, seed.m_c
        self.kCt, self.kC = seed.k_c_tilde, seed.k_c
        self.tCt = seed.t_c_tilde
        self.tT, self.tF, self.cF = s.tT, s.tF, s.cF
        self.n_star = s.n_star
        self.rho = s.rho
        self.direct = list(range(self.kCt + 1, self.mC + 1))  # may be a plain edge
        self.pathable = list(range(1, self.kC + 1))  # may be replaced by a T path
        self.lam = tuple(s.elements)
        self.lam_int = tuple(s.elements_int)
        self.code = {a: j + 1 for j, a in enumerate(self.lam_int)}
        ex = set()
        for t in s.catalog.trees:
            ex.update(a for a, n in t.stats.element_counts if n > 0)
        self.lam_ex = tuple(a for a in self.lam if a in ex)
        self.trees = {p: s.catalog.tree(p) for p in range(1, len(s.catalog) + 1)}
        self.ac_keys = sorted(
            set(s.aclf) | {k for t in s.catalog.trees for k, _ in t.stats.leaf_configs}
        )

    # ---- index sets
    def ia_plus(self, i: int) -> list[int]:
        return self.spec.seed.out_edges(i, ("GE1", "ZeroOne", "EQ1"))

    def ia_minus(self, i: int) -> list[int]:
        return self.spec.seed.in_edges(i, ("GE1", "ZeroOne", "EQ1"))

    def ib_plus(self, i: int) -> list[int]:
        return self.spec.seed.out_edges(i, ("GE2", "GE1"))

    def ib_minus(self, i: int) -> list[int]:
        return self.spec.seed.in_edges(i, ("GE2", "GE1"))

    def tail(self, k: int) -> int:
        return self.spec.seed.edge(k).tail

    def head(self, k: int) -> int:
        return self.spec.seed.edge(k).head

    def size(self, X: str) -> int:
        return {"C": self.tC, "T": self.tT, "F": self.tF}[X]

    def fringe_ids(self, X: str, i: int) -> list[int]:
        """Catalog ids allowed at vertex X(i); roots outside the interior elements are dropped."""
        ids = self.spec.fringe_ids(X, i)
        return [p for p in ids if self.trees[p].elements[0] in self.code]

    def fr(self, X: str, i: int, p: int) -> str:
        return f"fr{X}_{i}_{p}"

    def used(self, X: str, i: int) -> Terms:
        """Terms of the usage indicator of vertex X(i); empty list means constant 1."""
        return [] if X == "C" else [(f"v{X}_{i}", 1.0)]

    # ---- constraint helpers
    def c(self, name: str, terms: Iterable[tuple[str, float]], sense: str, rhs: float = 0.0) -> None:
        self.m.add_constraint(name, list(terms), sense, rhs)

    def eq(self, name: str, terms, rhs: float = 0.0) -> None:
        self.c(name, terms, "=", rhs)

    def le(self, name: str, terms, rhs: float = 0.0) -> None:
        self.c(name, terms, "<=", rhs)

    def ge(self, name: str, terms, rhs: float = 0.0) -> None:
        self.c(name, terms, ">=", rhs)

    def within(self, name: str, expr: Terms, gate: Terms, const: float = 0.0) -> None:
        """``|expr| <= const + gate`` as two rows."""
        self.le(name + "_u", expr + _neg(gate), const)
        self.ge(name + "_l", expr + gate, -const)


def _range(a: int, b: int) -> range:
    return range(a, b + 1)


# ---------------------------------------------------------------- cyclical base


def build_cyclical_base(e: Encoder) -> None:
    m, s = e.m, e.spec
    seed = s.seed
    for k in _range(1, e.mC):
        m.binary(f"useC_{k}")
    for i in _range(1, e.tT):
        m.binary(f"vT_{i}")
    for i in _range(1, e.tT + 1):
        # the first and last chain edges are fictitious
        m.binary(f"useT_{i}", 0, 0 if i in (1, e.tT + 1) else 1)
    for i in _range(1, e.tT):
        m.integer(f"chiT_{i}", 0, e.kC)
        for k in _range(0, e.kC):
            m.binary(f"chiTk_{i}_{k}")
    m.integer("clrT_0", 0, e.tT)
    for k in _range(1, e.kC):
        lo, hi = seed.edge(k).length
        m.integer(f"clrT_{k}", lo - 1, hi - 1)
    for k in _range(0, e.kC):
        m.binary(f"dchiT_{k}")
    for i in _range(1, e.tC):
        m.integer(f"degCm_{i}", 0, 4)
        m.integer(f"degCp_{i}", 0, 4)
    m.integer("rank", -e.mC, e.mC)

    zero_one = seed.indices("ZeroOne")
    e.eq("co_rank", [("rank", 1)] + [(f"useC_{k}", -1) for k in zero_one], seed_rank(seed) - len(zero_one))
    for k in seed.indices("EQ1"):
        e.eq(f"co_eq1_{k}", [(f"useC_{k}", 1)], 1)
    for k in seed.indices("GE2"):
        e.eq(f"co_ge2_{k}", [(f"useC_{k}", 1)], 0)
        e.ge(f"co_ge2_clr_{k}", [(f"clrT_{k}", 1)], 1)
    for k in seed.indices("GE1"):
        e.ge(f"co_ge1_{k}", [(f"useC_{k}", 1), (f"clrT_{k}", 1)], 1)
        e.le(f"co_ge1_clr_{k}", [(f"clrT_{k}", 1), (f"useC_{k}", e.tT)], e.tT)
    for i in _range(1, e.tC):
        e.eq(f"co_degm_{i}", [(f"useC_{k}", 1) for k in e.ia_minus(i)] + [(f"degCm_{i}", -1)])
        e.eq(f"co_degp_{i}", [(f"useC_{k}", 1) for k in e.ia_plus(i)] + [(f"degCp_{i}", -1)])
    for i in _range(1, e.tT):
        e.eq(f"co_chi0_{i}", [(f"chiTk_{i}_0", 1), (f"vT_{i}", 1)], 1)
        e.eq(f"co_chi1_{i}", [(f"chiTk_{i}_{k}", 1) for k in _range(0, e.kC)], 1)
        e.eq(
            f"co_chi2_{i}",
            [(f"chiTk_{i}_{k}", k) for k in _range(1, e.kC)] + [(f"chiT_{i}", -1)],
        )
    for k in _range(0, e.kC):
        col = [(f"chiTk_{i}_{k}", 1) for i in _range(1, e.tT)]
        e.eq(f"co_clr_{k}", col + [(f"clrT_{k}", -1)])
        e.ge(f"co_dchi_u_{k}", [(f"dchiT_{k}", e.tT)] + _neg(col))
        e.ge(f"co_dchi_l_{k}", col + [(f"dchiT_{k}", -1)])
    for i in _range(2, e.tT):
        e.ge(f"co_mono_{i}", [(f"vT_{i-1}", 1), (f"vT_{i}", -1)])
        e.ge(
            f"co_col_u_{i}",
            [(f"vT_{i-1}", e.kC), (f"useT_{i}", -e.kC), (f"chiT_{i-1}", -1), (f"chiT_{i}", 1)],
        )
        e.ge(
            f"co_col_l_{i}",
            [(f"chiT_{i-1}", 1), (f"chiT_{i}", -1), (f"vT_{i-1}", -1), (f"useT_{i}", 1)],
        )


# ---------------------------------------------------------------- leaf paths


def build_leaf_paths(e: Encoder) -> None:
    m, s = e.m, e.spec
    m.integer("nint", *s.nint)
    for i in _range(1, e.tF):
        m.binary(f"vF_{i}")
    for i in _range(1, e.tF + 1):
        m.binary(f"useF_{i}", 0, 0 if i in (1, e.tF + 1) else 1)
    for i in _range(1, e.tF):
        m.integer(f"chiF_{i}", 0, e.cF)
        for c in _range(0, e.cF):
            m.binary(f"chiFc_{i}_{c}")
    for c in _range(0, e.cF):
        m.integer(f"clrF_{c}", 0, e.tF)
    for c in _range(0, e.cF):
        lb = s.seed.vertices[c - 1].bl[0] if 1 <= c <= e.tCt else 0
        m.binary(f"dchiF_{c}", lb, 1)
    for k in e.pathable:
        for i in _range(1, e.tT):
            m.binary(f"bl_{k}_{i}")

    for i in _range(1, e.tF):
        e.eq(f"int_chi0_{i}", [(f"chiFc_{i}_0", 1), (f"vF_{i}", 1)], 1)
        e.eq(f"int_chi1_{i}", [(f"chiFc_{i}_{c}", 1) for c in _range(0, e.cF)], 1)
        e.eq(
            f"int_chi2_{i}",
            [(f"chiFc_{i}_{c}", c) for c in _range(1, e.cF)] + [(f"chiF_{i}", -1)],
        )
    for c in _range(0, e.cF):
        col = [(f"chiFc_{i}_{c}", 1) for i in _range(1, e.tF)]
        e.eq(f"int_clr_{c}", col + [(f"clrF_{c}", -1)])
        e.ge(f"int_dchi_u_{c}", [(f"dchiF_{c}", e.tF)] + _neg(col))
        e.ge(f"int_dchi_l_{c}", col + [(f"dchiF_{c}", -1)])
    for i in _range(2, e.tF):
        e.ge(f"int_mono_{i}", [(f"vF_{i-1}", 1), (f"vF_{i}", -1)])
        e.ge(
            f"int_col_u_{i}",
            [(f"vF_{i-1}", e.cF), (f"useF_{i}", -e.cF), (f"chiF_{i-1}", -1), (f"chiF_{i}", 1)],
        )
        e.ge(
            f"int_col_l_{i}",
            [(f"chiF_{i-1}", 1), (f"chiF_{i}", -1), (f"vF_{i-1}", -1), (f"useF_{i}", 1)],
        )
    for k in e.pathable:
        for i in _range(1, e.tT):
            e.ge(
                f"int_bl_{k}_{i}",
                [(f"bl_{k}_{i}", 1), (f"dchiF_{e.tCt + i}", -1), (f"chiTk_{i}_{k}", -1)],
                -1,
            )
    all_bl = [(f"bl_{k}_{i}", 1) for k in e.pathable for i in _range(1, e.tT)]
    e.le("int_bl_sum", all_bl + [(f"dchiF_{e.tCt + i}", -1) for i in _range(1, e.tT)])
    for k in e.pathable:
        lo, hi = s.seed.edge(k).bl
        row = [(f"bl_{k}_{i}", 1) for i in _range(1, e.tT)]
        e.ge(f"int_bl_lb_{k}", row, lo)
        e.le(f"int_bl_ub_{k}", row, hi)
    e.eq(
        "int_nint",
        [(f"vT_{i}", 1) for i in _range(1, e.tT)]
        + [(f"vF_{i}", 1) for i in _range(1, e.tF)]
        + [("nint", -1)],
        -e.tC,
    )


# ---------------------------------------------------------------- fringe trees


def build_fringe_assignment(e: Encoder) -> None:
    m, s = e.m, e.spec
    if len(s.catalog) == 0:
        raise MilpError("fringe catalog is empty")
    n_star, rho = e.n_star, e.rho
    m.integer("nG", s.n_lb, n_star)
    for X in "CTF":
        for i in _range(1, e.size(X)):
            for p in e.fringe_ids(X, i):
                m.binary(e.fr(X, i, p))
    for p in _range(1, len(s.catalog)):
        m.integer(f"fc_{p}", *s.fc.get(p, (0, n_star)))
    for j, key in enumerate(e.ac_keys, start=1):
        m.integer(f"aclf_{j}", *s.aclf.get(key, (0, n_star)))
    for X in "CTF":
        for i in _range(1, e.size(X)):
            m.integer(f"degex{X}_{i}", 0, 3)
            m.integer(f"hyd{X}_{i}", 0, 4)
            m.integer(f"ion{X}_{i}", -3, 3)
            m.integer(f"ht{X}_{i}", 0, rho)
    for k in e.pathable:
        for i in _range(1, e.tT):
            m.binary(f"sigma_{k}_{i}")

    n_terms: Terms = []
    fc_terms: dict[int, Terms] = {p: [] for p in _range(1, len(s.catalog))}
    ac_terms: dict[str, Terms] = {k: [] for k in e.ac_keys}
    for X in "CTF":
        for i in _range(1, e.size(X)):
            ids = e.fringe_ids(X, i)
            frs = [(e.fr(X, i, p), 1.0) for p in ids]
            if X == "C":
                e.eq(f"ex_one_{X}_{i}", frs, 1)
            else:
                e.eq(f"ex_one_{X}_{i}", frs + [(f"v{X}_{i}", -1)])
            st = {p: e.trees[p].stats for p in ids}
            e.eq(
                f"ex_degex_{X}_{i}",
                [(e.fr(X, i, p), st[p].root_degree) for p in ids] + [(f"degex{X}_{i}", -1)],
            )
            e.eq(
                f"ex_hyd_{X}_{i}",
                [(e.fr(X, i, p), st[p].root_hydrogens) for p in ids] + [(f"hyd{X}_{i}", -1)],
            )
            e.eq(
                f"ex_ion_{X}_{i}",
                [(e.fr(X, i, p), st[p].root_ion) for p in ids] + [(f"ion{X}_{i}", -1)],
            )
            e.eq(
                f"ex_ht_{X}_{i}",
                [(e.fr(X, i, p), st[p].height) for p in ids] + [(f"ht{X}_{i}", -1)],
            )
            if X == "F":
                e.ge(
                    f"ex_leaf_{i}",
                    [(e.fr(X, i, p), 1) for p in ids if st[p].height == rho]
                    + [(f"vF_{i}", -1), (f"useF_{i+1}", 1)],
                )
            for p in ids:
                n_terms.append((e.fr(X, i, p), st[p].n_heavy))
                fc_terms[p].append((e.fr(X, i, p), 1))
                for key, cnt in st[p].leaf_configs:
                    ac_terms[key].append((e.fr(X, i, p), cnt))
    e.eq(
        "ex_n",
        n_terms
        + [(f"vT_{i}", 1) for i in _range(1, e.tT)]
        + [(f"vF_{i}", 1) for i in _range(1, e.tF)]
        + [("nG", -1)],
        -e.tC,
    )
    for p, terms in fc_terms.items():
        e.eq(f"ex_fc_{p}", terms + [(f"fc_{p}", -1)])
    for j, key in enumerate(e.ac_keys, start=1):
        e.eq(f"ex_aclf_{j}", ac_terms[key] + [(f"aclf_{j}", -1)])

    seed = s.seed
    for i in _range(1, e.tC):
        lo, hi = seed.vertices[i - 1].ch
        if i <= e.tCt:
            e.ge(f"ex_ch_a_{i}", [(f"htC_{i}", 1), (f"dchiF_{i}", n_star)], lo)
            e.ge(f"ex_ch_b_{i}", [(f"clrF_{i}", 1)], lo - rho)
            e.le(f"ex_ch_c_{i}", [(f"htC_{i}", 1)], hi)
            e.le(f"ex_ch_d_{i}", [(f"clrF_{i}", 1), (f"dchiF_{i}", n_star)], hi - rho + n_star)
        else:
            e.ge(f"ex_ch_a_{i}", [(f"htC_{i}", 1)], lo)
            e.le(f"ex_ch_c_{i}", [(f"htC_{i}", 1)], hi)
    for k in e.pathable:
        lo, hi = seed.edge(k).ch
        for i in _range(1, e.tT):
            f = f"dchiF_{e.tCt + i}"
            e.le(
                f"ex_chk_a_{k}_{i}",
                [(f"htT_{i}", 1), (f, -n_star), (f"chiTk_{i}_{k}", n_star)],
                hi + n_star,
            )
            e.le(
                f"ex_chk_b_{k}_{i}",
                [(f"clrF_{e.tCt + i}", 1), (f, n_star), (f"chiTk_{i}_{k}", n_star)],
                hi - rho + 2 * n_star,
            )
            e.ge(f"ex_sig_a_{k}_{i}", [(f"chiTk_{i}_{k}", 1), (f"sigma_{k}_{i}", -1)])
            e.ge(
                f"ex_sig_b_{k}_{i}",
                [(f"htT_{i}", 1), (f, n_star), (f"sigma_{k}_{i}", -n_star)],
                lo - n_star,
            )
            e.ge(
                f"ex_sig_c_{k}_{i}",
                [(f"clrF_{e.tCt + i}", 1), (f, -n_star), (f"sigma_{k}_{i}", -n_star)],
                lo - rho - 2 * n_star,
            )
        e.eq(
            f"ex_sig_{k}",
            [(f"sigma_{k}_{i}", 1) for i in _range(1, e.tT)] + [(f"dchiT_{k}", -1)],
        )


# ---------------------------------------------------------------- degrees


def build_degrees(e: Encoder) -> None:
    m, s = e.m, e.spec
    for X in "CTF":
        for i in _range(1, e.size(X)):
            m.integer(f"deg{X}_{i}", 0, 4)
            m.integer(f"degint{X}_{i}", 1 if X == "C" else 0, 4)
            d0 = 1 if X == "C" else 0
            for d in _range(d0, 4):
                m.binary(f"dg{X}_{i}_{d}")
                m.binary(f"dgint{X}_{i}_{d}")
    for i in _range(1, e.tC):
        m.integer(f"degCT_{i}", 0, 4)
        m.integer(f"degTC_{i}", 0, 4)
    for d in _range(1, 4):
        m.integer(f"dg_{d}", *s.dg.get(d, (0, e.n_star)))
        m.integer(f"dgint_{d}", *s.dg_int.get(d, (0, e.n_star)))

    for i in _range(1, e.tC):
        e.eq(f"deg_ct_{i}", [(f"dchiT_{k}", 1) for k in e.ib_plus(i)] + [(f"degCT_{i}", -1)])
        e.eq(f"deg_tc_{i}", [(f"dchiT_{k}", 1) for k in e.ib_minus(i)] + [(f"degTC_{i}", -1)])
        row = [(f"degCm_{i}", 1), (f"degCp_{i}", 1), (f"degCT_{i}", 1), (f"degTC_{i}", 1)]
        if i <= e.tCt:
            row.append((f"dchiF_{i}", 1))
        e.eq(f"deg_intC_{i}", row + [(f"degintC_{i}", -1)])
        e.ge(
            f"deg_leafC_{i}",
            [(e.fr("C", i, p), 1) for p in e.fringe_ids("C", i) if e.trees[p].stats.height == e.rho]
            + [(f"degintC_{i}", 1)],
            2,
        )
    for i in _range(1, e.tT):
        e.eq(
            f"deg_intT_{i}",
            [(f"vT_{i}", 2), (f"dchiF_{e.tCt + i}", 1), (f"degintT_{i}", -1)],
        )
    for i in _range(1, e.tF):
        e.eq(f"deg_intF_{i}", [(f"vF_{i}", 1), (f"useF_{i+1}", 1), (f"degintF_{i}", -1)])
    for X in "CTF":
        d0 = 1 if X == "C" else 0
        for i in _range(1, e.size(X)):
            e.eq(
                f"deg_tot_{X}_{i}",
                [(f"degint{X}_{i}", 1), (f"degex{X}_{i}", 1), (f"deg{X}_{i}", -1)],
            )
            e.eq(f"deg_oh_{X}_{i}", [(f"dg{X}_{i}_{d}", 1) for d in _range(d0, 4)], 1)
            e.eq(
                f"deg_val_{X}_{i}",
                [(f"dg{X}_{i}_{d}", d) for d in _range(1, 4)]
                + [(f"deg{X}_{i}", -1), (f"hyd{X}_{i}", -1)],
            )
            e.eq(f"deg_ohint_{X}_{i}", [(f"dgint{X}_{i}_{d}", 1) for d in _range(d0, 4)], 1)
            e.eq(
                f"deg_valint_{X}_{i}",
                [(f"dgint{X}_{i}_{d}", d) for d in _range(1, 4)] + [(f"degint{X}_{i}", -1)],
            )
    for d in _range(1, 4):
        e.eq(
            f"deg_dg_{d}",
            [(f"dg{X}_{i}_{d}", 1) for X in "CTF" for i in _range(1, e.size(X))]
            + [(f"dg_{d}", -1)],
        )
        e.eq(
            f"deg_dgint_{d}",
            [(f"dgint{X}_{i}_{d}", 1) for X in "CTF" for i in _range(1, e.size(X))]
            + [(f"dgint_{d}", -1)],
        )


# ---------------------------------------------------------------- multiplicity

_BD_FAMILIES = ("C", "T", "CT", "TC", "F", "CF", "TF")


def build_multiplicity(e: Encoder) -> None:
    m, s = e.m, e.spec
    onehots: list[tuple[str, str]] = []  # (integer var, indicator prefix)
    for i in _range(2, e.tT):
        onehots.append((f"bT_{i}", f"dbT_{i}"))
    for i in _range(2, e.tF):
        onehots.append((f"bF_{i}", f"dbF_{i}"))
    for k in e.direct:
        onehots.append((f"bC_{k}", f"dbC_{k}"))
    for k in e.pathable:
        onehots.append((f"bCT_{k}", f"dbCT_{k}"))
        onehots.append((f"bTC_{k}", f"dbTC_{k}"))
    for c in _range(1, e.cF):
        onehots.append((f"bsF_{c}", f"dbsF_{c}"))
    for var, _ in onehots:
        m.integer(var, 0, 3)
    for X in "CTF":
        for i in _range(1, e.size(X)):
            m.integer(f"bex{X}_{i}", 0, 4)
    for _, pre in onehots:
        for mm in _range(0, 3):
            m.binary(f"{pre}_{mm}")
    cap = 2 * s.nint[1]
    for mm in _range(1, 3):
        for fam in _BD_FAMILIES:
            m.integer(f"bd{fam}_{mm}", 0, cap)
        m.integer(f"bdint_{mm}", 0, cap)

    def active(name: str, var: str, gate: str) -> None:
        e.ge(name + "_l", [(var, 1), (gate, -1)])
        e.le(name + "_u", [(var, 1), (gate, -3)])

    for k in e.direct:
        active(f"beta_C_{k}", f"bC_{k}", f"useC_{k}")
    for X in "TF":
        for i in _range(2, e.size(X)):
            active(f"beta_{X}_{i}", f"b{X}_{i}", f"use{X}_{i}")
    for k in e.pathable:
        active(f"beta_CT_{k}", f"bCT_{k}", f"dchiT_{k}")
        active(f"beta_TC_{k}", f"bTC_{k}", f"dchiT_{k}")
    for c in _range(1, e.cF):
        active(f"beta_sF_{c}", f"bsF_{c}", f"dchiF_{c}")
    for var, pre in onehots:
        e.eq(f"beta_oh_{var}", [(f"{pre}_{mm}", 1) for mm in _range(0, 3)], 1)
        e.eq(f"beta_val_{var}", [(f"{pre}_{mm}", mm) for mm in _range(1, 3)] + [(var, -1)])
    for X in "CTF":
        for i in _range(1, e.size(X)):
            e.eq(
                f"beta_ex_{X}_{i}",
                [(e.fr(X, i, p), e.trees[p].stats.root_bond_sum) for p in e.fringe_ids(X, i)]
                + [(f"bex{X}_{i}", -1)],
            )
    for mm in _range(1, 3):
        fam = {
            "C": [f"dbC_{k}_{mm}" for k in e.direct],
            "T": [f"dbT_{i}_{mm}" for i in _range(2, e.tT)],
            "CT": [f"dbCT_{k}_{mm}" for k in e.pathable],
            "TC": [f"dbTC_{k}_{mm}" for k in e.pathable],
            "F": [f"dbF_{i}_{mm}" for i in _range(2, e.tF)],
            "CF": [f"dbsF_{c}_{mm}" for c in _range(1, e.tCt)],
            "TF": [f"dbsF_{c}_{mm}" for c in _range(e.tCt + 1, e.cF)],
        }
        for name in _BD_FAMILIES:
            e.eq(f"beta_bd{name}_{mm}", [(v, 1) for v in fam[name]] + [(f"bd{name}_{mm}", -1)])
        e.eq(
            f"beta_bdint_{mm}",
            [(f"bd{name}_{mm}", 1) for name in _BD_FAMILIES] + [(f"bdint_{mm}", -1)],
        )


# ---------------------------------------------------------------- elements and valence


def mass_bounds(e: Encoder) -> tuple[int, int, int]:
    """(upper bound on Mass, smallest and largest admissible atom count)."""
    s = e.spec
    mass_ub = sum(e.table.mass10(a) * s.na.get(a, (0, s.n_star))[1] for a in e.lam)
    h_lo, h_hi = s.na.get("H", (0, 0))
    return mass_ub, max(1, s.n_lb + h_lo), s.n_star + h_hi


def build_valence(e: Encoder) -> None:
    m, s = e.m, e.spec
    tab = e.table
    for i in _range(1, e.tT):
        m.integer(f"bCTv_{i}", 0, 3)
        m.integer(f"bTCv_{i}", 0, 3)
    for i in _range(1, e.tF):
        m.integer(f"bCFv_{i}", 0, 3)
        m.integer(f"bTFv_{i}", 0, 3)
    for X in "CTF":
        for i in _range(1, e.size(X)):
            m.integer(f"al{X}_{i}", 0, len(e.lam_int))
            for a in e.lam_int:
                m.binary(f"da{X}_{i}_{a}")
    mass_ub, atm_lo, atm_hi = mass_bounds(e)
    m.integer("Mass", 0, mass_ub)
    m_avg = mass_ub / atm_lo
    m.continuous("msbar", 0, m_avg)
    for n in _range(atm_lo, atm_hi):
        m.binary(f"datm_{n}")
    for a in e.lam:
        m.integer(f"na_{a}", *s.na.get(a, (0, s.n_star)))
    for a in e.lam_int:
        m.integer(f"naint_{a}", *s.na_int.get(a, (0, s.n_star)))
        for X in "CTF":
            m.integer(f"na{X}_{a}", 0, s.n_star)
    for a in e.lam_ex:
        ub = s.na.get(a, (0, s.n_star))[1]
        for X in "CTF":
            m.integer(f"naex{X}_{a}", 0, ub)
        m.integer(f"naex_{a}", 0, ub)

    # multiplicity of the edge joining a path end to its seed vertex, moved onto the T vertex
    for i in _range(1, e.tT):
        for k in e.pathable:
            g_ct = [(f"useT_{i}", -3), (f"chiTk_{i}_{k}", 3)]
            e.le(f"al_ct_u_{k}_{i}", [(f"bCTv_{i}", 1), (f"bCT_{k}", -1)] + g_ct, 3)
            e.le(f"al_ct_l_{k}_{i}", [(f"bCT_{k}", 1), (f"bCTv_{i}", -1)] + g_ct, 3)
            g_tc = [(f"useT_{i+1}", -3), (f"chiTk_{i}_{k}", 3)]
            e.le(f"al_tc_u_{k}_{i}", [(f"bTCv_{i}", 1), (f"bTC_{k}", -1)] + g_tc, 3)
            e.le(f"al_tc_l_{k}_{i}", [(f"bTC_{k}", 1), (f"bTCv_{i}", -1)] + g_tc, 3)
        e.le(f"al_ct_first_{i}", [(f"bCTv_{i}", 1), (f"useT_{i}", 3)], 3)
        e.le(f"al_ct_used_{i}", [(f"bCTv_{i}", 1), (f"vT_{i}", -3)])
        e.le(f"al_tc_last_{i}", [(f"bTCv_{i}", 1), (f"useT_{i+1}", 3)], 3)
        e.le(f"al_tc_used_{i}", [(f"bTCv_{i}", 1), (f"vT_{i}", -3)])
    for i in _range(1, e.tF):
        for c in _range(1, e.cF):
            var = f"bCFv_{i}" if c <= e.tCt else f"bTFv_{i}"
            g = [(f"useF_{i}", -3), (f"chiFc_{i}_{c}", 3)]
            e.le(f"al_sf_u_{c}_{i}", [(var, 1), (f"bsF_{c}", -1)] + g, 3)
            e.le(f"al_sf_l_{c}_{i}", [(f"bsF_{c}", 1), (var, -1)] + g, 3)
        e.le(
            f"al_cf_col_{i}",
            [(f"bCFv_{i}", 1)] + [(f"chiFc_{i}_{c}", -3) for c in _range(1, e.tCt)],
        )
        e.le(f"al_cf_first_{i}", [(f"bCFv_{i}", 1), (f"useF_{i}", 3)], 3)
        e.le(
            f"al_tf_col_{i}",
            [(f"bTFv_{i}", 1)] + [(f"chiFc_{i}_{c}", -3) for c in _range(e.tCt + 1, e.cF)],
        )
        e.le(f"al_tf_first_{i}", [(f"bTFv_{i}", 1), (f"useF_{i}", 3)], 3)

    for X in "CTF":
        for i in _range(1, e.size(X)):
            das = [(f"da{X}_{i}_{a}", 1) for a in e.lam_int]
            if X == "C":
                e.eq(f"al_one_{X}_{i}", das, 1)
            else:
                e.eq(f"al_one_{X}_{i}", das + [(f"v{X}_{i}", -1)])
            e.eq(
                f"al_code_{X}_{i}",
                [(f"da{X}_{i}_{a}", e.code[a]) for a in e.lam_int] + [(f"al{X}_{i}", -1)],
            )
            e.eq(
                f"al_root_{X}_{i}",
                [(e.fr(X, i, p), e.code[e.trees[p].elements[0]]) for p in e.fringe_ids(X, i)]
                + [(f"al{X}_{i}", -1)],
            )
    # valence balance
    for i in _range(1, e.tC):
        row = [(f"bC_{j}", 1) for j in e.ia_plus(i) + e.ia_minus(i)]
        row += [(f"bCT_{k}", 1) for k in e.ib_plus(i)]
        row += [(f"bTC_{k}", 1) for k in e.ib_minus(i)]
        if i <= e.tCt:
            row.append((f"bsF_{i}", 1))
        row += [(f"bexC_{i}", 1), (f"ionC_{i}", -1)]
        row += [(f"daC_{i}_{a}", -tab.valence(a)) for a in e.lam_int]
        e.eq(f"al_val_C_{i}", row)
    for i in _range(1, e.tT):
        row = []
        if i >= 2:
            row.append((f"bT_{i}", 1))
        if i + 1 <= e.tT:
            row.append((f"bT_{i+1}", 1))
        row += [(f"bexT_{i}", 1), (f"bCTv_{i}", 1), (f"bTCv_{i}", 1), (f"bsF_{e.tCt + i}", 1)]
        row += [(f"ionT_{i}", -1)] + [(f"daT_{i}_{a}", -tab.valence(a)) for a in e.lam_int]
        e.eq(f"al_val_T_{i}", row)
    for i in _range(1, e.tF):
        row = []
        if i >= 2:
            row.append((f"bF_{i}", 1))
        if i + 1 <= e.tF:
            row.append((f"bF_{i+1}", 1))
        row += [(f"bCFv_{i}", 1), (f"bTFv_{i}", 1), (f"bexF_{i}", 1), (f"ionF_{i}", -1)]
        row += [(f"daF_{i}_{a}", -tab.valence(a)) for a in e.lam_int]
        e.eq(f"al_val_F_{i}", row)
    # element counts
    for a in e.lam_int:
        for X in "CTF":
            e.eq(
                f"al_na{X}_{a}",
                [(f"da{X}_{i}_{a}", 1) for i in _range(1, e.size(X))] + [(f"na{X}_{a}", -1)],
            )
        e.eq(f"al_naint_{a}", [(f"na{X}_{a}", 1) for X in "CTF"] + [(f"naint_{a}", -1)])
    for a in e.lam_ex:
        for X in "CTF":
            row = []
            for i in _range(1, e.size(X)):
                for p in e.fringe_ids(X, i):
                    cnt = e.trees[p].stats.count(a)
                    if cnt:
                        row.append((e.fr(X, i, p), cnt))
            e.eq(f"al_naex{X}_{a}", row + [(f"naex{X}_{a}", -1)])
        e.eq(f"al_naex_{a}", [(f"naex{X}_{a}", 1) for X in "CTF"] + [(f"naex_{a}", -1)])
    for a in e.lam:
        row = []
        if a in e.code:
            row.append((f"naint_{a}", 1))
        if a in e.lam_ex:
            row.append((f"naex_{a}", 1))
        e.eq(f"al_na_{a}", row + [(f"na_{a}", -1)])
    for i in _range(1, e.tC):
        allowed = s.allowed_elements(i)
        e.eq(f"al_allowed_{i}", [(f"daC_{i}_{a}", 1) for a in allowed if a in e.code], 1)
    e.eq("al_mass", [(f"na_{a}", tab.mass10(a)) for a in e.lam] + [("Mass", -1)])
    atoms = list(_range(atm_lo, atm_hi))
    e.eq("al_atm_one", [(f"datm_{n}", 1) for n in atoms], 1)
    h_terms = [("naex_H", -1)] if "H" in e.lam_ex else []
    e.eq("al_atm_n", [(f"datm_{n}", n) for n in atoms] + [("nG", -1)] + h_terms)
    for n in atoms:
        e.le(f"al_ms_u_{n}", [("msbar", 1), ("Mass", -1.0 / n), (f"datm_{n}", m_avg)], m_avg)
        e.ge(f"al_ms_l_{n}", [("msbar", 1), ("Mass", -1.0 / n), (f"datm_{n}", -m_avg)], -m_avg)


# ---------------------------------------------------------------- bond-count windows


def build_bond_bounds(e: Encoder) -> None:
    m, s = e.m, e.spec
    seed = s.seed
    for k in e.pathable:
        for i in _range(2, e.tT):
            for mm in (2, 3):
                m.binary(f"bdTk_{k}_{i}_{mm}")
    for k in seed.indices("EQ1") + seed.indices("ZeroOne"):
        for mm in (2, 3):
            lo, hi = getattr(seed.edge(k), f"bd{mm}")
            e.ge(f"bd_direct_l_{k}_{mm}", [(f"dbC_{k}_{mm}", 1)], lo)
            e.le(f"bd_direct_u_{k}_{mm}", [(f"dbC_{k}_{mm}", 1)], hi)
    for mm in (2, 3):
        for k in e.pathable:
            for i in _range(2, e.tT):
                e.ge(
                    f"bd_link_{k}_{i}_{mm}",
                    [(f"bdTk_{k}_{i}_{mm}", 1), (f"dbT_{i}_{mm}", -1), (f"chiTk_{i}_{k}", -1)],
                    -1,
                )
        e.ge(
            f"bd_cap_{mm}",
            [(f"dbT_{j}_{mm}", 1) for j in _range(2, e.tT)]
            + [(f"bdTk_{k}_{i}_{mm}", -1) for k in e.pathable for i in _range(2, e.tT)],
        )
        for k in e.pathable:
            lo, hi = getattr(seed.edge(k), f"bd{mm}")
            row = [(f"bdTk_{k}_{i}_{mm}", 1) for i in _range(2, e.tT)]
            row += [(f"dbCT_{k}_{mm}", 1), (f"dbTC_{k}_{mm}", 1)]
            e.ge(f"bd_path_l_{k}_{mm}", row, lo)
            e.le(f"bd_path_u_{k}_{mm}", row, hi)


# ---------------------------------------------------------------- GNN simulation


def _msg(W: np.ndarray, z: int, theta_name) -> Terms:
    """Terms of ``sum_z' W[z', z] * theta(z')`` with ``theta_name(z')`` 1-based."""
    col = W[:, z - 1]
    return [(theta_name(zp + 1), float(w)) for zp, w in enumerate(col) if w != 0.0]


def _lrelu_rows(e: Encoder, name: str, th: str, tau: str, dt: str, M: float, kappa: float) -> None:
    """theta = max(kappa*tau, tau) with dt = 1 selecting the negative branch."""
    e.le(f"{name}_a_u", [(th, 1), (tau, -kappa), (dt, M)], M)
    e.ge(f"{name}_a_l", [(th, 1), (tau, -kappa), (dt, -M)], -M)
    e.le(f"{name}_b_u", [(th, 1), (tau, -1), (dt, -M)])
    e.ge(f"{name}_b_l", [(th, 1), (tau, -1), (dt, M)])
    e.ge(f"{name}_c_l", [(tau, 1), (dt, M)])
    e.le(f"{name}_c_u", [(tau, 1), (dt, M)], M)


def build_gnn_simulation(e: Encoder, model: GnnModel) -> None:
    m, s = e.m, e.spec
    cfg = model.config
    if model.bigM is None:
        raise MilpError("model carries no big-M bounds; run compute_bigM first")
    if cfg.rho != s.rho:
        raise MilpError(f"model uses rho={cfg.rho}, specification rho={s.rho}")
    L, K, Kn = cfg.layers, cfg.k_hid, cfg.k_node
    Ml = model.bigM.layers
    Mh = model.bigM.head
    kappa = cfg.kappa
    p = model.params
    emb = {q: model.embed(e.trees[q]) for q in e.trees}
    tab = e.table

    def th(X, i, z, l):
        return f"th{X}_{i}_{z}_{l}"

    # initial features
    for X in "CTF":
        for i in _range(1, e.size(X)):
            for z in _range(1, Kn):
                m.continuous(th(X, i, z, 0))
            for z, a in enumerate(ONE_HOT, start=1):
                row = [(th(X, i, z, 0), 1)]
                if a in e.code:
                    row.append((f"da{X}_{i}_{a}", -1))
                e.eq(f"gnn_init_{X}_{i}_{z}", row)
            e.eq(
                f"gnn_init_{X}_{i}_4",
                [(th(X, i, 4, 0), 1), (f"deg{X}_{i}", -1), (f"hyd{X}_{i}", -1)],
            )
            e.eq(
                f"gnn_init_{X}_{i}_5",
                [(th(X, i, 5, 0), 1), (f"ion{X}_{i}", -1)]
                + [(f"da{X}_{i}_{a}", -tab.valence(a)) for a in e.lam_int],
            )
            e.eq(f"gnn_init_{X}_{i}_6", [(th(X, i, 6, 0), 1), (f"hyd{X}_{i}", -1)])
            e.eq(f"gnn_init_{X}_{i}_7", [(th(X, i, 7, 0), 1), (f"ion{X}_{i}", -1)])
            for j in _range(8, Kn):
                e.eq(
                    f"gnn_init_{X}_{i}_{j}",
                    [(th(X, i, j, 0), 1)]
                    + [
                        (e.fr(X, i, q), -float(emb[q][j - 8]))
                        for q in e.fringe_ids(X, i)
                        if emb[q][j - 8] != 0.0
                    ],
                )

    for l in range(L):
        W = p[f"W{l}"]
        b = p[f"b{l}"]
        M, Mn = Ml[l], Ml[l + 1]
        M2 = 2 * M  # room for the difference of two messages when a selector is off
        for X in "CTF":
            for i in _range(1, e.size(X)):
                for z in _range(1, K):
                    m.continuous(th(X, i, z, l + 1), -Mn, Mn)
                    m.continuous(f"tau{X}_{i}_{z}_{l+1}", -Mn, Mn)
                    m.binary(f"dt{X}_{i}_{z}_{l+1}")
        aux = []
        for k in e.direct:
            aux += [f"thCm_{k}", f"thCp_{k}"]
        for i in _range(1, e.tT):
            aux += [f"thTm_{i}", f"thTp_{i}", f"thCTC_{i}", f"thTCC_{i}", f"thTFF_{i}"]
        for i in _range(1, e.tF):
            aux += [f"thFm_{i}", f"thFp_{i}", f"thCFC_{i}", f"thTFT_{i}"]
        for k in e.pathable:
            aux += [f"thCTT_{k}", f"thTCT_{k}"]
        for c in _range(1, e.tCt):
            aux.append(f"thCFF_{c}")
        for a in aux:
            for z in _range(1, K):
                m.continuous(f"{a}_{z}_{l}", -M, M)

        for z in _range(1, K):
            msg = {}

            def wm(X, i):
                key = (X, i)
                if key not in msg:
                    msg[key] = _msg(W, z, lambda zp: th(X, i, zp, l))
                return msg[key]

            def ax(a):
                return f"{a}_{z}_{l}"

            # associated variables
            for k in e.direct:
                for name, v in (("thCm", e.tail(k)), ("thCp", e.head(k))):
                    e.within(f"gnn_{name}_{k}_{z}_{l}", [(ax(f"{name}_{k}"), 1)] + _neg(wm("C", v)),
                             [(f"useC_{k}", -M)], M)
                    e.within(f"gnn_{name}g_{k}_{z}_{l}", [(ax(f"{name}_{k}"), 1)], [(f"useC_{k}", M)])
            for X in "TF":
                n = e.size(X)
                for i in _range(1, n):
                    for name, j, gate in ((f"th{X}m", i - 1, f"use{X}_{i}"), (f"th{X}p", i + 1, f"use{X}_{i+1}")):
                        var = ax(f"{name}_{i}")
                        if 1 <= j <= n:
                            e.within(f"gnn_{name}_{i}_{z}_{l}", [(var, 1)] + _neg(wm(X, j)), [(gate, -M)], M)
                        e.within(f"gnn_{name}g_{i}_{z}_{l}", [(var, 1)], [(gate, M)])
            for k in e.pathable:
                for name in ("thCTT", "thTCT"):
                    var = ax(f"{name}_{k}")
                    for i in _range(1, e.tT):
                        # the block of colour k starts where useT_i = 0 and ends where useT_{i+1} = 0
                        gate_edge = f"useT_{i}" if name == "thCTT" else f"useT_{i+1}"
                        e.within(
                            f"gnn_{name}_{k}_{i}_{z}_{l}",
                            [(var, 1)] + _neg(wm("T", i)),
                            [(f"chiTk_{i}_{k}", -M2), (gate_edge, M2)],
                            M2,
                        )
                    e.within(f"gnn_{name}g_{k}_{z}_{l}", [(var, 1)], [(f"dchiT_{k}", M)])
            for i in _range(1, e.tT):
                for name, end, gate_edge in (
                    ("thCTC", e.tail, f"useT_{i}"),
                    ("thTCC", e.head, f"useT_{i+1}"),
                ):
                    var = ax(f"{name}_{i}")
                    for k in e.pathable:
                        e.within(
                            f"gnn_{name}_{i}_{k}_{z}_{l}",
                            [(var, 1)] + _neg(wm("C", end(k))),
                            [(f"chiTk_{i}_{k}", -M2), (gate_edge, M2)],
                            M2,
                        )
                    e.within(f"gnn_{name}e_{i}_{z}_{l}", [(var, 1)], [(gate_edge, -M)], M)
                    e.within(f"gnn_{name}v_{i}_{z}_{l}", [(var, 1)], [(f"vT_{i}", M)])
                var = ax(f"thTFF_{i}")
                for j in _range(1, e.tF):
                    e.within(
                        f"gnn_thTFF_{i}_{j}_{z}_{l}",
                        [(var, 1)] + _neg(wm("F", j)),
                        [(f"chiFc_{j}_{e.tCt + i}", -M2), (f"useF_{j}", M2)],
                        M2,
                    )
                e.within(f"gnn_thTFFg_{i}_{z}_{l}", [(var, 1)], [(f"dchiF_{e.tCt + i}", M)])
            for c in _range(1, e.tCt):
                var = ax(f"thCFF_{c}")
                for i in _range(1, e.tF):
                    e.within(
                        f"gnn_thCFF_{c}_{i}_{z}_{l}",
                        [(var, 1)] + _neg(wm("F", i)),
                        [(f"chiFc_{i}_{c}", -M2), (f"useF_{i}", M2)],
                        M2,
                    )
                e.within(f"gnn_thCFFg_{c}_{z}_{l}", [(var, 1)], [(f"dchiF_{c}", M)])
            for i in _range(1, e.tF):
                for name, colours, owner in (
                    ("thCFC", list(_range(1, e.tCt)), lambda c: ("C", c)),
                    ("thTFT", list(_range(e.tCt + 1, e.cF)), lambda c: ("T", c - e.tCt)),
                ):
                    var = ax(f"{name}_{i}")
                    for c in colours:
                        e.within(
                            f"gnn_{name}_{i}_{c}_{z}_{l}",
                            [(var, 1)] + _neg(wm(*owner(c))),
                            [(f"chiFc_{i}_{c}", -M2), (f"useF_{i}", M2)],
                            M2,
                        )
                    e.within(f"gnn_{name}s_{i}_{z}_{l}", [(var, 1)], [(f"chiFc_{i}_{c}", M) for c in colours])
                    e.within(f"gnn_{name}e_{i}_{z}_{l}", [(var, 1)], [(f"useF_{i}", -M)], M)

            # layer update
            bz = float(b[z - 1])
            for i in _range(1, e.tC):
                row = list(wm("C", i))
                row += [(ax(f"thCm_{k}"), 1) for k in e.ia_minus(i)]
                row += [(ax(f"thCp_{k}"), 1) for k in e.ia_plus(i)]
                row += [(ax(f"thCTT_{k}"), 1) for k in e.ib_plus(i)]
                row += [(ax(f"thTCT_{k}"), 1) for k in e.ib_minus(i)]
                if i <= e.tCt:
                    row.append((ax(f"thCFF_{i}"), 1))
                tau = f"tauC_{i}_{z}_{l+1}"
                e.eq(f"gnn_tauC_{i}_{z}_{l+1}", row + [(tau, -1)], -bz)
                _lrelu_rows(e, f"gnn_lrC_{i}_{z}_{l+1}", th("C", i, z, l + 1), tau,
                            f"dtC_{i}_{z}_{l+1}", Mn, kappa)
            for X in "TF":
                for i in _range(1, e.size(X)):
                    row = list(wm(X, i)) + [(ax(f"th{X}m_{i}"), 1), (ax(f"th{X}p_{i}"), 1)]
                    if X == "T":
                        row += [(ax(f"thCTC_{i}"), 1), (ax(f"thTCC_{i}"), 1), (ax(f"thTFF_{i}"), 1)]
                    else:
                        row += [(ax(f"thCFC_{i}"), 1), (ax(f"thTFT_{i}"), 1)]
                    tau = f"tau{X}_{i}_{z}_{l+1}"
                    v = f"v{X}_{i}"
                    # |tau - (row + b)| <= Mn (1 - v)
                    e.le(f"gnn_tau{X}_{i}_{z}_{l+1}_u", [(tau, 1)] + _neg(row) + [(v, Mn)], bz + Mn)
                    e.ge(f"gnn_tau{X}_{i}_{z}_{l+1}_l", [(tau, 1)] + _neg(row) + [(v, -Mn)], bz - Mn)
                    e.within(f"gnn_th{X}g_{i}_{z}_{l+1}", [(th(X, i, z, l + 1), 1)], [(v, Mn)])
                    _lrelu_rows(e, f"gnn_lr{X}_{i}_{z}_{l+1}", th(X, i, z, l + 1), tau,
                                f"dt{X}_{i}_{z}_{l+1}", Mn, kappa)

    # readout
    WC = p["WC"]
    MR = Mh[0]
    for q in _range(1, cfg.k_c):
        m.continuous(f"tauR_{q}", -MR, MR)
        m.binary(f"dtR_{q}")
        m.continuous(f"thR_{q}", -MR, MR)
    for q in _range(1, cfg.k_c):
        row = []
        for X in "CTF":
            for i in _range(1, e.size(X)):
                row += _msg(WC, q, lambda z, X=X, i=i: th(X, i, z, L))
        e.eq(f"gnn_readout_{q}", row + [(f"tauR_{q}", -1)])
        _lrelu_rows(e, f"gnn_lrR_{q}", f"thR_{q}", f"tauR_{q}", f"dtR_{q}", MR, kappa)

    # head: ReLU hidden layers, linear output
    prev = [f"thR_{q}" for q in _range(1, cfg.k_c)]
    for j, width in enumerate(cfg.head):
        V, cj = p[f"V{j}"], p[f"c{j}"]
        Mj = Mh[j + 1]
        cur = []
        for h in _range(1, width):
            tau, dt, out = f"tauH_{j+1}_{h}", f"dtH_{j+1}_{h}", f"thH_{j+1}_{h}"
            m.continuous(tau, -Mj, Mj)
            m.binary(dt)
            m.continuous(out, 0, Mj)
            row = [(prev[r], float(V[r, h - 1])) for r in range(len(prev)) if V[r, h - 1] != 0.0]
            e.eq(f"gnn_head_{j+1}_{h}", row + [(tau, -1)], -float(cj[h - 1]))
            _lrelu_rows(e, f"gnn_relu_{j+1}_{h}", out, tau, dt, Mj, 0.0)
            cur.append(out)
        prev = cur
    j = len(cfg.head)
    V, cj = p[f"V{j}"], p[f"c{j}"]
    m.continuous("y")
    row = [(prev[r], float(V[r, 0])) for r in range(len(prev)) if V[r, 0] != 0.0]
    e.eq("gnn_output", row + [("y", -1)], -float(cj[0]))


# ---------------------------------------------------------------- assembly

FAMILIES = (
    ("cyclical_base", build_cyclical_base),
    ("leaf_paths", build_leaf_paths),
    ("fringe_trees", build_fringe_assignment),
    ("degrees", build_degrees),
    ("multiplicity", build_multiplicity),
    ("valence", build_valence),
    ("bond_bounds", build_bond_bounds),
)


def assemble(
    spec: Specification,
    model: GnnModel | None,
    y_range: Sequence[float] | None = None,
    table: ElementTable | None = None,
    name: str = "mgnn",
) -> MilpModel:
    """Full feasibility model.  ``model=None`` builds the structural part only."""
    e = Encoder(spec, MilpModel(name), table or default_elements())
    for tag, build in FAMILIES:
        with e.m.family(tag):
            build(e)
    if model is not None:
        with e.m.family("gnn"):
            build_gnn_simulation(e, model)
        if y_range is not None:
            lo, hi = y_range
            with e.m.family("range"):
                if lo is not None and math.isfinite(lo):
                    e.ge("range_lo", [("y", 1)], float(lo))
                if hi is not None and math.isfinite(hi):
                    e.le("range_hi", [("y", 1)], float(hi))
    return e.m


def encoder_for(spec: Specification, table: ElementTable | None = None) -> Encoder:
    """Index sets without building any rows (used by the witness codec)."""
    return Encoder(spec, MilpModel("scratch"), table or default_elements())
