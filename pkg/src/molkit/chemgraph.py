"""Chemical graphs, hydrogen suppression and the two-layered decomposition.

A chemical graph stores heavy and (optionally) explicit hydrogen atoms with
per-atom implicit hydrogen counts and integer ion-valences.  The
two-layered decomposition splits the hydrogen-suppressed graph into an
interior and a set of rooted fringe trees, one per interior vertex.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence


class ChemGraphError(ValueError):
    """Raised for malformed or unsupported chemical graphs."""


@dataclass(frozen=True)
class ElementInfo:
    valence: int
    mass10: int


class ElementTable:
    """Valence and integer mass (tenths of a unit, floored) per element symbol."""

    def __init__(self, entries: Mapping[str, ElementInfo], version: str = "1"):
        for sym, info in entries.items():
            if not 1 <= info.valence <= 6:
                raise ChemGraphError(f"element {sym}: valence {info.valence} outside [1, 6]")
            if info.mass10 <= 0:
                raise ChemGraphError(f"element {sym}: mass10 must be positive")
        self._entries = dict(entries)
        self.version = version

    @classmethod
    def from_json(cls, text: str) -> "ElementTable":
        raw = json.loads(text)
        entries = {
            sym: ElementInfo(int(v["valence"]), int(v["mass10"]))
            for sym, v in raw["elements"].items()
        }
        return cls(entries, str(raw.get("version", "1")))

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._entries

    def __iter__(self):
        return iter(self._entries)

    def info(self, symbol: str) -> ElementInfo:
        try:
            return self._entries[symbol]
        except KeyError:
            raise ChemGraphError(f"unknown element {symbol!r}") from None

    def valence(self, symbol: str) -> int:
        return self.info(symbol).valence

    def mass10(self, symbol: str) -> int:
        return self.info(symbol).mass10


@lru_cache(maxsize=None)
def default_elements() -> ElementTable:
    text = resources.files("molkit").joinpath("data/elements.json").read_text(encoding="utf-8")
    return ElementTable.from_json(text)


def load_element_table(path: str | Path | None = None) -> ElementTable:
    if path is None:
        return default_elements()
    return ElementTable.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Atom:
    element: str
    hydrogens: int = 0
    ion: int = 0


@dataclass(frozen=True)
class Bond:
    u: int
    v: int
    order: int


@dataclass(frozen=True)
class ChemicalGraph:
    """Atoms plus bonds; bonds are stored with ``u < v`` in sorted order."""

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...] = ()

    def __post_init__(self):
        atoms = tuple(self.atoms)
        bonds = []
        for b in self.bonds:
            u, v = (b.u, b.v) if b.u < b.v else (b.v, b.u)
            bonds.append(Bond(u, v, b.order))
        bonds.sort(key=lambda b: (b.u, b.v))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "bonds", tuple(bonds))

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @cached_property
    def adjacency(self) -> tuple[dict[int, int], ...]:
        adj: list[dict[int, int]] = [{} for _ in self.atoms]
        for b in self.bonds:
            adj[b.u][b.v] = b.order
            adj[b.v][b.u] = b.order
        return tuple(adj)

    def neighbors(self, v: int) -> list[int]:
        return sorted(self.adjacency[v])

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def bond_sum(self, v: int) -> int:
        return sum(self.adjacency[v].values())

    def is_connected(self) -> bool:
        if not self.atoms:
            return False
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for w in self.adjacency[u]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return len(seen) == len(self.atoms)

    def validate(self, table: ElementTable | None = None) -> None:
        """Check element symbols, simplicity, bond orders, connectivity and valence."""
        table = table or default_elements()
        if not self.atoms:
            raise ChemGraphError("graph has no atoms")
        for i, a in enumerate(self.atoms):
            if a.element not in table:
                raise ChemGraphError(f"atom {i}: unknown element {a.element!r}")
            if a.hydrogens < 0:
                raise ChemGraphError(f"atom {i}: negative hydrogen count")
            if not -3 <= a.ion <= 3:
                raise ChemGraphError(f"atom {i}: ion-valence {a.ion} outside [-3, 3]")
        seen = set()
        for b in self.bonds:
            if b.u == b.v:
                raise ChemGraphError(f"self-loop on atom {b.u}")
            if not (0 <= b.u < self.n_atoms and 0 <= b.v < self.n_atoms):
                raise ChemGraphError(f"bond ({b.u}, {b.v}) references a missing atom")
            if (b.u, b.v) in seen:
                raise ChemGraphError(f"parallel bond between {b.u} and {b.v}")
            seen.add((b.u, b.v))
            if b.order not in (1, 2, 3):
                raise ChemGraphError(f"unsupported bond order {b.order} between {b.u} and {b.v}")
        for i, a in enumerate(self.atoms):
            expected = table.valence(a.element) + a.ion
            got = self.bond_sum(i) + a.hydrogens
            if got != expected:
                raise ChemGraphError(
                    f"atom {i} ({a.element}): bonds + hydrogens = {got}, valence + ion = {expected}"
                )
        if not suppress_hydrogens(self).is_connected():
            raise ChemGraphError("graph is disconnected")


def suppress_hydrogens(g: ChemicalGraph) -> ChemicalGraph:
    """Drop hydrogen atoms, folding them into the hydrogen count of their neighbour."""
    if all(a.element != "H" for a in g.atoms):
        return g
    keep = [i for i, a in enumerate(g.atoms) if a.element != "H"]
    if not keep:
        raise ChemGraphError("no heavy atoms")
    new_index = {old: new for new, old in enumerate(keep)}
    extra = Counter()
    bonds = []
    for b in g.bonds:
        hu, hv = g.atoms[b.u].element == "H", g.atoms[b.v].element == "H"
        if hu and not hv:
            extra[b.v] += 1
        elif hv and not hu:
            extra[b.u] += 1
        elif not hu and not hv:
            bonds.append(Bond(new_index[b.u], new_index[b.v], b.order))
    atoms = [
        Atom(g.atoms[i].element, g.atoms[i].hydrogens + extra[i], g.atoms[i].ion) for i in keep
    ]
    return ChemicalGraph(tuple(atoms), tuple(bonds))


def vertex_heights(g: ChemicalGraph) -> list[int | None]:
    """Heights from iterative leaf removal; ``None`` where the height is undefined."""
    n = g.n_atoms
    if n < 2:
        raise ChemGraphError("height undefined for isolated vertex")
    deg = [g.degree(v) for v in range(n)]
    height: list[int | None] = [None] * n
    alive = set(range(n))
    rnd = 0
    while True:
        leaves = [v for v in alive if deg[v] == 1]
        if not leaves:
            break
        for v in leaves:
            height[v] = rnd
        for v in leaves:
            alive.discard(v)
        for v in leaves:
            for w in g.adjacency[v]:
                if w in alive:
                    deg[w] -= 1
        rnd += 1
    tree = [h is not None for h in height]
    for v in range(n):
        if not tree[v]:
            nbr = [height[w] for w in g.adjacency[v] if tree[w]]
            if nbr:
                height[v] = max(nbr) + 1
    return height


@dataclass(frozen=True)
class TwoLayerDecomposition:
    """Interior/exterior split of a hydrogen-suppressed graph."""

    graph: ChemicalGraph
    rho: int
    heights: tuple[int | None, ...]
    interior: tuple[int, ...]
    exterior: tuple[int, ...]
    interior_edges: tuple[tuple[int, int], ...]
    owner: tuple[int, ...]

    def interior_degree(self, v: int) -> int:
        return sum(1 for w in self.graph.adjacency[v] if self.owner[w] == w)


def decompose(g: ChemicalGraph, rho: int) -> TwoLayerDecomposition:
    if rho < 1:
        raise ChemGraphError("branch parameter must be at least 1")
    h = suppress_hydrogens(g)
    if h.n_atoms < 2:
        raise ChemGraphError("height undefined for isolated vertex")
    if not h.is_connected():
        raise ChemGraphError("graph is disconnected")
    heights = vertex_heights(h)
    deg = [h.degree(v) for v in range(h.n_atoms)]
    # tree vertices are exactly those removed as leaves
    is_tree = _tree_vertices(h, deg)
    exterior = [v for v in range(h.n_atoms) if is_tree[v] and heights[v] < rho]
    ext_set = set(exterior)
    interior = [v for v in range(h.n_atoms) if v not in ext_set]
    if not interior:
        raise ChemGraphError("graph entirely exterior")
    owner = list(range(h.n_atoms))
    for root in interior:
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for w in h.adjacency[u]:
                if w in ext_set and owner[w] == w:
                    owner[w] = root
                    queue.append(w)
    for v in exterior:
        if owner[v] == v:
            raise ChemGraphError(f"exterior vertex {v} is not attached to the interior")
    int_set = set(interior)
    edges = tuple((b.u, b.v) for b in h.bonds if b.u in int_set and b.v in int_set)
    return TwoLayerDecomposition(
        graph=h,
        rho=rho,
        heights=tuple(heights),
        interior=tuple(interior),
        exterior=tuple(exterior),
        interior_edges=edges,
        owner=tuple(owner),
    )


def _tree_vertices(g: ChemicalGraph, deg: list[int]) -> list[bool]:
    deg = list(deg)
    alive = set(range(g.n_atoms))
    tree = [False] * g.n_atoms
    while True:
        leaves = [v for v in alive if deg[v] == 1]
        if not leaves:
            return tree
        for v in leaves:
            tree[v] = True
            alive.discard(v)
        for v in leaves:
            for w in g.adjacency[v]:
                if w in alive:
                    deg[w] -= 1


@dataclass(frozen=True)
class FringeStats:
    n_heavy: int
    height: int
    root_degree: int
    root_hydrogens: int
    root_bond_sum: int
    root_ion: int
    root_element: str
    element_counts: tuple[tuple[str, int], ...]
    leaf_configs: tuple[tuple[str, int], ...]

    def count(self, element: str) -> int:
        return dict(self.element_counts).get(element, 0)

    def to_json(self) -> dict:
        return {
            "n_heavy": self.n_heavy,
            "height": self.height,
            "root_degree": self.root_degree,
            "root_hydrogens": self.root_hydrogens,
            "root_bond_sum": self.root_bond_sum,
            "root_ion": self.root_ion,
            "root_element": self.root_element,
            "element_counts": dict(self.element_counts),
            "leaf_configs": dict(self.leaf_configs),
        }


def leaf_config_key(a: str, b: str, order: int) -> str:
    """Adjacency-configuration key of an edge, symmetric in its end elements."""
    lo, hi = sorted((a, b))
    return f"{lo},{hi},{order}"


@dataclass(frozen=True)
class FringeTree:
    """Rooted chemical tree in canonical node order; node 0 is the root.

    ``source`` records the originating graph vertices when the tree was
    extracted from a molecule; it takes no part in equality.
    """

    elements: tuple[str, ...]
    hydrogens: tuple[int, ...]
    ions: tuple[int, ...]
    parents: tuple[int, ...]
    orders: tuple[int, ...]
    source: tuple[int, ...] | None = field(default=None, compare=False, hash=False)

    @classmethod
    def build(
        cls,
        elements: Sequence[str],
        hydrogens: Sequence[int],
        ions: Sequence[int],
        parents: Sequence[int],
        orders: Sequence[int],
        source: Sequence[int] | None = None,
    ) -> "FringeTree":
        """Create a tree from arbitrary node order (root must be node 0)."""
        n = len(elements)
        if n == 0 or parents[0] != -1:
            raise ChemGraphError("node 0 must be the root")
        children: list[list[int]] = [[] for _ in range(n)]
        for v in range(1, n):
            p = parents[v]
            if not 0 <= p < n or p == v:
                raise ChemGraphError(f"node {v}: bad parent {p}")
            children[p].append(v)

        labels = [_node_label(elements[v], hydrogens[v], ions[v], orders[v] if v else 0) for v in range(n)]
        codes: dict[int, str] = {}

        def code(v: int) -> str:
            if v not in codes:
                codes[v] = "(" + labels[v] + "".join(sorted(code(c) for c in children[v])) + ")"
            return codes[v]

        order: list[int] = []
        new_parent: list[int] = []

        def walk(v: int, p: int) -> None:
            order.append(v)
            new_parent.append(p)
            me = len(order) - 1
            for c in sorted(children[v], key=code):
                walk(c, me)

        if _depth_exceeds(children, n):
            raise ChemGraphError("fringe tree is not a tree")
        walk(0, -1)
        if len(order) != n:
            raise ChemGraphError("fringe tree is disconnected")
        return cls(
            elements=tuple(elements[v] for v in order),
            hydrogens=tuple(int(hydrogens[v]) for v in order),
            ions=tuple(int(ions[v]) for v in order),
            parents=tuple(new_parent),
            orders=tuple(int(orders[v]) if i else 0 for i, v in enumerate(order)),
            source=None if source is None else tuple(source[v] for v in order),
        )

    @property
    def size(self) -> int:
        return len(self.elements)

    @cached_property
    def depths(self) -> tuple[int, ...]:
        d = [0] * self.size
        for v in range(1, self.size):
            d[v] = d[self.parents[v]] + 1
        return tuple(d)

    @cached_property
    def code(self) -> bytes:
        return canonical_code(self)

    @cached_property
    def stats(self) -> FringeStats:
        n = self.size
        child_count = [0] * n
        for v in range(1, n):
            child_count[self.parents[v]] += 1
        counts = Counter(self.elements[1:])
        h_total = sum(self.hydrogens)
        if h_total:
            counts["H"] += h_total
        leaves = Counter()
        for v in range(1, n):
            if child_count[v] == 0:
                p = self.parents[v]
                leaves[leaf_config_key(self.elements[p], self.elements[v], self.orders[v])] += 1
        root_bonds = sum(self.orders[v] for v in range(1, n) if self.parents[v] == 0)
        return FringeStats(
            n_heavy=n - 1,
            height=max(self.depths),
            root_degree=child_count[0],
            root_hydrogens=self.hydrogens[0],
            root_bond_sum=root_bonds + self.hydrogens[0],
            root_ion=self.ions[0],
            root_element=self.elements[0],
            element_counts=tuple(sorted(counts.items())),
            leaf_configs=tuple(sorted(leaves.items())),
        )

    def to_json(self) -> dict:
        return {
            "nodes": [
                [self.elements[v], self.hydrogens[v], self.ions[v], self.parents[v], self.orders[v]]
                for v in range(self.size)
            ]
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "FringeTree":
        nodes = data["nodes"]
        return cls.build(
            [n[0] for n in nodes],
            [int(n[1]) for n in nodes],
            [int(n[2]) for n in nodes],
            [int(n[3]) for n in nodes],
            [int(n[4]) for n in nodes],
        )


def _depth_exceeds(children: list[list[int]], n: int) -> bool:
    seen = set()
    stack = [0]
    while stack:
        v = stack.pop()
        if v in seen:
            return True
        seen.add(v)
        stack.extend(children[v])
    return False


def _node_label(element: str, hydrogens: int, ion: int, order: int) -> str:
    return f"{element}:{hydrogens}:{ion}:{order}"


def canonical_code(t: FringeTree) -> bytes:
    """Serialization that is equal for two trees exactly when they are r-isomorphic."""
    children: list[list[int]] = [[] for _ in range(t.size)]
    for v in range(1, t.size):
        children[t.parents[v]].append(v)

    def code(v: int) -> str:
        label = _node_label(t.elements[v], t.hydrogens[v], t.ions[v], t.orders[v] if v else 0)
        return "(" + label + "".join(sorted(code(c) for c in children[v])) + ")"

    return code(0).encode("ascii")


def extract_fringe_trees(d: TwoLayerDecomposition, g: ChemicalGraph | None = None) -> list[FringeTree]:
    """One fringe tree per interior vertex, in the order of ``d.interior``.

    The trees are taken from the hydrogen-suppressed graph held by the
    decomposition; ``g`` is accepted for symmetry with callers holding the
    original molecule and is not consulted otherwise.
    """
    h = d.graph
    trees = []
    for root in d.interior:
        nodes = [root]
        parent = [-1]
        order = [0]
        index = {root: 0}
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for w in sorted(h.adjacency[u]):
                if w != root and d.owner[w] == root and w not in index:
                    index[w] = len(nodes)
                    nodes.append(w)
                    parent.append(index[u])
                    order.append(h.adjacency[u][w])
                    queue.append(w)
        trees.append(
            FringeTree.build(
                [h.atoms[v].element for v in nodes],
                [h.atoms[v].hydrogens for v in nodes],
                [h.atoms[v].ion for v in nodes],
                parent,
                order,
                source=nodes,
            )
        )
    return trees


def reconstruct_graph(d: TwoLayerDecomposition, trees: Iterable[FringeTree]) -> ChemicalGraph:
    """Rebuild the suppressed graph from interior edges and sourced fringe trees."""
    n = d.graph.n_atoms
    atoms: list[Atom | None] = [None] * n
    bonds = [Bond(u, v, d.graph.adjacency[u][v]) for u, v in d.interior_edges]
    for t in trees:
        if t.source is None:
            raise ChemGraphError("fringe tree carries no source vertices")
        for k, v in enumerate(t.source):
            atoms[v] = Atom(t.elements[k], t.hydrogens[k], t.ions[k])
            if k:
                bonds.append(Bond(t.source[t.parents[k]], v, t.orders[k]))
    if any(a is None for a in atoms):
        raise ChemGraphError("fringe trees do not cover every vertex")
    return ChemicalGraph(tuple(atoms), tuple(bonds))


def element_counts(g: ChemicalGraph) -> Counter:
    """Atom counts per element, hydrogens included."""
    c = Counter(a.element for a in g.atoms)
    h = sum(a.hydrogens for a in g.atoms)
    if h:
        c["H"] += h
    return c


def leaf_edge_configs(g: ChemicalGraph) -> Counter:
    """Adjacency-configuration counts over leaf edges of the suppressed graph."""
    h = suppress_hydrogens(g)
    out = Counter()
    for v in range(h.n_atoms):
        if h.degree(v) == 1:
            (w, order), = h.adjacency[v].items()
            if h.degree(w) == 1 and w < v:
                continue
            out[leaf_config_key(h.atoms[v].element, h.atoms[w].element, order)] += 1
    return out
