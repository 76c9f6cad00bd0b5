"""Random molecule generators for tests, benchmarks and demos."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .chemgraph import Atom, Bond, ChemGraphError, ChemicalGraph, decompose, default_elements


def random_molecule(
    rng: np.random.Generator,
    n_heavy: int,
    elements: Sequence[str] = ("C", "C", "C", "N", "O"),
    ring_prob: float = 0.3,
    multi_prob: float = 0.2,
    max_degree: int = 4,
) -> ChemicalGraph:
    """Connected valence-satisfied molecule with ``n_heavy`` heavy atoms."""
    table = default_elements()
    els = [str(rng.choice(elements))]
    while table.valence(els[0]) < 2 and n_heavy > 2:
        els[0] = str(rng.choice(elements))
    free = [table.valence(els[0])]
    deg = [0]
    adj: dict[tuple[int, int], int] = {}
    for v in range(1, n_heavy):
        for _ in range(50):
            el = str(rng.choice(elements))
            open_ = [u for u in range(v) if free[u] >= 1 and deg[u] < max_degree]
            if open_:
                break
        else:
            raise ChemGraphError("could not extend molecule")
        u = int(rng.choice(open_))
        cap = min(free[u], table.valence(el))
        if v < n_heavy - 1:
            # leave room to keep growing
            cap = min(cap, max(1, table.valence(el) - 1))
        order = 1
        if cap > 1 and rng.random() < multi_prob:
            order = int(rng.integers(2, cap + 1))
        adj[(u, v)] = order
        els.append(el)
        free[u] -= order
        free.append(table.valence(el) - order)
        deg[u] += 1
        deg.append(1)
    if rng.random() < ring_prob:
        cand = [
            (a, b)
            for a in range(n_heavy)
            for b in range(a + 1, n_heavy)
            if (a, b) not in adj and free[a] >= 1 and free[b] >= 1
            and deg[a] < max_degree and deg[b] < max_degree
        ]
        if cand:
            a, b = cand[int(rng.integers(len(cand)))]
            adj[(a, b)] = 1
            free[a] -= 1
            free[b] -= 1
            deg[a] += 1
            deg[b] += 1
    atoms = tuple(Atom(els[i], free[i], 0) for i in range(n_heavy))
    bonds = tuple(Bond(u, v, m) for (u, v), m in sorted(adj.items()))
    return ChemicalGraph(atoms, bonds)


def random_dataset(
    rng: np.random.Generator,
    count: int,
    size_range: tuple[int, int] = (5, 12),
    rho: int = 2,
    **kw,
) -> list[ChemicalGraph]:
    """``count`` random molecules, each with at least one interior vertex for ``rho``."""
    out = []
    while len(out) < count:
        n = int(rng.integers(size_range[0], size_range[1] + 1))
        g = random_molecule(rng, n, **kw)
        try:
            decompose(g, rho)
        except ChemGraphError:
            continue
        out.append(g)
    return out


def add_explicit_hydrogens(g: ChemicalGraph) -> ChemicalGraph:
    atoms = list(g.atoms)
    bonds = list(g.bonds)
    for i, a in enumerate(g.atoms):
        for _ in range(a.hydrogens):
            atoms.append(Atom("H", 0, 0))
            bonds.append(Bond(i, len(atoms) - 1, 1))
        atoms[i] = Atom(a.element, 0, a.ion)
    return ChemicalGraph(tuple(atoms), tuple(bonds))


def permute_atoms(g: ChemicalGraph, perm: Sequence[int]) -> ChemicalGraph:
    """Relabel atom ``i`` as ``perm[i]``."""
    atoms = [None] * g.n_atoms
    for i, a in enumerate(g.atoms):
        atoms[perm[i]] = a
    bonds = tuple(Bond(perm[b.u], perm[b.v], b.order) for b in g.bonds)
    return ChemicalGraph(tuple(atoms), bonds)


def ring_or_chain_molecule(
    rng: np.random.Generator,
    rho: int = 2,
    max_interior: int = 9,
    ring: bool | None = None,
) -> tuple[ChemicalGraph, int]:
    """Molecule whose interior is three hubs joined by two chains, optionally closed into a ring.

    The hubs and chain vertices may carry short leaf paths.  Returns the
    graph and its interior size.
    """
    table = default_elements()
    for _ in range(200):
        closed = bool(rng.random() < 0.5) if ring is None else ring
        a = int(rng.integers(1, 3))
        b = int(rng.integers(1, 3))
        core = [0] + list(range(1, a + 1)) + [a + 1] + list(range(a + 2, a + b + 2)) + [a + b + 2]
        n = len(core)
        edges = [(core[i], core[i + 1]) for i in range(n - 1)]
        if closed:
            edges.append((core[0], core[-1]))
        budget = max_interior - n
        roots = [int(r) for r in rng.permutation(n)[: int(rng.integers(0, 3))]]
        for r in roots:
            length = int(rng.integers(1, 3))
            if length > budget:
                break
            prev = r
            for _ in range(length):
                edges.append((prev, n))
                prev = n
                n += 1
            budget -= length
        ideg = [0] * n
        for u, v in edges:
            ideg[u] += 1
            ideg[v] += 1
        els = []
        for v in range(n):
            pick = str(rng.choice(["C", "C", "C", "C", "N", "O"]))
            need = ideg[v] + (1 if ideg[v] == 1 else 0)
            els.append(pick if table.valence(pick) >= need else "C")
        atoms = list(els)
        bonds: dict[tuple[int, int], int] = {e: 1 for e in edges}
        free = [table.valence(els[v]) - ideg[v] for v in range(n)]
        for v in range(n):
            height = rho if ideg[v] == 1 else int(rng.integers(0, rho + 1))
            if free[v] < 1:
                height = 0
            prev = v
            for depth in range(height):
                last = depth == height - 1
                el = str(rng.choice(["C", "C", "O", "N"])) if last else "C"
                atoms.append(el)
                free.append(table.valence(el) - 1)
                u = len(atoms) - 1
                bonds[(prev, u)] = 1
                free[prev] -= 1
                prev = u
                parent = u - 1 if depth else v
                if last and free[u] >= 1 and free[parent] >= 1 and rng.random() < 0.25:
                    bonds[(parent, u)] = 2
                    free[parent] -= 1
                    free[u] -= 1
        for (u, v) in edges:
            if free[u] >= 1 and free[v] >= 1 and rng.random() < 0.15:
                bonds[(u, v)] += 1
                free[u] -= 1
                free[v] -= 1
        g = ChemicalGraph(
            tuple(Atom(atoms[i], free[i], 0) for i in range(len(atoms))),
            tuple(Bond(u, v, o) for (u, v), o in sorted(bonds.items())),
        )
        try:
            g.validate(table)
            if len(decompose(g, rho).interior) == n:
                return g, n
        except ChemGraphError:
            continue
    raise ChemGraphError("could not generate a ring-or-chain molecule")
