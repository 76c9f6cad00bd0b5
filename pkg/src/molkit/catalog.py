"""Catalog of distinct fringe trees observed in a dataset."""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .chemgraph import ChemicalGraph, FringeTree, decompose, extract_fringe_trees

CATALOG_VERSION = "1"


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class FringeCatalog:
    """Ordered fringe trees; catalog id ``[psi]`` is the 1-based position."""

    rho: int
    trees: tuple[FringeTree, ...]
    freq: tuple[int, ...]

    def __post_init__(self):
        if len(self.trees) != len(self.freq):
            raise CatalogError("trees and frequencies differ in length")
        codes = [t.code for t in self.trees]
        if len(set(codes)) != len(codes):
            raise CatalogError("duplicate canonical code in catalog")
        for t in self.trees:
            if t.stats.height > self.rho:
                raise CatalogError(f"tree of height {t.stats.height} exceeds rho={self.rho}")

    def __len__(self) -> int:
        return len(self.trees)

    @property
    def index(self) -> dict[bytes, int]:
        return {t.code: i + 1 for i, t in enumerate(self.trees)}

    def id_of(self, tree: FringeTree) -> int | None:
        return self.index.get(tree.code)

    def tree(self, psi: int) -> FringeTree:
        return self.trees[psi - 1]

    def to_json(self) -> dict:
        return {
            "version": CATALOG_VERSION,
            "rho": self.rho,
            "trees": [
                {
                    "code": t.code.decode("ascii"),
                    "stats": t.stats.to_json(),
                    "tree": t.to_json(),
                    "freq": f,
                }
                for t, f in zip(self.trees, self.freq)
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "FringeCatalog":
        trees, freq = [], []
        for entry in data["trees"]:
            t = FringeTree.from_json(entry["tree"])
            if "code" in entry and entry["code"].encode("ascii") != t.code:
                raise CatalogError(f"stored code {entry['code']!r} does not match its tree")
            if "stats" in entry and entry["stats"] != t.stats.to_json():
                raise CatalogError(f"stored stats of {entry['code']!r} do not match its tree")
            trees.append(t)
            freq.append(int(entry.get("freq", 0)))
        return cls(int(data["rho"]), tuple(trees), tuple(freq))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FringeCatalog":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _trees_of(g: ChemicalGraph, rho: int) -> list[FringeTree]:
    return extract_fringe_trees(decompose(g, rho), g)


def build_catalog(
    dataset: Sequence[ChemicalGraph], rho: int, workers: int = 1
) -> FringeCatalog:
    """Distinct fringe trees of ``dataset``, ordered by canonical code."""
    if not dataset:
        raise CatalogError("empty dataset")
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            per_graph = list(pool.map(lambda g: _trees_of(g, rho), dataset))
    else:
        per_graph = [_trees_of(g, rho) for g in dataset]
    counts: Counter = Counter()
    first: dict[bytes, FringeTree] = {}
    for trees in per_graph:
        for t in trees:
            counts[t.code] += 1
            first.setdefault(t.code, FringeTree.build(
                t.elements, t.hydrogens, t.ions, t.parents, t.orders
            ))
    codes = sorted(counts)
    return FringeCatalog(rho, tuple(first[c] for c in codes), tuple(counts[c] for c in codes))


def select_subset(c: FringeCatalog, k: int, policy: str = "most_frequent") -> FringeCatalog:
    """Keep ``k`` trees; the survivors keep their relative catalog order."""
    if k > len(c):
        raise CatalogError(f"requested {k} trees from a catalog of {len(c)}")
    if k < 0:
        raise CatalogError("subset size must be non-negative")
    if policy == "most_frequent":
        ranked = sorted(range(len(c)), key=lambda i: (-c.freq[i], c.trees[i].code))
    elif policy == "first":
        ranked = list(range(len(c)))
    else:
        raise CatalogError(f"unknown subset policy {policy!r}")
    keep = sorted(ranked[:k])
    return FringeCatalog(c.rho, tuple(c.trees[i] for i in keep), tuple(c.freq[i] for i in keep))


def merge_catalogs(catalogs: Iterable[FringeCatalog]) -> FringeCatalog:
    counts: Counter = Counter()
    first: dict[bytes, FringeTree] = {}
    rho = None
    for cat in catalogs:
        if rho is not None and cat.rho != rho:
            raise CatalogError("cannot merge catalogs with different rho")
        rho = cat.rho
        for t, f in zip(cat.trees, cat.freq):
            counts[t.code] += f
            first.setdefault(t.code, t)
    if rho is None:
        raise CatalogError("nothing to merge")
    codes = sorted(counts)
    return FringeCatalog(rho, tuple(first[c] for c in codes), tuple(counts[c] for c in codes))
