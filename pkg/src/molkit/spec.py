"""Topological specifications: seed graph, fringe-tree candidates and bounds."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .catalog import FringeCatalog, select_subset
from .chemgraph import ElementTable, default_elements

EDGE_CLASSES = ("GE2", "GE1", "ZeroOne", "EQ1")

Bounds = tuple[int, int]


class SpecError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")

    def to_json(self) -> dict:
        return {"field": self.field, "message": str(self)}


@dataclass(frozen=True)
class SeedEdge:
    tail: int  # 1-based seed vertex index, tail < head
    head: int
    cls: str
    length: Bounds
    bl: Bounds = (0, 0)  # leaf branches on internal path vertices
    ch: Bounds = (0, 0)  # max internal fringe height
    bd2: Bounds = (0, 0)
    bd3: Bounds = (0, 0)


@dataclass(frozen=True)
class SeedVertex:
    bl: Bounds = (0, 1)  # leaf path rooted here: lower bound, and 1 if allowed
    ch: Bounds = (0, 0)
    elements: tuple[str, ...] | None = None  # allowed interior elements; None means all
    fringe: tuple[int, ...] | None = None  # allowed catalog ids; None means all


@dataclass(frozen=True)
class SeedGraph:
    vertices: tuple[SeedVertex, ...]
    edges: tuple[SeedEdge, ...]

    @property
    def t_c(self) -> int:
        return len(self.vertices)

    @property
    def m_c(self) -> int:
        return len(self.edges)

    @property
    def t_c_tilde(self) -> int:
        return sum(1 for v in self.vertices if v.bl[1] >= 1)

    def indices(self, cls: str) -> list[int]:
        """1-based indices of edges in class ``cls``."""
        return [i + 1 for i, e in enumerate(self.edges) if e.cls == cls]

    @property
    def k_c_tilde(self) -> int:
        return len(self.indices("GE2"))

    @property
    def k_c(self) -> int:
        return self.k_c_tilde + len(self.indices("GE1"))

    def edge(self, i: int) -> SeedEdge:
        return self.edges[i - 1]

    def out_edges(self, s: int, classes: Sequence[str]) -> list[int]:
        """Edges whose tail is seed vertex ``s``."""
        return [i + 1 for i, e in enumerate(self.edges) if e.tail == s and e.cls in classes]

    def in_edges(self, s: int, classes: Sequence[str]) -> list[int]:
        """Edges whose head is seed vertex ``s``."""
        return [i + 1 for i, e in enumerate(self.edges) if e.head == s and e.cls in classes]


def seed_rank(seed: SeedGraph) -> int:
    n = seed.t_c
    parent = list(range(n + 1))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in seed.edges:
        parent[find(e.tail)] = find(e.head)
    if len({find(v) for v in range(1, n + 1)}) != 1:
        raise SpecError("seed.edges", "seed graph is disconnected")
    return seed.m_c - n + 1


@dataclass(frozen=True)
class Specification:
    seed: SeedGraph
    rho: int
    catalog: FringeCatalog
    nint: Bounds
    n_lb: int
    n_star: int
    elements: tuple[str, ...]  # every element that may occur, hydrogen included
    elements_int: tuple[str, ...]  # elements allowed on interior vertices
    na: Mapping[str, Bounds]
    na_int: Mapping[str, Bounds]
    fc: Mapping[int, Bounds]
    aclf: Mapping[str, Bounds]
    dg: Mapping[int, Bounds]
    dg_int: Mapping[int, Bounds]
    fringe_edge: tuple[int, ...] | None = None  # catalog ids allowed on T/F vertices
    t_t: int | None = None
    t_f: int | None = None
    unenforced: Mapping[str, object] = field(default_factory=dict)

    # derived capacities
    @property
    def tT(self) -> int:
        return self.t_t if self.t_t is not None else self.nint[1] - self.seed.t_c

    @property
    def tF(self) -> int:
        return self.t_f if self.t_f is not None else self.nint[1]

    @property
    def cF(self) -> int:
        return self.seed.t_c_tilde + self.tT

    def allowed_elements(self, i: int) -> tuple[str, ...]:
        v = self.seed.vertices[i - 1]
        return self.elements_int if v.elements is None else v.elements

    def fringe_ids(self, kind: str, i: int) -> list[int]:
        """Catalog ids allowed at vertex ``i`` of kind C, T or F."""
        if kind == "C":
            mask = self.seed.vertices[i - 1].fringe
        else:
            mask = self.fringe_edge
        ids = range(1, len(self.catalog) + 1) if mask is None else mask
        return sorted(ids)

    def validate(self, table: ElementTable | None = None) -> None:
        table = table or default_elements()
        seed = self.seed
        if self.rho < 1:
            raise SpecError("rho", "must be at least 1")
        if self.catalog.rho != self.rho:
            raise SpecError("catalog.rho", f"catalog built for rho={self.catalog.rho}, spec uses {self.rho}")
        if seed.t_c < 1:
            raise SpecError("seed.vertices", "seed graph needs at least one vertex")
        if not self.n_lb <= self.n_star:
            raise SpecError("n_lb", f"n_lb={self.n_lb} exceeds n_star={self.n_star}")
        lo, hi = self.nint
        if not lo <= hi <= self.n_star:
            raise SpecError("nint", f"need nint_lb <= nint_ub <= n_star, got {self.nint} and {self.n_star}")
        if hi < seed.t_c:
            raise SpecError("nint", "nint_ub is smaller than the number of seed vertices")
        if self.tT < 0:
            raise SpecError("t_t", "must be non-negative")
        if self.tF < 0:
            raise SpecError("t_f", "must be non-negative")
        seen_class = 0
        for i, e in enumerate(seed.edges, start=1):
            name = f"seed.edges[{i}]"
            if e.cls not in EDGE_CLASSES:
                raise SpecError(name, f"unknown edge class {e.cls!r}")
            rank = EDGE_CLASSES.index(e.cls)
            if rank < seen_class:
                raise SpecError(name, "edges must be ordered GE2, GE1, ZeroOne, EQ1")
            seen_class = rank
            if not 1 <= e.tail < e.head <= seed.t_c:
                raise SpecError(name, f"need 1 <= tail < head <= {seed.t_c}, got ({e.tail}, {e.head})")
            l_lb, l_ub = e.length
            if l_lb > l_ub:
                raise SpecError(name + ".length", f"lower bound {l_lb} exceeds upper bound {l_ub}")
            ok = {
                "EQ1": l_lb == l_ub == 1,
                "ZeroOne": l_lb == 0 and l_ub == 1,
                "GE1": l_lb == 1 and l_ub >= 2,
                "GE2": l_lb >= 2,
            }[e.cls]
            if not ok:
                raise SpecError(name + ".length", f"bounds {e.length} inconsistent with class {e.cls}")
            for fname in ("bl", "ch", "bd2", "bd3"):
                b = getattr(e, fname)
                if not 0 <= b[0] <= b[1]:
                    raise SpecError(f"{name}.{fname}", f"invalid bounds {b}")
        tilde_done = False
        for i, v in enumerate(seed.vertices, start=1):
            name = f"seed.vertices[{i}]"
            if v.bl[1] not in (0, 1) or v.bl[0] not in (0, 1) or v.bl[0] > v.bl[1]:
                raise SpecError(name + ".bl", f"leaf-path bounds must lie in {{0, 1}}, got {v.bl}")
            if v.bl[1] == 0:
                tilde_done = True
            elif tilde_done:
                raise SpecError(name + ".bl", "vertices allowing leaf paths must come first")
            if not 0 <= v.ch[0] <= v.ch[1]:
                raise SpecError(name + ".ch", f"invalid bounds {v.ch}")
            if v.elements is not None:
                for a in v.elements:
                    if a not in self.elements_int:
                        raise SpecError(name + ".elements", f"{a} not an interior element")
            if v.fringe is not None:
                for p in v.fringe:
                    if not 1 <= p <= len(self.catalog):
                        raise SpecError(name + ".fringe", f"catalog id {p} out of range")
        if self.fringe_edge is not None:
            for p in self.fringe_edge:
                if not 1 <= p <= len(self.catalog):
                    raise SpecError("fringe_edge", f"catalog id {p} out of range")
        for a in self.elements:
            if a not in table:
                raise SpecError("elements", f"unknown element {a}")
        for a in self.elements_int:
            if a == "H" or a not in self.elements:
                raise SpecError("elements_int", f"{a} cannot be an interior element")
        for name, bounds, keys in (
            ("na", self.na, set(self.elements)),
            ("na_int", self.na_int, set(self.elements_int)),
            ("fc", self.fc, set(range(1, len(self.catalog) + 1))),
            ("dg", self.dg, {1, 2, 3, 4}),
            ("dg_int", self.dg_int, {1, 2, 3, 4}),
        ):
            for k, b in bounds.items():
                if k not in keys:
                    raise SpecError(f"{name}[{k}]", "key not in the admissible set")
                if not 0 <= b[0] <= b[1]:
                    raise SpecError(f"{name}[{k}]", f"invalid bounds {b}")
        for k, b in self.aclf.items():
            if not 0 <= b[0] <= b[1]:
                raise SpecError(f"aclf[{k}]", f"invalid bounds {b}")
        seed_rank(seed)

    # ---- serialization
    def to_json(self, catalog_path: str | None = None) -> dict:
        return {
            "rho": self.rho,
            "seed": {
                "vertices": [
                    {
                        "bl": list(v.bl),
                        "ch": list(v.ch),
                        "elements": None if v.elements is None else list(v.elements),
                        "fringe": None if v.fringe is None else list(v.fringe),
                    }
                    for v in self.seed.vertices
                ],
                "edges": [
                    {
                        "tail": e.tail,
                        "head": e.head,
                        "class": e.cls,
                        "length": list(e.length),
                        "bl": list(e.bl),
                        "ch": list(e.ch),
                        "bd2": list(e.bd2),
                        "bd3": list(e.bd3),
                    }
                    for e in self.seed.edges
                ],
            },
            "catalog": catalog_path if catalog_path is not None else self.catalog.to_json(),
            "nint": list(self.nint),
            "n_lb": self.n_lb,
            "n_star": self.n_star,
            "elements": list(self.elements),
            "elements_int": list(self.elements_int),
            "na": {k: list(v) for k, v in self.na.items()},
            "na_int": {k: list(v) for k, v in self.na_int.items()},
            "fc": {str(k): list(v) for k, v in self.fc.items()},
            "aclf": {k: list(v) for k, v in self.aclf.items()},
            "dg": {str(k): list(v) for k, v in self.dg.items()},
            "dg_int": {str(k): list(v) for k, v in self.dg_int.items()},
            "fringe_edge": None if self.fringe_edge is None else list(self.fringe_edge),
            "t_t": self.t_t,
            "t_f": self.t_f,
            "unenforced": dict(self.unenforced),
        }

    @classmethod
    def from_json(cls, data: Mapping, base_dir: Path | None = None) -> "Specification":
        try:
            cat = data["catalog"]
            if isinstance(cat, str):
                path = Path(cat)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                catalog = FringeCatalog.load(path)
            else:
                catalog = FringeCatalog.from_json(cat)
            seed = SeedGraph(
                tuple(
                    SeedVertex(
                        bl=_pair(v.get("bl", (0, 1))),
                        ch=_pair(v.get("ch", (0, 0))),
                        elements=None if v.get("elements") is None else tuple(v["elements"]),
                        fringe=None if v.get("fringe") is None else tuple(int(p) for p in v["fringe"]),
                    )
                    for v in data["seed"]["vertices"]
                ),
                tuple(
                    SeedEdge(
                        tail=int(e["tail"]),
                        head=int(e["head"]),
                        cls=str(e["class"]),
                        length=_pair(e["length"]),
                        bl=_pair(e.get("bl", (0, 0))),
                        ch=_pair(e.get("ch", (0, 0))),
                        bd2=_pair(e.get("bd2", (0, 0))),
                        bd3=_pair(e.get("bd3", (0, 0))),
                    )
                    for e in data["seed"]["edges"]
                ),
            )
            spec = cls(
                seed=seed,
                rho=int(data["rho"]),
                catalog=catalog,
                nint=_pair(data["nint"]),
                n_lb=int(data["n_lb"]),
                n_star=int(data["n_star"]),
                elements=tuple(data["elements"]),
                elements_int=tuple(data["elements_int"]),
                na={k: _pair(v) for k, v in data.get("na", {}).items()},
                na_int={k: _pair(v) for k, v in data.get("na_int", {}).items()},
                fc={int(k): _pair(v) for k, v in data.get("fc", {}).items()},
                aclf={k: _pair(v) for k, v in data.get("aclf", {}).items()},
                dg={int(k): _pair(v) for k, v in data.get("dg", {}).items()},
                dg_int={int(k): _pair(v) for k, v in data.get("dg_int", {}).items()},
                fringe_edge=None
                if data.get("fringe_edge") is None
                else tuple(int(p) for p in data["fringe_edge"]),
                t_t=data.get("t_t"),
                t_f=data.get("t_f"),
                unenforced=dict(data.get("unenforced", {})),
            )
        except SpecError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecError("document", f"malformed specification: {exc!r}") from None
        spec.validate()
        return spec


def _pair(v) -> Bounds:
    lo, hi = v
    return int(lo), int(hi)


def load_spec(path: str | Path) -> Specification:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError("document", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return Specification.from_json(data, base_dir=path.parent)


def save_spec(spec: Specification, path: str | Path, catalog_path: str | None = None) -> None:
    Path(path).write_text(json.dumps(spec.to_json(catalog_path), indent=1) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- presets

_PRESET_EDGES = {
    "I1": [(1, 2, "GE2"), (1, 2, "GE1")],
    "I2": [(1, 2, "GE2"), (3, 4, "GE2"), (1, 3, "GE1"), (2, 4, "EQ1"), (2, 3, "EQ1")],
    "I3": [(1, 2, "GE2"), (3, 4, "GE1"), (1, 3, "GE1"), (2, 4, "EQ1"), (2, 3, "EQ1")],
    "I4": [(1, 2, "GE1"), (3, 4, "GE1"), (1, 3, "GE1"), (2, 4, "EQ1"), (2, 3, "EQ1")],
    "I5": [(1, 2, "GE2"), (2, 3, "GE2"), (1, 3, "ZeroOne")],
}
_PRESET_SIZES = {
    # (t_c, nint_lb, nint_ub, n_lb, n_star, catalog subset size)
    "I1": (2, 6, 8, 15, 20, 40),
    "I2": (4, 6, 12, 10, 15, 35),
    "I3": (4, 6, 12, 10, 15, 30),
    "I4": (4, 6, 12, 10, 15, 25),
    "I5": (3, 3, 9, 3, 9, 50),
}


def length_bounds(cls: str, n_star: int) -> Bounds:
    return {"GE2": (2, n_star), "GE1": (1, n_star), "ZeroOne": (0, 1), "EQ1": (1, 1)}[cls]


def catalog_elements(catalog: FringeCatalog) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """(all elements incl. hydrogen, root elements) occurring in the catalog."""
    every, roots = set(), set()
    for t in catalog.trees:
        roots.add(t.elements[0])
        every.update(t.elements)
        if any(t.hydrogens):
            every.add("H")
    return tuple(sorted(every)), tuple(sorted(roots))


def build_spec(
    edges: Sequence[tuple[int, int, str]],
    t_c: int,
    catalog: FringeCatalog,
    nint: Bounds,
    n_lb: int,
    n_star: int,
    rho: int | None = None,
    t_t: int | None = None,
    t_f: int | None = None,
) -> Specification:
    """Specification with the common bound families used by all presets."""
    rho = catalog.rho if rho is None else rho
    elements, roots = catalog_elements(catalog)
    tF = nint[1] if t_f is None else t_f
    ch_default = (0, rho + tF)
    vertices = tuple(SeedVertex(bl=(0, 1), ch=ch_default) for _ in range(t_c))
    seed_edges = tuple(
        SeedEdge(
            tail=t,
            head=h,
            cls=c,
            length=length_bounds(c, n_star),
            bl=(0, n_star),
            ch=ch_default,
            bd2=(0, n_star),
            bd3=(0, n_star),
        )
        for t, h, c in edges
    )
    na = {a: (0, 2 * n_star + 2) if a == "H" else (0, n_star) for a in elements}
    spec = Specification(
        seed=SeedGraph(vertices, seed_edges),
        rho=rho,
        catalog=catalog,
        nint=nint,
        n_lb=n_lb,
        n_star=n_star,
        elements=elements,
        elements_int=roots,
        na=na,
        na_int={a: (0, n_star) for a in roots},
        fc={p: (0, 10) for p in range(1, len(catalog) + 1)},
        aclf={k: (0, n_star) for k in sorted({k for t in catalog.trees for k, _ in t.stats.leaf_configs})},
        dg={d: (0, n_star) for d in range(1, 5)},
        dg_int={d: (0, n_star) for d in range(1, 5)},
        t_t=t_t,
        t_f=t_f,
        unenforced={
            "ec_int": [0, n_star],
            "ac_int": [0, n_star],
            "ns_int": [0, n_star],
        },
    )
    spec.validate()
    return spec


def preset(
    instance: str,
    catalog: FringeCatalog,
    subset: int | None = None,
    policy: str = "most_frequent",
) -> Specification:
    if instance not in _PRESET_EDGES:
        raise SpecError("instance", f"unknown preset {instance!r}")
    t_c, nl, nu, n_lb, n_star, size = _PRESET_SIZES[instance]
    k = size if subset is None else subset
    sub = select_subset(catalog, k, policy)
    return build_spec(_PRESET_EDGES[instance], t_c, sub, (nl, nu), n_lb, n_star)


def preset_edges(instance: str) -> list[tuple[int, int, str]]:
    """Seed edges ``(tail, head, class)`` of a built-in instance."""
    if instance not in _PRESET_EDGES:
        raise SpecError("instance", f"unknown preset {instance!r}")
    return list(_PRESET_EDGES[instance])


def preset_sizes(instance: str) -> dict[str, object]:
    t_c, nl, nu, n_lb, n_star, size = _PRESET_SIZES[instance]
    return {"t_c": t_c, "nint": (nl, nu), "n_lb": n_lb, "n_star": n_star, "catalog": size}


def preset_catalog_size(instance: str) -> int:
    return _PRESET_SIZES[instance][5]
