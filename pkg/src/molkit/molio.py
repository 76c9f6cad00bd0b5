"""Molecule files: the package's JSON format and a minimal SDF V2000 subset.

JSON layout::

    {"atoms": [{"el": "C", "h": 3, "ion": 0}, ...],
     "bonds": [{"u": 0, "v": 1, "m": 1}, ...]}

SDF files carry no hydrogen counts; heavy atoms get implicit hydrogens
from ``valence + ion - bond sum``.  The atom-block charge field maps to
the ion-valence.
"""

from __future__ import annotations

import json
from pathlib import Path

from .chemgraph import Atom, Bond, ChemGraphError, ChemicalGraph, ElementTable, default_elements

# V2000 atom-block charge codes
_CHARGE_FROM_CODE = {0: 0, 1: 3, 2: 2, 3: 1, 5: -1, 6: -2, 7: -3}
_CODE_FROM_CHARGE = {v: k for k, v in _CHARGE_FROM_CODE.items()}


class MoleculeParseError(ChemGraphError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def graph_to_json(g: ChemicalGraph) -> dict:
    return {
        "atoms": [{"el": a.element, "h": a.hydrogens, "ion": a.ion} for a in g.atoms],
        "bonds": [{"u": b.u, "v": b.v, "m": b.order} for b in g.bonds],
    }


def graph_from_json(data: dict, table: ElementTable | None = None) -> ChemicalGraph:
    table = table or default_elements()
    try:
        atoms = tuple(
            Atom(str(a["el"]), int(a.get("h", 0)), int(a.get("ion", 0))) for a in data["atoms"]
        )
        bonds = tuple(Bond(int(b["u"]), int(b["v"]), int(b.get("m", 1))) for b in data["bonds"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MoleculeParseError(f"malformed molecule JSON: {exc}") from None
    for i, a in enumerate(atoms):
        if a.element not in table:
            raise MoleculeParseError(f"atom {i}: unknown element {a.element!r}")
    for b in bonds:
        if b.order not in (1, 2, 3):
            raise MoleculeParseError(f"unsupported bond order {b.order}")
    return ChemicalGraph(atoms, bonds)


def parse_sdf(text: str, table: ElementTable | None = None) -> ChemicalGraph:
    """Parse the first record of a V2000 molfile/SDF text."""
    table = table or default_elements()
    lines = text.splitlines()
    if len(lines) < 4:
        raise MoleculeParseError("missing counts line", len(lines) + 1)
    counts = lines[3]
    try:
        n_atoms = int(counts[0:3])
        n_bonds = int(counts[3:6])
    except ValueError:
        raise MoleculeParseError("malformed counts line", 4) from None
    if "V3000" in counts:
        raise MoleculeParseError("V3000 molfiles are not supported", 4)

    atoms = []
    for k in range(n_atoms):
        lineno = 5 + k
        if lineno > len(lines) or lines[lineno - 1].startswith(("M  END", "$$$$")):
            raise MoleculeParseError(f"expected {n_atoms} atoms, found {k}", lineno)
        line = lines[lineno - 1]
        symbol = line[31:34].strip()
        if not symbol:
            raise MoleculeParseError("malformed atom line", lineno)
        if symbol not in table:
            raise MoleculeParseError(f"unknown element {symbol!r}", lineno)
        code_field = line[36:39].strip()
        try:
            code = int(code_field) if code_field else 0
            ion = _CHARGE_FROM_CODE[code]
        except (ValueError, KeyError):
            raise MoleculeParseError(f"bad charge field {code_field!r}", lineno) from None
        atoms.append((symbol, ion))

    bonds = []
    for k in range(n_bonds):
        lineno = 5 + n_atoms + k
        if lineno > len(lines) or lines[lineno - 1].startswith(("M  END", "$$$$")):
            raise MoleculeParseError(f"expected {n_bonds} bonds, found {k}", lineno)
        line = lines[lineno - 1]
        try:
            u, v, order = int(line[0:3]), int(line[3:6]), int(line[6:9])
        except ValueError:
            raise MoleculeParseError("malformed bond line", lineno) from None
        if order not in (1, 2, 3):
            raise MoleculeParseError(f"unsupported bond order {order}", lineno)
        if not (1 <= u <= n_atoms and 1 <= v <= n_atoms):
            raise MoleculeParseError(f"bond references atom outside 1..{n_atoms}", lineno)
        bonds.append(Bond(u - 1, v - 1, order))

    # atom lines must stop exactly where the counts line says
    after = 5 + n_atoms + n_bonds
    if after <= len(lines):
        tail = lines[after - 1]
        if tail[31:34].strip() in table and len(tail.split()) >= 4 and not tail.startswith("M "):
            raise MoleculeParseError("more atom or bond lines than the counts line declares", after)

    bond_sum = [0] * n_atoms
    for b in bonds:
        bond_sum[b.u] += b.order
        bond_sum[b.v] += b.order
    out = []
    for i, (symbol, ion) in enumerate(atoms):
        h = table.valence(symbol) + ion - bond_sum[i]
        if h < 0:
            raise MoleculeParseError(f"atom {i + 1} ({symbol}) exceeds its valence", 5 + i)
        out.append(Atom(symbol, h, ion))
    return ChemicalGraph(tuple(out), tuple(bonds))


def format_sdf(g: ChemicalGraph, title: str = "") -> str:
    lines = [title, "  molkit", ""]
    lines.append(f"{g.n_atoms:3d}{len(g.bonds):3d}  0  0  0  0  0  0  0  0999 V2000")
    for a in g.atoms:
        code = _CODE_FROM_CHARGE.get(a.ion)
        if code is None:
            raise ChemGraphError(f"ion-valence {a.ion} has no V2000 charge code")
        lines.append(f"{0:10.4f}{0:10.4f}{0:10.4f} {a.element:<3} 0{code:3d}  0  0  0  0  0  0  0  0  0  0")
    for b in g.bonds:
        lines.append(f"{b.u + 1:3d}{b.v + 1:3d}{b.order:3d}  0")
    lines.append("M  END")
    lines.append("$$$$")
    return "\n".join(lines) + "\n"


def read_molecule(path: str | Path, table: ElementTable | None = None) -> ChemicalGraph:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".sdf", ".mol"):
        return parse_sdf(text, table)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MoleculeParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    return graph_from_json(data, table)


def write_molecule(g: ChemicalGraph, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() in (".sdf", ".mol"):
        path.write_text(format_sdf(g), encoding="utf-8")
    else:
        path.write_text(json.dumps(graph_to_json(g), indent=1) + "\n", encoding="utf-8")
