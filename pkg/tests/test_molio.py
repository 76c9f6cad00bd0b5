import pytest

from molkit.chemgraph import Atom, Bond, ChemicalGraph
from molkit.molio import (
    MoleculeParseError,
    format_sdf,
    graph_from_json,
    graph_to_json,
    parse_sdf,
    read_molecule,
    write_molecule,
)

ACETALDEHYDE = """acetaldehyde
  hand-written

  3  2  0  0  0  0  0  0  0  0999 V2000
    0.0000    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
    1.5000    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
    2.2000    1.2000    0.0000 O   0  0  0  0  0  0  0  0  0  0  0  0
  1  2  1  0
  2  3  2  0
M  END
$$$$
"""


def test_parse_sdf_infers_hydrogens():
    g = parse_sdf(ACETALDEHYDE)
    assert [a.element for a in g.atoms] == ["C", "C", "O"]
    assert [a.hydrogens for a in g.atoms] == [3, 1, 0]
    assert g.bonds[1].order == 2
    g.validate()


def test_sdf_round_trip():
    g = parse_sdf(ACETALDEHYDE)
    assert parse_sdf(format_sdf(g, "x")) == g


def test_json_round_trip(tmp_path):
    g = ChemicalGraph((Atom("N", 1, 1), Atom("C", 3)), (Bond(0, 1, 1),))
    assert graph_from_json(graph_to_json(g)) == g
    for name in ("m.json", "m.sdf"):
        write_molecule(parse_sdf(ACETALDEHYDE), tmp_path / name)
        assert read_molecule(tmp_path / name) == parse_sdf(ACETALDEHYDE)


def test_unknown_element_is_rejected():
    with pytest.raises(MoleculeParseError, match="unknown element"):
        graph_from_json({"atoms": [{"el": "Xx"}], "bonds": []})


def test_truncated_sdf_is_rejected():
    with pytest.raises(MoleculeParseError):
        parse_sdf("\n".join(ACETALDEHYDE.splitlines()[:6]))


def test_bad_json_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(MoleculeParseError, match="invalid JSON"):
        read_molecule(p)
