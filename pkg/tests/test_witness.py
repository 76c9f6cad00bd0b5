import math

import pytest

from molkit.catalog import build_catalog
from molkit.chemgraph import decompose
from molkit.gnn import GnnConfig, predict
from molkit.milp_encode import assemble
from molkit.milp_core import check_assignment
from molkit.spec import build_spec, preset_edges
from molkit.witness import WitnessError, brute_force_feasibility, decode_solution, encode_witness

from support import i5_micro, i5_molecules, isomorphic, satisfies_spec, tiny_instance, tiny_pool

SMALL = GnnConfig(layers=2, k_hid=4, k_c=4, head=(4,))


@pytest.fixture(scope="module")
def molecules():
    return i5_molecules(seed=31, count=8)


def test_decode_inverts_encode(molecules):
    for k, g in enumerate(molecules):
        spec, model = i5_micro(g, SMALL, seed=k)
        res = encode_witness(g, spec, model)
        assert res.report.ok, res.report.summary()
        dec = decode_solution(res.assignment, spec)
        assert isomorphic(dec.graph, g)
        assert abs(predict(dec.graph, model, spec.catalog) - res.assignment["y"]) <= 1e-6
        assert satisfies_spec(dec.graph, spec) == []


def test_range_rows_accept_and_reject(molecules):
    g = molecules[0]
    spec, model = i5_micro(g, SMALL)
    y = predict(g, model, spec.catalog)
    assert encode_witness(g, spec, model, y_range=(y - 0.01, y + 0.01)).report.ok
    rep = encode_witness(g, spec, model, y_range=(y + 1, y + 2)).report
    assert [n for n, _ in rep.violations] == ["range_lo"]


def test_uncatalogued_tree_is_rejected(molecules):
    spec, model = i5_micro(molecules[0], SMALL)
    stranger = next(g for g in molecules[1:]
                    if set(build_catalog([g], 2).trees) - set(spec.catalog.trees))
    with pytest.raises(WitnessError, match="not in the catalog"):
        encode_witness(stranger, spec, model)


def test_interior_size_outside_bounds(molecules):
    g = molecules[0]
    cat = build_catalog([g], 2)
    spec = build_spec(preset_edges("I5"), 3, cat, (3, 3), 1, max(9, g.n_atoms))
    if len(decompose(g, 2).interior) == 3:
        pytest.skip("molecule happens to have three interior vertices")
    with pytest.raises(WitnessError, match="interior has"):
        encode_witness(g, spec)


def test_fractional_indicator_is_rejected(molecules):
    spec, model = i5_micro(molecules[0], SMALL)
    a = dict(encode_witness(molecules[0], spec, model).assignment)
    a["daC_1_" + spec.elements_int[0]] = 0.5
    with pytest.raises(WitnessError, match="not integral"):
        decode_solution(a, spec)


def test_structure_only_witness(molecules):
    for g in molecules[:4]:
        spec, _ = i5_micro(g, SMALL)
        m = assemble(spec, None)
        res = encode_witness(g, spec, milp=m)
        assert res.report.ok and check_assignment(m, res.assignment).ok


@pytest.fixture(scope="module")
def tiny():
    g = tiny_pool()[0]
    return (g,) + tiny_instance(g, seed=0)


def test_brute_force_empty_and_full_ranges(tiny):
    g, spec, model = tiny
    assert not brute_force_feasibility(spec, model, (1.0, 0.0)).feasible
    res = brute_force_feasibility(spec, model, (-math.inf, math.inf))
    assert res.feasible and res.examined > 0
    assert abs(predict(res.witness, model, spec.catalog) - res.y) <= 1e-9


def test_brute_force_finds_the_source_value(tiny):
    g, spec, model = tiny
    y = predict(g, model, spec.catalog)
    res = brute_force_feasibility(spec, model, (y - 1e-9, y + 1e-9))
    assert res.feasible
    assert res.y == pytest.approx(y, abs=1e-6)


def test_brute_force_refuses_large_instances(molecules):
    spec, model = i5_micro(molecules[0], SMALL)
    with pytest.raises(WitnessError, match="brute force"):
        brute_force_feasibility(spec, model, (0, 1))


def test_cycle_cannot_fit_an_acyclic_seed():
    g = next(m for m in i5_molecules(seed=40, count=20) if len(m.bonds) >= m.n_atoms)
    cat = build_catalog([g], 2)
    spec = build_spec([(1, 2, "GE1")], 2, cat, (2, 9), 1, max(9, g.n_atoms))
    with pytest.raises(WitnessError, match="does not fit"):
        encode_witness(g, spec)
