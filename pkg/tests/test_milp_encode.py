from dataclasses import replace

import numpy as np
import pytest

from molkit.catalog import FringeCatalog, build_catalog
from molkit.gnn import GnnConfig, GnnModel, interval_bigM, with_bigM
from molkit.milp_core import MilpError, check_assignment
from molkit.milp_encode import FAMILIES, assemble, mass_bounds, encoder_for
from molkit.spec import preset
from molkit.synth import random_dataset, ring_or_chain_molecule
from molkit.witness import encode_witness

from support import i5_micro


@pytest.fixture(scope="module")
def catalog():
    return build_catalog(random_dataset(np.random.default_rng(0), 300, (6, 14)), 2)


def small_model(cat, rho=2):
    cfg = GnnConfig(layers=1, k_hid=3, k_c=3, head=(3,), rho=rho)
    model = GnnModel.initialize(cfg, cat.trees, seed=0)
    return with_bigM(model, interval_bigM(model, 9, cat))


@pytest.mark.parametrize("instance", ["I1", "I2", "I3", "I4", "I5"])
def test_every_preset_assembles(catalog, instance):
    spec = preset(instance, catalog, 8)
    m = assemble(spec, small_model(catalog), (-1.0, 1.0))
    fams = m.counts()["families"]
    for tag, _ in FAMILIES:
        assert fams[tag]["constraints"] > 0, tag
    assert fams["gnn"]["variables"] > 0
    assert fams["range"]["constraints"] == 2


def test_rank_and_edge_classes_are_fixed(catalog):
    m = assemble(preset("I2", catalog, 8), None)
    ones = {c.name: c for c in m.constraints}
    # EQ1 edges always present, GE2 edges never realised directly
    assert {"co_eq1_4", "co_eq1_5", "co_ge2_1", "co_ge2_2"} <= set(ones)
    assert ones["co_eq1_4"].rhs == 1 and ones["co_ge2_1"].rhs == 0
    assert ones["co_rank"].rhs == 2


def test_infinite_range_adds_no_rows(catalog):
    m = assemble(preset("I5", catalog, 8), small_model(catalog), (-np.inf, np.inf))
    assert "range" not in m.counts()["families"]


def test_structure_only_model_has_no_gnn(catalog):
    m = assemble(preset("I5", catalog, 8), None)
    assert "gnn" not in m.counts()["families"] and "y" not in m


def test_missing_big_m_is_an_error(catalog):
    model = GnnModel.initialize(GnnConfig(layers=1, k_hid=3, k_c=3), catalog.trees)
    with pytest.raises(MilpError, match="big-M"):
        assemble(preset("I5", catalog, 8), model)


def test_rho_mismatch_is_an_error(catalog):
    with pytest.raises(MilpError, match="rho"):
        assemble(preset("I5", catalog, 8), small_model(catalog, rho=3))


def test_empty_catalog_is_an_error(catalog):
    spec = preset("I5", catalog, 8)
    empty = replace(spec, catalog=FringeCatalog(2, (), ()), fc={})
    with pytest.raises(MilpError, match="catalog"):
        assemble(empty, None)


def test_mass_bound_is_positive(catalog):
    ub, lo, hi = mass_bounds(encoder_for(preset("I5", catalog, 8)))
    assert ub > 0 and 0 < lo <= hi


@pytest.mark.parametrize("ring", [True, False])
def test_witness_rows_pin_down_the_molecule(ring):
    rng = np.random.default_rng(21 if ring else 22)
    g, _ = ring_or_chain_molecule(rng, ring=ring)
    spec, model = i5_micro(g, GnnConfig(layers=2, k_hid=4, k_c=4, head=(4,)))
    m = assemble(spec, model)
    res = encode_witness(g, spec, model, milp=m)
    assert res.report.ok, res.report.summary()
    a = res.assignment
    assert a["useC_3"] == int(ring)
    for name in ("y", "nint", "Mass"):
        bumped = dict(a)
        bumped[name] += 1
        assert not check_assignment(m, bumped).ok, name
    elements = [k for k in a if k.startswith("daC_1_")]
    swapped = dict(a)
    for k in elements:
        swapped[k] = 1 - a[k]
    assert not check_assignment(m, swapped).ok
