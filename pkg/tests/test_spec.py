from dataclasses import replace

import numpy as np
import pytest

from molkit.catalog import build_catalog, select_subset
from molkit.spec import (
    SeedEdge,
    SeedGraph,
    SeedVertex,
    SpecError,
    build_spec,
    load_spec,
    preset,
    preset_edges,
    save_spec,
    seed_rank,
)
from molkit.synth import random_dataset


@pytest.fixture(scope="module")
def catalog():
    return build_catalog(random_dataset(np.random.default_rng(0), 300, (6, 14)), 2)


def seed(edges, n):
    return SeedGraph(
        tuple(SeedVertex() for _ in range(n)),
        tuple(SeedEdge(t, h, "GE1", (1, 5)) for t, h in edges),
    )


@pytest.mark.parametrize(
    "edges,n,rank",
    [([(1, 2)], 2, 0), ([(1, 2), (1, 2)], 2, 1), ([(1, 2), (2, 3), (1, 3)], 3, 1),
     ([(1, 2), (2, 3), (3, 4), (1, 4), (1, 3)], 4, 2)],
)
def test_seed_rank_is_cycle_rank(edges, n, rank):
    assert seed_rank(seed(edges, n)) == rank


def test_disconnected_seed_is_rejected():
    with pytest.raises(SpecError, match="disconnected"):
        seed_rank(seed([(1, 2)], 3))


@pytest.mark.parametrize("instance,rank", [("I1", 1), ("I2", 2), ("I3", 2), ("I4", 2), ("I5", 1)])
def test_presets(catalog, instance, rank):
    s = preset(instance, catalog)
    assert seed_rank(s.seed) == rank
    assert len(s.catalog) == {"I1": 40, "I2": 35, "I3": 30, "I4": 25, "I5": 50}[instance]
    assert all(b == (0, 10) for b in s.fc.values())


def test_unknown_preset(catalog):
    with pytest.raises(SpecError):
        preset("I9", catalog)


def test_json_round_trip(catalog, tmp_path):
    s = preset("I5", catalog, 10)
    save_spec(s, tmp_path / "s.json")
    back = load_spec(tmp_path / "s.json")
    assert back.to_json() == s.to_json()


def test_catalog_by_path(catalog, tmp_path):
    s = preset("I1", catalog, 5)
    s.catalog.save(tmp_path / "cat.json")
    save_spec(s, tmp_path / "s.json", catalog_path="cat.json")
    assert load_spec(tmp_path / "s.json").catalog == s.catalog


def test_invalid_json_reports_field(tmp_path):
    (tmp_path / "s.json").write_text("{")
    with pytest.raises(SpecError) as exc:
        load_spec(tmp_path / "s.json")
    assert exc.value.to_json()["field"] == "document"


def test_validation_errors(catalog):
    s = preset("I5", catalog, 10)
    with pytest.raises(SpecError, match="nint"):
        replace(s, nint=(5, 4)).validate()
    with pytest.raises(SpecError, match="elements_int"):
        replace(s, elements_int=("H",)).validate()
    bad_edge = replace(s.seed.edges[0], length=(1, 1))
    with pytest.raises(SpecError, match="length"):
        replace(s, seed=replace(s.seed, edges=(bad_edge,) + s.seed.edges[1:])).validate()
    with pytest.raises(SpecError, match="fc"):
        replace(s, fc={99: (0, 1)}).validate()


def test_edge_class_order_is_enforced(catalog):
    edges = preset_edges("I5")
    with pytest.raises(SpecError, match="ordered"):
        build_spec(list(reversed(edges)), 3, select_subset(catalog, 5), (3, 9), 3, 9)
