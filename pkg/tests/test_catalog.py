import numpy as np
import pytest

from molkit.catalog import CatalogError, FringeCatalog, build_catalog, merge_catalogs, select_subset
from molkit.chemgraph import decompose, extract_fringe_trees
from molkit.synth import random_dataset


@pytest.fixture(scope="module")
def dataset():
    return random_dataset(np.random.default_rng(4), 60)


def test_catalog_counts_every_tree(dataset):
    cat = build_catalog(dataset, 2)
    total = sum(len(decompose(g, 2).interior) for g in dataset)
    assert sum(cat.freq) == total
    for g in dataset:
        for t in extract_fringe_trees(decompose(g, 2)):
            assert cat.tree(cat.id_of(t)) == t


def test_catalog_is_deterministic_and_threads_agree(dataset):
    assert build_catalog(dataset, 2) == build_catalog(dataset, 2, workers=4)
    assert build_catalog(dataset, 2) == build_catalog(list(reversed(dataset)), 2)


def test_save_and_load(dataset, tmp_path):
    cat = build_catalog(dataset, 2)
    cat.save(tmp_path / "c.json")
    assert FringeCatalog.load(tmp_path / "c.json") == cat


def test_tampered_code_is_rejected(dataset):
    data = build_catalog(dataset, 2).to_json()
    data["trees"][0]["code"] = data["trees"][1]["code"]
    with pytest.raises(CatalogError):
        FringeCatalog.from_json(data)


def test_subset_keeps_most_frequent(dataset):
    cat = build_catalog(dataset, 2)
    sub = select_subset(cat, 5)
    assert len(sub) == 5
    assert min(sub.freq) >= sorted(cat.freq, reverse=True)[4]
    with pytest.raises(CatalogError):
        select_subset(cat, len(cat) + 1)


def test_merge_adds_frequencies(dataset):
    a = build_catalog(dataset[:30], 2)
    b = build_catalog(dataset[30:], 2)
    assert merge_catalogs([a, b]) == build_catalog(dataset, 2)


def test_empty_dataset():
    with pytest.raises(CatalogError):
        build_catalog([], 2)
