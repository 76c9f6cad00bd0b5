import numpy as np
import pytest

from molkit.catalog import build_catalog
from molkit.chemgraph import decompose
from molkit.gnn import (
    GnnConfig,
    GnnError,
    GnnModel,
    TrainParams,
    compute_bigM,
    forward,
    interval_bigM,
    loss_and_grad,
    node_features,
    predict,
    trace_fits_bigM,
    train,
)
from molkit.synth import permute_atoms, random_dataset


def dense_forward(g, model):
    """Loop-by-loop reference: closed-neighbourhood sums, LReLU, sum readout, ReLU head."""
    cfg, p = model.config, model.params
    d = decompose(g, cfg.rho)
    feats = node_features(g, d, None, model)
    nbrs = {v: {v} for v in d.interior}
    for u, v in d.interior_edges:
        nbrs[u].add(v)
        nbrs[v].add(u)
    h = {v: feats[v] for v in d.interior}
    act = lambda x: max(x, cfg.kappa * x)
    for l in range(cfg.layers):
        W, b = p[f"W{l}"], p[f"b{l}"]
        nxt = {}
        for v in d.interior:
            out = []
            for z in range(W.shape[1]):
                s = b[z]
                for w in nbrs[v]:
                    s += sum(h[w][k] * W[k, z] for k in range(W.shape[0]))
                out.append(act(s))
            nxt[v] = np.array(out)
        h = nxt
    pooled = sum(h.values())
    z = np.array([act(x) for x in pooled @ p["WC"]])
    for j in range(len(cfg.head)):
        z = np.maximum(z @ p[f"V{j}"] + p[f"c{j}"], 0)
    j = len(cfg.head)
    return float((z @ p[f"V{j}"] + p[f"c{j}"])[0])


@pytest.fixture(scope="module")
def data():
    ds = random_dataset(np.random.default_rng(8), 30, (5, 11))
    return ds, build_catalog(ds, 2)


def test_forward_matches_dense_reference(data):
    ds, cat = data
    model = GnnModel.initialize(GnnConfig(layers=2, k_hid=6, k_c=5, head=(4,)), cat.trees, seed=1)
    for key in model.params:
        if model.params[key].ndim == 1:
            model.params[key] = np.linspace(-0.5, 0.5, model.params[key].size)
    for g in ds[:10]:
        assert forward(g, model)[0] == pytest.approx(dense_forward(g, model), abs=1e-9)


def test_prediction_is_permutation_invariant(data):
    ds, cat = data
    model = GnnModel.initialize(GnnConfig(), cat.trees, seed=2)
    rng = np.random.default_rng(0)
    for g in ds[:5]:
        p = permute_atoms(g, [int(x) for x in rng.permutation(g.n_atoms)])
        assert predict(p, model) == pytest.approx(predict(g, model), abs=1e-9)


def test_uncatalogued_tree_is_rejected(data):
    ds, cat = data
    model = GnnModel.initialize(GnnConfig(), cat.trees)
    small = build_catalog(ds[:1], 2)
    other = next(g for g in ds if build_catalog([g], 2).trees[0] not in small.trees)
    with pytest.raises(GnnError, match="uncatalogued"):
        predict(other, model, small)


def test_config_validation():
    with pytest.raises(GnnError):
        GnnConfig(layers=0)
    with pytest.raises(GnnError):
        GnnConfig(kappa=1.5)
    assert GnnConfig.with_defaults(k_c=8).head == (8, 8)


def test_save_load_round_trip(data, tmp_path):
    ds, cat = data
    model = GnnModel.initialize(GnnConfig(layers=1, k_hid=4, k_c=4), cat.trees, seed=3)
    model.bigM = compute_bigM(model, ds).bounds
    model.save(tmp_path / "m.json")
    back = GnnModel.load(tmp_path / "m.json")
    assert back.bigM == model.bigM
    assert predict(ds[0], back) == predict(ds[0], model)


def test_zero_gradient_at_a_perfect_fit(data):
    ds, cat = data
    model = GnnModel.initialize(GnnConfig(layers=1, k_hid=3, k_c=3, head=(2,)), cat.trees, seed=4)
    batch = [(g, predict(g, model)) for g in ds[:4]]
    loss, grad = loss_and_grad(model, batch)
    assert loss == pytest.approx(0, abs=1e-20)
    assert all(np.abs(v).max() < 1e-9 for v in grad.values())


def test_training_is_seeded_and_learns(data):
    ds, cat = data
    y = [float(g.n_atoms) for g in ds]
    cfg = GnnConfig(layers=1, k_hid=8, k_c=8, head=(8,))
    hp = TrainParams(lr=0.01, max_epochs=60, patience=60, seed=5)
    a = train(ds, y, cfg, hp, cat)
    b = train(ds, y, cfg, hp, cat)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    untrained = GnnModel.initialize(cfg, cat.trees, seed=5)
    err = lambda m: np.mean([(predict(g, m) - t) ** 2 for g, t in zip(ds, y)])
    assert err(a) < 0.5 * err(untrained)


def test_interval_bounds_cover_every_trace(data):
    ds, cat = data
    model = GnnModel.initialize(GnnConfig(layers=2, k_hid=8, k_c=8), cat.trees, seed=6)
    biggest = max(len(decompose(g, 2).interior) for g in ds)
    M = interval_bigM(model, biggest, cat)
    for g in ds:
        assert trace_fits_bigM(model, forward(g, model)[1], M) == []


def test_empirical_bounds_use_safety_factor(data):
    ds, cat = data
    model = GnnModel.initialize(GnnConfig(layers=1, k_hid=4, k_c=4), cat.trees, seed=7)
    r = compute_bigM(model, ds, safety=3.0, floor=0.0)
    assert r.bounds.layers == pytest.approx([3 * x for x in r.empirical.layers])
    with pytest.raises(GnnError):
        trace_fits_bigM(model, forward(ds[0], model)[1])
