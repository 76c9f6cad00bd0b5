"""Acceptance criteria, one test each.

Every test records a single ``PASS``/``FAIL`` line that is echoed in the
terminal summary; run this file directly to print only those lines.
"""

from __future__ import annotations

import tempfile
import time

import numpy as np
import pytest

from conftest import record, requires_solver
from support import (
    i5_micro,
    i5_molecules,
    parent_arrays,
    r_squared,
    rooted_isomorphic,
    satisfies_spec,
    shuffled_tree,
    tiny_instance,
    tiny_pool,
)

from molkit.catalog import build_catalog
from molkit.chemgraph import (
    ChemGraphError,
    FringeTree,
    decompose,
    element_counts,
    extract_fringe_trees,
    reconstruct_graph,
    suppress_hydrogens,
)
from molkit.gnn import GnnConfig, GnnModel, TrainParams, interval_bigM, loss_and_grad, predict, train, with_bigM
from molkit.milp_core import solve
from molkit.milp_encode import assemble
from molkit.spec import preset, preset_sizes, seed_rank
from molkit.synth import random_dataset, ring_or_chain_molecule
from molkit.witness import brute_force_feasibility, decode_solution, encode_witness


def test_witness_round_trip_on_micro_specs():
    start = time.perf_counter()
    bad, worst = [], 0.0
    for k, g in enumerate(i5_molecules(seed=11, count=50)):
        spec, model = i5_micro(g, seed=k)
        res = encode_witness(g, spec, model)
        y_ref = predict(g, model, spec.catalog)
        gap = abs(res.assignment["y"] - y_ref)
        worst = max(worst, gap)
        if not res.report.ok or gap > 1e-6:
            bad.append(k)
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 120
    record(1, ok, f"50 molecules, {len(bad)} with violations or |y - forward| > 1e-6 "
                  f"(max gap {worst:.2e}), {elapsed:.1f}s < 120s")
    assert ok, bad


def _rows_touching(m, var):
    j = m.index(var)
    return [c for c in m.constraints if any(i == j for i, _ in c.terms)]


def _theta_interval(m, rows, th, tau, dt, tau_val, dt_val):
    """Feasible interval for theta once tau and dt are fixed, or None if empty."""
    jt, jtau, jdt = m.index(th), m.index(tau), m.index(dt)
    v = m.var(th)
    lo, hi = v.lb, v.ub
    tv = m.var(tau)
    if not tv.lb - 1e-12 <= tau_val <= tv.ub + 1e-12:
        return None
    for c in rows:
        coef = dict(c.terms)
        a = coef.get(jt, 0.0)
        rest = coef.get(jtau, 0.0) * tau_val + coef.get(jdt, 0.0) * dt_val
        extra = set(coef) - {jt, jtau, jdt}
        assert not extra, f"{c.name} has unexpected variables"
        rhs = c.rhs - rest
        if a == 0.0:
            holds = {"<=": 0 <= rhs + 1e-12, ">=": 0 >= rhs - 1e-12, "=": abs(rhs) <= 1e-12}[c.sense]
            if not holds:
                return None
            continue
        bound = rhs / a
        sense = c.sense if a > 0 else {"<=": ">=", ">=": "<=", "=": "="}[c.sense]
        if sense in ("<=", "="):
            hi = min(hi, bound)
        if sense in (">=", "="):
            lo = max(lo, bound)
    return (lo, hi) if lo <= hi + 1e-9 else None


def test_lrelu_rows_are_exact_by_interval_reasoning():
    rng = np.random.default_rng(2)
    g = ring_or_chain_molecule(rng)[0]
    spec, model = i5_micro(g, GnnConfig(layers=1, k_hid=3, k_c=3, head=(3,)), seed=2)
    m = assemble(spec, model)
    kappa = model.config.kappa
    triples = [
        ("thC_1_1_1", "tauC_1_1_1", "dtC_1_1_1", kappa, model.bigM.layers[1]),
        ("thR_1", "tauR_1", "dtR_1", kappa, model.bigM.head[0]),
        ("thH_1_1", "tauH_1_1", "dtH_1_1", 0.0, model.bigM.head[1]),
    ]
    failures = 0
    for th, tau, dt, slope, M in triples:
        rows = _rows_touching(m, dt)
        for t in rng.uniform(-M, M, size=1000):
            feasible = [iv for d in (0, 1) if (iv := _theta_interval(m, rows, th, tau, dt, t, d))]
            want = t if t > 0 else slope * t
            if not feasible or any(abs(lo - want) > 1e-9 or abs(hi - want) > 1e-9 for lo, hi in feasible):
                failures += 1
    ok = failures == 0
    record(2, ok, f"3 LReLU/ReLU triples x 1000 tau: {failures} where the feasible theta set "
                  f"differs from {{max(kappa*tau, tau)}}")
    assert ok


def _fd_batch(seed):
    rng = np.random.default_rng(100 + seed)
    mols = random_dataset(rng, 4, (5, 9))
    vals = rng.normal(size=4)
    cat = build_catalog(mols, 2)
    cfg = GnnConfig(layers=2, k_hid=5, k_c=6, head=(4, 3))
    model = GnnModel.initialize(cfg, cat.trees, seed=seed)
    for key, arr in model.params.items():
        if arr.ndim == 1:
            model.params[key] = rng.normal(scale=0.3, size=arr.shape)
    return model, list(zip(mols, vals))


def test_gradients_match_finite_differences():
    h = 1e-6
    worst = {}
    for seed in range(3):
        model, batch = _fd_batch(seed)
        _, grad = loss_and_grad(model, batch)
        for key, arr in model.params.items():
            fd = np.zeros_like(arr)
            flat = arr.reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + h
                up, _ = loss_and_grad(model, batch)
                flat[i] = keep - h
                down, _ = loss_and_grad(model, batch)
                flat[i] = keep
                fd.reshape(-1)[i] = (up - down) / (2 * h)
            scale = max(np.linalg.norm(fd), np.linalg.norm(grad[key]), 1e-8)
            rel = np.linalg.norm(fd - grad[key]) / scale
            worst[key] = max(worst.get(key, 0.0), rel)
    bad = {k: v for k, v in worst.items() if v > 1e-4}
    ok = not bad
    record(3, ok, f"{len(worst)} parameter groups x 3 seeds, max relative error "
                  f"{max(worst.values()):.2e} (tolerance 1e-4)")
    assert ok, bad


def test_synthetic_property_is_learned():
    ds = random_dataset(np.random.default_rng(0), 200)
    y = np.array([2 * element_counts(g)["C"] - element_counts(g)["O"] for g in ds], float)
    cfg = GnnConfig(layers=1, k_hid=64, k_c=32, head=(32, 32))
    hp = TrainParams(lr=0.003, batch_size=32, train_embedding=False, max_epochs=5000,
                     patience=100, time_limit=55, val_fraction=0.15, seed=0)
    start = time.perf_counter()
    model = train(ds[:160], y[:160], cfg, hp)
    elapsed = time.perf_counter() - start
    r2 = r_squared([predict(g, model) for g in ds[160:]], y[160:])
    ok = r2 >= 0.95 and elapsed <= 60
    record(4, ok, f"2*#C - #O, 160 train / 40 test: test R^2 {r2:.4f} (>= 0.95) after {elapsed:.1f}s (<= 60s)")
    assert ok


def _all_rooted_shapes():
    for n in range(1, 9):
        for parents in parent_arrays(n):
            yield FringeTree.build(["C"] * n, [0] * n, [0] * n, list(parents), [0] + [1] * (n - 1))


def _random_labelled(rng, n):
    parents = [-1] + [int(rng.integers(v)) for v in range(1, n)]
    return FringeTree.build(
        [str(rng.choice(["C", "N"])) for _ in range(n)],
        [int(rng.integers(2)) for _ in range(n)],
        [0] * n,
        parents,
        [0] + [int(rng.integers(1, 3)) for _ in range(1, n)],
    )


def test_decomposition_invariants_and_canonical_codes():
    rho = 2
    rng = np.random.default_rng(5)
    mols = random_dataset(rng, 400, (4, 16)) + [ring_or_chain_molecule(rng)[0] for _ in range(100)]
    broken = 0
    for g in mols:
        h = suppress_hydrogens(g)
        d = decompose(g, rho)
        trees = extract_fringe_trees(d, g)
        covered = sorted(v for t in trees for v in t.source)
        partition = (set(d.interior) | set(d.exterior) == set(range(h.n_atoms))
                     and not set(d.interior) & set(d.exterior)
                     and covered == list(range(h.n_atoms)))
        heights = all(max(t.depths) <= rho for t in trees)
        try:
            rebuilt = reconstruct_graph(d, trees)
            rebuilt.validate()
            same = rebuilt == h
        except ChemGraphError:
            same = False
        if not (partition and heights and same):
            broken += 1

    # canonical code vs brute-force rooted isomorphism
    reps: dict[bytes, FringeTree] = {}
    code_errors = 0
    for t in _all_rooted_shapes():
        rep = reps.setdefault(t.code, t)
        if rep is not t and not rooted_isomorphic(rep, t):
            code_errors += 1
    shapes = list(reps.values())
    for i, a in enumerate(shapes):
        for b in shapes[i + 1:]:
            if a.size == b.size and rooted_isomorphic(a, b):
                code_errors += 1
    labelled = [_random_labelled(rng, int(rng.integers(1, 9))) for _ in range(300)]
    labelled += [shuffled_tree(t, rng) for t in labelled]
    for i, a in enumerate(labelled):
        for b in labelled[i + 1:]:
            if a.size == b.size and (a.code == b.code) != rooted_isomorphic(a, b):
                code_errors += 1
    ok = broken == 0 and code_errors == 0 and len(shapes) == 200
    record(5, ok, f"500 molecules: {broken} break partition/height/reconstruction/valence; "
                  f"{len(shapes)} rooted shapes up to 8 vertices (200 expected), "
                  f"{code_errors} canonical-code disagreements with brute force")
    assert ok


def test_i5_model_size():
    ds = random_dataset(np.random.default_rng(0), 300, (6, 14))
    cat = build_catalog(ds, 2)
    spec = preset("I5", cat, 50)
    cfg = GnnConfig(layers=3, k_hid=16, k_c=32)
    model = GnnModel.initialize(cfg, cat.trees, seed=0)
    model = with_bigM(model, interval_bigM(model, 9, spec.catalog))
    counts = assemble(spec, model, (0.0, 1.0)).counts()
    nv, nc = counts["variables"], counts["constraints"]
    dv, dc = nv / 7377 - 1, nc / 34508 - 1
    ok = abs(dv) <= 0.3 and abs(dc) <= 0.3
    record(6, ok, f"I5, L=3 K=16 K_C=32, 50 trees: {nv} variables ({dv:+.0%} vs 7377), "
                  f"{nc} constraints ({dc:+.0%} vs 34508), tolerance 30%")
    assert ok


def test_preset_seed_ranks_and_sizes():
    ds = random_dataset(np.random.default_rng(0), 300, (6, 14))
    cat = build_catalog(ds, 2)
    want_rank = {"I1": 1, "I2": 2, "I3": 2, "I4": 2, "I5": 1}
    got_rank = {i: seed_rank(preset(i, cat).seed) for i in want_rank}
    quoted = {"I1": ((6, 8), 15, 20), "I5": ((3, 9), 3, 9)}
    got_sizes = {}
    for i in quoted:
        s = preset(i, cat)
        got_sizes[i] = (tuple(s.nint), s.n_lb, s.n_star)
        assert preset_sizes(i)["nint"] == s.nint
    ok = got_rank == want_rank and got_sizes == quoted
    record(7, ok, f"seed ranks {got_rank}; I1 and I5 (nint, n_LB, n*) {got_sizes}")
    assert ok


@requires_solver
def test_solver_verdicts_match_enumeration():
    pool = tiny_pool()
    assert len(pool) >= 20
    disagree, bad_decodes, lines = 0, 0, []
    start = time.perf_counter()
    for it, g in enumerate(pool[:20]):
        spec, model = tiny_instance(g, seed=it)
        y0 = predict(g, model, spec.catalog)
        yr = (y0 - 0.05, y0 + 0.05) if it % 2 == 0 else (y0 + 5, y0 + 6)
        brute = brute_force_feasibility(spec, model, yr)
        m = assemble(spec, model, yr)
        with tempfile.TemporaryDirectory() as wd:
            sol = solve(m, wd, timeout=60)
        if sol.status not in ("optimal", "infeasible") or sol.feasible != brute.feasible:
            disagree += 1
            lines.append(f"#{it}: brute {brute.feasible}, solver {sol.status}")
            continue
        if sol.feasible:
            dec = decode_solution(sol.values, spec)
            y = predict(dec.graph, model, spec.catalog)
            if satisfies_spec(dec.graph, spec) or not yr[0] - 1e-6 <= y <= yr[1] + 1e-6:
                bad_decodes += 1
                lines.append(f"#{it}: decode fails spec or range (y = {y:.6g})")
    ok = disagree == 0 and bad_decodes == 0
    record(8, ok, f"20 micro instances: {disagree} verdict disagreements, {bad_decodes} bad decodes, "
                  f"{time.perf_counter() - start:.0f}s total (60s cap each)" + ("; " + "; ".join(lines) if lines else ""))
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
