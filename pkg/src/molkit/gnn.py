"""2L-GNN property predictor over interior vertices.

Each interior vertex starts from a 15-entry feature vector: a C/O/N
one-hot, degree plus hydrogens, valence plus ion-valence, hydrogens,
ion-valence and an 8-entry embedding of its fringe tree.  ``L`` rounds of
sum aggregation over the closed interior neighbourhood with LeakyReLU are
followed by a projected sum readout (LeakyReLU) and a ReLU head with a
linear output unit.

All arithmetic is plain numpy; gradients are hand-written reverse mode.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from .catalog import FringeCatalog
from .chemgraph import (
    ChemicalGraph,
    ElementTable,
    FringeTree,
    TwoLayerDecomposition,
    decompose,
    default_elements,
    extract_fringe_trees,
)

log = logging.getLogger(__name__)

ONE_HOT = ("C", "O", "N")
N_BASE = 7


class GnnError(ValueError):
    pass


class TrainingDiverged(GnnError):
    def __init__(self, message: str, checkpoint: "GnnModel"):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class GnnConfig:
    layers: int = 3
    k_hid: int = 16
    k_c: int = 32
    head: tuple[int, ...] = (32, 32)
    k_f: int = 8
    kappa: float = 0.1
    rho: int = 2

    def __post_init__(self):
        object.__setattr__(self, "head", tuple(int(h) for h in self.head))
        if self.layers < 1:
            raise GnnError("at least one message-passing layer is required")
        if not 0 < self.kappa < 1:
            raise GnnError("LeakyReLU slope must lie in (0, 1)")
        if min((self.k_hid, self.k_c, self.k_f) + self.head) < 1:
            raise GnnError("layer widths must be positive")

    @property
    def k_node(self) -> int:
        return N_BASE + self.k_f

    @classmethod
    def with_defaults(cls, **kw) -> "GnnConfig":
        """Like the constructor, but the head defaults to two layers of width ``k_c``."""
        if "head" not in kw:
            kw["head"] = (kw.get("k_c", cls.k_c),) * 2
        return cls(**kw)

    def to_json(self) -> dict:
        return {
            "layers": self.layers,
            "k_hid": self.k_hid,
            "k_c": self.k_c,
            "head": list(self.head),
            "k_f": self.k_f,
            "kappa": self.kappa,
            "rho": self.rho,
        }


@dataclass(frozen=True)
class BigM:
    """Scalar bounds ``layers[l]`` for l in 0..L and one bound per head stage.

    ``head[0]`` covers the readout; ``head[j]`` covers hidden head layer j.
    """

    layers: tuple[float, ...]
    head: tuple[float, ...]

    def to_json(self) -> dict:
        return {"layers": list(self.layers), "head": list(self.head)}

    @classmethod
    def from_json(cls, data: Mapping) -> "BigM":
        return cls(tuple(float(x) for x in data["layers"]), tuple(float(x) for x in data["head"]))


def embedding_init(tree: FringeTree, rho: int, k_f: int = 8) -> np.ndarray:
    s = tree.stats
    raw = [
        s.n_heavy / 4,
        s.height / rho,
        s.root_degree / 3,
        s.root_hydrogens / 3,
        s.root_bond_sum / 4,
        s.count("C") / 4,
        s.count("O") / 4,
        s.count("N") / 4,
    ]
    out = np.zeros(k_f)
    out[: min(k_f, len(raw))] = raw[:k_f]
    return out


@dataclass
class GnnModel:
    config: GnnConfig
    params: dict[str, np.ndarray]
    codes: list[bytes] = field(default_factory=list)
    bigM: BigM | None = None
    metadata: dict = field(default_factory=dict)

    # parameter layout
    @staticmethod
    def layer_keys(cfg: GnnConfig) -> list[str]:
        keys = []
        for l in range(cfg.layers):
            keys += [f"W{l}", f"b{l}"]
        keys.append("WC")
        for j in range(len(cfg.head) + 1):
            keys += [f"V{j}", f"c{j}"]
        keys.append("emb")
        return keys

    @staticmethod
    def shapes(cfg: GnnConfig, n_codes: int) -> dict[str, tuple[int, ...]]:
        out = {}
        for l in range(cfg.layers):
            out[f"W{l}"] = (cfg.k_node if l == 0 else cfg.k_hid, cfg.k_hid)
            out[f"b{l}"] = (cfg.k_hid,)
        out["WC"] = (cfg.k_hid, cfg.k_c)
        widths = (cfg.k_c,) + cfg.head + (1,)
        for j in range(len(widths) - 1):
            out[f"V{j}"] = (widths[j], widths[j + 1])
            out[f"c{j}"] = (widths[j + 1],)
        out["emb"] = (n_codes, cfg.k_f)
        return out

    @classmethod
    def initialize(
        cls,
        cfg: GnnConfig,
        trees: Sequence[FringeTree] = (),
        seed: int = 0,
        zero: bool = False,
    ) -> "GnnModel":
        rng = np.random.default_rng(seed)
        uniq: dict[bytes, FringeTree] = {}
        for t in trees:
            uniq.setdefault(t.code, t)
        codes = sorted(uniq)
        params = {}
        for key, shape in cls.shapes(cfg, len(codes)).items():
            if key == "emb":
                params[key] = np.array(
                    [embedding_init(uniq[c], cfg.rho, cfg.k_f) for c in codes]
                ).reshape(shape)
            elif zero or len(shape) == 1:
                params[key] = np.zeros(shape)
            else:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                params[key] = rng.uniform(-limit, limit, size=shape)
        return cls(cfg, params, codes)

    @property
    def code_index(self) -> dict[bytes, int]:
        idx = self.__dict__.get("_code_index")
        if idx is None or len(idx) != len(self.codes):
            idx = {c: i for i, c in enumerate(self.codes)}
            self.__dict__["_code_index"] = idx
        return idx

    def embed(self, tree: FringeTree) -> np.ndarray:
        """Embedding vector for a tree; unseen trees use their statistics-based init."""
        i = self.code_index.get(tree.code)
        if i is None:
            return embedding_init(tree, self.config.rho, self.config.k_f)
        return self.params["emb"][i]

    def copy(self) -> "GnnModel":
        return GnnModel(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            list(self.codes),
            self.bigM,
            dict(self.metadata),
        )

    def check_shapes(self) -> None:
        want = self.shapes(self.config, len(self.codes))
        for key, shape in want.items():
            got = self.params.get(key)
            if got is None or got.shape != shape:
                raise GnnError(
                    f"parameter {key}: expected shape {shape}, got {None if got is None else got.shape}"
                )

    # serialization
    def to_json(self) -> dict:
        cfg = self.config
        return {
            "config": cfg.to_json(),
            "weights": {
                "W": [self.params[f"W{l}"].tolist() for l in range(cfg.layers)],
                "b": [self.params[f"b{l}"].tolist() for l in range(cfg.layers)],
                "WC": self.params["WC"].tolist(),
                "head_W": [self.params[f"V{j}"].tolist() for j in range(len(cfg.head) + 1)],
                "head_b": [self.params[f"c{j}"].tolist() for j in range(len(cfg.head) + 1)],
            },
            "embedding": {
                c.decode("ascii"): self.params["emb"][i].tolist() for i, c in enumerate(self.codes)
            },
            "bigM": None if self.bigM is None else self.bigM.to_json(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "GnnModel":
        cfg = GnnConfig(**{**data["config"], "head": tuple(data["config"]["head"])})
        w = data["weights"]
        params = {}
        for l in range(cfg.layers):
            params[f"W{l}"] = np.array(w["W"][l], dtype=float)
            params[f"b{l}"] = np.array(w["b"][l], dtype=float)
        params["WC"] = np.array(w["WC"], dtype=float)
        for j in range(len(cfg.head) + 1):
            params[f"V{j}"] = np.array(w["head_W"][j], dtype=float)
            params[f"c{j}"] = np.array(w["head_b"][j], dtype=float)
        codes = sorted(data["embedding"])
        params["emb"] = np.array([data["embedding"][c] for c in codes], dtype=float).reshape(
            len(codes), cfg.k_f
        )
        bigM = None if data.get("bigM") is None else BigM.from_json(data["bigM"])
        model = cls(cfg, params, [c.encode("ascii") for c in codes], bigM, dict(data.get("metadata", {})))
        model.check_shapes()
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "GnnModel":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------- features


@dataclass(frozen=True)
class GraphInput:
    """Parameter-independent view of a molecule: base features, trees, interior edges."""

    base: np.ndarray  # (n, 7)
    trees: tuple[FringeTree, ...]
    edges: np.ndarray  # (m, 2) interior edges in local indices
    vertices: tuple[int, ...]  # graph vertex id per row

    @property
    def n(self) -> int:
        return len(self.vertices)


def base_features(
    d: TwoLayerDecomposition, table: ElementTable | None = None
) -> np.ndarray:
    table = table or default_elements()
    h = d.graph
    rows = []
    for v in d.interior:
        a = h.atoms[v]
        row = [1.0 if a.element == e else 0.0 for e in ONE_HOT]
        row += [
            h.degree(v) + a.hydrogens,
            table.valence(a.element) + a.ion,
            a.hydrogens,
            a.ion,
        ]
        rows.append(row)
    return np.array(rows, dtype=float).reshape(len(rows), N_BASE)


def prepare(
    g: ChemicalGraph,
    rho: int,
    catalog: FringeCatalog | None = None,
    table: ElementTable | None = None,
) -> GraphInput:
    d = decompose(g, rho)
    trees = extract_fringe_trees(d, g)
    if catalog is not None:
        index = catalog.index
        for v, t in zip(d.interior, trees):
            if t.code not in index:
                raise GnnError(f"uncatalogued fringe tree at vertex {v}: {t.code.decode()}")
    pos = {v: i for i, v in enumerate(d.interior)}
    edges = np.array([(pos[u], pos[v]) for u, v in d.interior_edges], dtype=int).reshape(-1, 2)
    return GraphInput(base_features(d, table), tuple(trees), edges, d.interior)


def node_features(
    g: ChemicalGraph,
    d: TwoLayerDecomposition,
    catalog: FringeCatalog | None,
    model: GnnModel,
    table: ElementTable | None = None,
) -> dict[int, np.ndarray]:
    """Initial 15-entry feature vector per interior vertex."""
    trees = extract_fringe_trees(d, g)
    if catalog is not None:
        index = catalog.index
        for v, t in zip(d.interior, trees):
            if t.code not in index:
                raise GnnError(f"uncatalogued fringe tree at vertex {v}: {t.code.decode()}")
    base = base_features(d, table)
    return {
        v: np.concatenate([base[i], model.embed(t)]) for i, (v, t) in enumerate(zip(d.interior, trees))
    }


# ---------------------------------------------------------------- forward


def lrelu(x: np.ndarray, kappa: float) -> np.ndarray:
    return np.where(x > 0, x, kappa * x)


@dataclass
class Trace:
    """Every intermediate of one forward pass (rows follow ``GraphInput.vertices``)."""

    theta: list[np.ndarray]  # theta[l], l = 0..L
    tau: list[np.ndarray]  # tau[l] for l = 1..L (tau[0] is None)
    messages: list[np.ndarray]  # theta[l] @ W_l for l = 0..L-1
    tau_r: np.ndarray
    theta_r: np.ndarray
    head_pre: list[np.ndarray]
    head_post: list[np.ndarray]
    y: float


def _closed_adjacency(n: int, edges: np.ndarray) -> sparse.csr_matrix:
    rows = np.concatenate([np.arange(n), edges[:, 0], edges[:, 1]])
    cols = np.concatenate([np.arange(n), edges[:, 1], edges[:, 0]])
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def _embed_rows(model: GnnModel, trees: Sequence[FringeTree]) -> tuple[np.ndarray, np.ndarray]:
    """Embedding matrix for ``trees`` plus the table row per tree (-1 if unseen)."""
    idx = model.code_index
    rows = np.array([idx.get(t.code, -1) for t in trees], dtype=int)
    emb = np.empty((len(trees), model.config.k_f))
    for i, (t, r) in enumerate(zip(trees, rows)):
        emb[i] = model.params["emb"][r] if r >= 0 else embedding_init(t, model.config.rho, model.config.k_f)
    return emb, rows


def forward_input(model: GnnModel, x: GraphInput) -> Trace:
    cfg = model.config
    p = model.params
    if x.n == 0:
        raise GnnError("empty interior graph")
    if x.base.shape[1] != N_BASE:
        raise GnnError("base feature width mismatch")
    emb, _ = _embed_rows(model, x.trees)
    theta = [np.hstack([x.base, emb])]
    if theta[0].shape[1] != p["W0"].shape[0]:
        raise GnnError(
            f"feature width {theta[0].shape[1]} does not match first layer {p['W0'].shape[0]}"
        )
    A = _closed_adjacency(x.n, x.edges)
    tau: list = [None]
    messages = []
    for l in range(cfg.layers):
        msg = theta[l] @ p[f"W{l}"]
        messages.append(msg)
        t = A @ msg + p[f"b{l}"]
        tau.append(t)
        theta.append(lrelu(t, cfg.kappa))
    tau_r = theta[-1].sum(axis=0) @ p["WC"]
    theta_r = lrelu(tau_r, cfg.kappa)
    z = theta_r
    pre, post = [], []
    for j in range(len(cfg.head)):
        a = z @ p[f"V{j}"] + p[f"c{j}"]
        z = np.maximum(a, 0.0)
        pre.append(a)
        post.append(z)
    j = len(cfg.head)
    y = float((z @ p[f"V{j}"] + p[f"c{j}"])[0])
    return Trace(theta, tau, messages, tau_r, theta_r, pre, post, y)


def forward(
    g: ChemicalGraph,
    model: GnnModel,
    catalog: FringeCatalog | None = None,
    table: ElementTable | None = None,
) -> tuple[float, Trace]:
    model.check_shapes()
    x = prepare(g, model.config.rho, catalog, table)
    tr = forward_input(model, x)
    return tr.y, tr


def predict(g: ChemicalGraph, model: GnnModel, catalog: FringeCatalog | None = None) -> float:
    return forward(g, model, catalog)[0]


# ---------------------------------------------------------------- batched training path


@dataclass
class _Batch:
    base: np.ndarray
    trees: list[FringeTree]
    A: sparse.csr_matrix
    S: sparse.csr_matrix  # graph-by-vertex membership
    targets: np.ndarray


def _make_batch(inputs: Sequence[GraphInput], targets: Sequence[float]) -> _Batch:
    offsets = np.cumsum([0] + [x.n for x in inputs])
    n = int(offsets[-1])
    edges = np.vstack([x.edges + o for x, o in zip(inputs, offsets)]) if inputs else np.zeros((0, 2), int)
    A = _closed_adjacency(n, edges.astype(int).reshape(-1, 2))
    member = np.repeat(np.arange(len(inputs)), [x.n for x in inputs])
    S = sparse.csr_matrix((np.ones(n), (member, np.arange(n))), shape=(len(inputs), n))
    trees = [t for x in inputs for t in x.trees]
    return _Batch(np.vstack([x.base for x in inputs]), trees, A, S, np.asarray(targets, dtype=float))


def _batch_loss_grad(model: GnnModel, b: _Batch, want_grad: bool = True):
    cfg = model.config
    p = model.params
    kappa = cfg.kappa
    emb, rows = _embed_rows(model, b.trees)
    thetas = [np.hstack([b.base, emb])]
    aggs, taus = [], []
    for l in range(cfg.layers):
        agg = b.A @ thetas[l]
        t = agg @ p[f"W{l}"] + p[f"b{l}"]
        aggs.append(agg)
        taus.append(t)
        thetas.append(np.where(t > 0, t, kappa * t))
    pooled = b.S @ thetas[-1]
    tau_r = pooled @ p["WC"]
    z = np.where(tau_r > 0, tau_r, kappa * tau_r)
    zs, pres = [z], []
    for j in range(len(cfg.head)):
        a = z @ p[f"V{j}"] + p[f"c{j}"]
        pres.append(a)
        z = np.maximum(a, 0.0)
        zs.append(z)
    j_out = len(cfg.head)
    y = (z @ p[f"V{j_out}"] + p[f"c{j_out}"])[:, 0]
    err = y - b.targets
    loss = float(np.mean(err**2))
    if not want_grad:
        return loss, y, None
    B = len(b.targets)
    g: dict[str, np.ndarray] = {}
    dy = (2.0 / B) * err[:, None]
    g[f"V{j_out}"] = zs[-1].T @ dy
    g[f"c{j_out}"] = dy.sum(axis=0)
    dz = dy @ p[f"V{j_out}"].T
    for j in reversed(range(len(cfg.head))):
        da = dz * (pres[j] > 0)
        g[f"V{j}"] = zs[j].T @ da
        g[f"c{j}"] = da.sum(axis=0)
        dz = da @ p[f"V{j}"].T
    dtau_r = dz * np.where(tau_r > 0, 1.0, kappa)
    g["WC"] = pooled.T @ dtau_r
    dtheta = b.S.T @ (dtau_r @ p["WC"].T)
    for l in reversed(range(cfg.layers)):
        dt = dtheta * np.where(taus[l] > 0, 1.0, kappa)
        g[f"W{l}"] = aggs[l].T @ dt
        g[f"b{l}"] = dt.sum(axis=0)
        dtheta = b.A.T @ (dt @ p[f"W{l}"].T)
    gemb = np.zeros_like(p["emb"])
    known = rows >= 0
    np.add.at(gemb, rows[known], dtheta[known, N_BASE:])
    g["emb"] = gemb
    return loss, y, g


def loss_and_grad(
    model: GnnModel, batch: Sequence[tuple[ChemicalGraph, float]], catalog: FringeCatalog | None = None
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error over ``batch`` and its exact gradient per parameter array."""
    if not batch:
        raise GnnError("empty batch")
    inputs = [prepare(g, model.config.rho, catalog) for g, _ in batch]
    b = _make_batch(inputs, [v for _, v in batch])
    loss, _, grad = _batch_loss_grad(model, b)
    return loss, grad


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainParams:
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 500
    patience: int = 20
    val_fraction: float = 0.1
    seed: int = 0
    time_limit: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    bigm_safety: float = 2.0
    train_embedding: bool = True
    weight_decay: float = 0.0


def dataset_hash(dataset: Sequence[ChemicalGraph], values: Sequence[float]) -> str:
    h = hashlib.sha256()
    for g, v in zip(dataset, values):
        h.update(repr((g.atoms, g.bonds, float(v))).encode())
    return h.hexdigest()


def _mae(model: GnnModel, b: _Batch | None) -> float:
    if b is None:
        return float("nan")
    _, y, _ = _batch_loss_grad(model, b, want_grad=False)
    return float(np.mean(np.abs(y - b.targets)))


def train(
    dataset: Sequence[ChemicalGraph],
    values: Sequence[float],
    config: GnnConfig,
    hp: TrainParams = TrainParams(),
    catalog: FringeCatalog | None = None,
) -> GnnModel:
    """Adam on standardized targets with early stopping on validation MAE."""
    if not 0 <= hp.val_fraction < 1:
        raise GnnError("validation fraction must lie in [0, 1)")
    if len(dataset) != len(values) or not dataset:
        raise GnnError("dataset and values must be nonempty and equally long")
    t0 = time.monotonic()
    rng = np.random.default_rng(hp.seed)
    inputs = [prepare(g, config.rho, catalog) for g in dataset]
    all_trees = [t for x in inputs for t in x.trees]
    if catalog is not None:
        all_trees += list(catalog.trees)
    model = GnnModel.initialize(config, all_trees, seed=hp.seed)

    y = np.asarray(values, dtype=float)
    mu, sigma = float(y.mean()), float(y.std()) or 1.0
    ys = (y - mu) / sigma

    order = rng.permutation(len(dataset))
    n_val = int(round(hp.val_fraction * len(dataset)))
    if len(dataset) - n_val < 1:
        n_val = 0
    val_idx, tr_idx = order[:n_val], order[n_val:]
    val_batch = _make_batch([inputs[i] for i in val_idx], ys[val_idx]) if n_val else None

    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    s = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0
    best = model.copy()
    best_score = np.inf
    stale = 0
    for epoch in range(hp.max_epochs):
        perm = rng.permutation(tr_idx)
        for start in range(0, len(perm), hp.batch_size):
            chunk = perm[start : start + hp.batch_size]
            b = _make_batch([inputs[i] for i in chunk], ys[chunk])
            loss, _, grad = _batch_loss_grad(model, b)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became {loss} at epoch {epoch}", _unstandardize(best, mu, sigma)
                )
            step += 1
            for k, gk in grad.items():
                if k == "emb" and not hp.train_embedding:
                    continue
                m[k] = hp.beta1 * m[k] + (1 - hp.beta1) * gk
                s[k] = hp.beta2 * s[k] + (1 - hp.beta2) * gk * gk
                mhat = m[k] / (1 - hp.beta1**step)
                shat = s[k] / (1 - hp.beta2**step)
                model.params[k] -= hp.lr * mhat / (np.sqrt(shat) + hp.eps)
                if hp.weight_decay and k != "emb":
                    model.params[k] *= 1.0 - hp.lr * hp.weight_decay
        if val_batch is not None:
            score = _mae(model, val_batch)
        else:
            score = _mae(model, _make_batch([inputs[i] for i in tr_idx], ys[tr_idx]))
        if not np.isfinite(score):
            raise TrainingDiverged(f"validation error became {score}", _unstandardize(best, mu, sigma))
        if score < best_score - 1e-12:
            best_score = score
            best = model.copy()
            stale = 0
        else:
            stale += 1
            if stale >= hp.patience:
                log.info("early stop at epoch %d", epoch)
                break
        if hp.time_limit is not None and time.monotonic() - t0 > hp.time_limit:
            log.info("time limit reached at epoch %d", epoch)
            break

    final = _unstandardize(best, mu, sigma)
    final.metadata = {"seed": hp.seed, "dataset_hash": dataset_hash(dataset, values)}
    bm = compute_bigM(final, dataset, safety=hp.bigm_safety, catalog=catalog)
    final.bigM = bm.bounds
    return final


def _unstandardize(model: GnnModel, mu: float, sigma: float) -> GnnModel:
    out = model.copy()
    j = len(out.config.head)
    out.params[f"V{j}"] = out.params[f"V{j}"] * sigma
    out.params[f"c{j}"] = out.params[f"c{j}"] * sigma + mu
    return out


# ---------------------------------------------------------------- big-M bounds


@dataclass(frozen=True)
class BigMResult:
    bounds: BigM  # what the MILP uses
    empirical: BigM  # raw maxima, before safety factor and floor
    interval: BigM | None


def _trace_maxima(model: GnnModel, tr: Trace) -> tuple[list[float], list[float]]:
    cfg = model.config
    layers = []
    for l in range(cfg.layers + 1):
        vals = [np.abs(tr.theta[l]).max()]
        if l >= 1:
            vals.append(np.abs(tr.tau[l]).max())
        if l < cfg.layers:
            vals.append(np.abs(tr.messages[l]).max())
            vals.append(np.abs(model.params[f"b{l}"]).max())
        layers.append(float(max(vals)))
    head = [float(max(np.abs(tr.tau_r).max(), np.abs(tr.theta_r).max()))]
    for a in tr.head_pre:
        head.append(float(np.abs(a).max()))
    return layers, head


def compute_bigM(
    model: GnnModel,
    dataset: Sequence[ChemicalGraph],
    safety: float = 2.0,
    floor: float = 1.0,
    catalog: FringeCatalog | None = None,
    interval_vertices: int | None = None,
) -> BigMResult:
    """Layer bounds from training-data maxima times ``safety``, floored at ``floor``."""
    cfg = model.config
    layers = [0.0] * (cfg.layers + 1)
    head = [0.0] * (len(cfg.head) + 1)
    for g in dataset:
        _, tr = forward(g, model, catalog)
        lm, hm = _trace_maxima(model, tr)
        layers = [max(a, b) for a, b in zip(layers, lm)]
        head = [max(a, b) for a, b in zip(head, hm)]
    emp = BigM(tuple(layers), tuple(head))
    bounds = BigM(
        tuple(max(floor, safety * x) for x in layers), tuple(max(floor, safety * x) for x in head)
    )
    interval = None
    if interval_vertices is not None:
        interval = interval_bigM(model, interval_vertices, catalog=catalog)
    return BigMResult(bounds, emp, interval)


def _interval_matmul(lo: np.ndarray, hi: np.ndarray, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Wp, Wn = np.maximum(W, 0), np.minimum(W, 0)
    return lo @ Wp + hi @ Wn, hi @ Wp + lo @ Wn


def feature_box(
    model: GnnModel,
    catalog: FringeCatalog | None = None,
    table: ElementTable | None = None,
    elements: Sequence[str] | None = None,
    max_degree: int = 4,
) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise bounds on initial features over all admissible vertices.

    An all-zero row (an unused vertex slot) is always inside the box.
    """
    table = table or default_elements()
    heavy = [e for e in (elements or table) if e != "H"]
    vals = [table.valence(e) for e in heavy]
    ions, hyds = [-3, 3], [0, max_degree]
    if catalog is not None and len(catalog):
        ions = [min(t.ions[0] for t in catalog.trees), max(t.ions[0] for t in catalog.trees)]
        hyds = [0, min(max_degree, max(t.hydrogens[0] for t in catalog.trees))]
    onehot_hi = [1 if e in heavy else 0 for e in ONE_HOT]
    lo = [0, 0, 0, 0, min(0, min(vals) + ions[0]), 0, min(0, ions[0])]
    hi = onehot_hi + [max_degree, max(vals) + ions[1], hyds[1], max(0, ions[1])]
    embs = [model.params["emb"]] if len(model.codes) else []
    if catalog is not None:
        embs.append(np.array([model.embed(t) for t in catalog.trees]).reshape(-1, model.config.k_f))
    stacked = np.vstack(embs + [np.zeros((1, model.config.k_f))])
    return (
        np.concatenate([lo, stacked.min(axis=0)]).astype(float),
        np.concatenate([hi, stacked.max(axis=0)]).astype(float),
    )


def interval_bigM(
    model: GnnModel,
    max_vertices: int,
    catalog: FringeCatalog | None = None,
    max_degree: int = 4,
    floor: float = 1.0,
    elements: Sequence[str] | None = None,
) -> BigM:
    """Sound bounds for every graph with at most ``max_vertices`` interior vertices.

    ``elements`` restricts the interior elements; vertices have total
    degree (hydrogens included) at most ``max_degree``.
    """
    cfg = model.config
    p = model.params
    lo, hi = feature_box(model, catalog, elements=elements, max_degree=max_degree)
    fan = min(max_degree, max_vertices - 1) + 1
    layers = [float(max(np.abs(lo).max(), np.abs(hi).max()))]
    for l in range(cfg.layers):
        mlo, mhi = _interval_matmul(lo, hi, p[f"W{l}"])
        layers[l] = max(layers[l], float(np.abs(np.concatenate([mlo, mhi])).max()))
        layers[l] = max(layers[l], float(np.abs(p[f"b{l}"]).max()))
        # between one and ``fan`` messages are summed
        tlo = np.where(mlo < 0, fan * mlo, mlo) + p[f"b{l}"]
        thi = np.where(mhi > 0, fan * mhi, mhi) + p[f"b{l}"]
        lo, hi = lrelu(tlo, cfg.kappa), lrelu(thi, cfg.kappa)
        layers.append(float(np.abs(np.concatenate([tlo, thi, lo, hi])).max()))
    slo = np.where(lo < 0, max_vertices * lo, lo)
    shi = np.where(hi > 0, max_vertices * hi, hi)
    rlo, rhi = _interval_matmul(slo, shi, p["WC"])
    head = [float(np.abs(np.concatenate([rlo, rhi])).max())]
    zlo, zhi = lrelu(rlo, cfg.kappa), lrelu(rhi, cfg.kappa)
    for j in range(len(cfg.head)):
        alo, ahi = _interval_matmul(zlo, zhi, p[f"V{j}"])
        alo, ahi = alo + p[f"c{j}"], ahi + p[f"c{j}"]
        head.append(float(np.abs(np.concatenate([alo, ahi])).max()))
        zlo, zhi = np.maximum(alo, 0), np.maximum(ahi, 0)
    return BigM(tuple(max(floor, x) for x in layers), tuple(max(floor, x) for x in head))


def trace_fits_bigM(model: GnnModel, tr: Trace, bigM: BigM | None = None) -> list[str]:
    """Names of trace quantities that exceed the stored bounds (empty when all fit)."""
    bigM = bigM or model.bigM
    if bigM is None:
        raise GnnError("model has no big-M bounds")
    lm, hm = _trace_maxima(model, tr)
    bad = [f"layer {l}: {v:.6g} > {M:.6g}" for l, (v, M) in enumerate(zip(lm, bigM.layers)) if v > M]
    bad += [f"head {j}: {v:.6g} > {M:.6g}" for j, (v, M) in enumerate(zip(hm, bigM.head)) if v > M]
    return bad


def with_bigM(model: GnnModel, bigM: BigM) -> GnnModel:
    out = model.copy()
    out.bigM = bigM
    return out
