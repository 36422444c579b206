"""The trainable reduced-basis model and its offline training loop.

A model pairs a coefficient network taking (t, mu...) with a basis network
taking (x, t, mu...); both output r values and the reduced approximation
is their inner product. Inputs are affinely normalized to [0, 1] using the
training ranges recorded in the model. A model may hold several trained
block pairs (incremental order growth); the effective reduced order is the
sum of the block widths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TrainingDivergedError
from .nn import AdamState, Mlp, adam_step, mlp_backward, mlp_forward, mlp_forward_cached, mlp_init
from .snapshots import SnapshotSet

DEFAULT_BASIS_HIDDEN = (25, 25, 25, 25)
DEFAULT_COEFF_HIDDEN = (25, 25, 25)


@dataclass
class AffineScaler:
    """Per-component map raw -> (raw - shift) / scale onto roughly [0, 1]."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.shift = np.atleast_1d(np.asarray(self.shift, dtype=float))
        self.scale = np.atleast_1d(np.asarray(self.scale, dtype=float))
        if np.any(self.scale <= 0):
            raise ValueError("normalization scales must be strictly positive")

    @classmethod
    def from_ranges(cls, lo, hi) -> "AffineScaler":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        scale = hi - lo
        scale[scale <= 0] = 1.0  # degenerate range: pass through unscaled
        return cls(lo, scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.shift) / self.scale


@dataclass
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 4096
    seed: int = 0
    shuffle: bool = True
    lr_decay: float = 1.0  # multiplicative per-epoch decay, 1.0 = constant


@dataclass
class LpModel:
    """Coefficient/basis network pair(s) with recorded input normalization."""

    coeff_blocks: list
    basis_blocks: list
    coeff_scaler: AffineScaler
    basis_scaler: AffineScaler
    mu_dim: int
    meta: dict = field(default_factory=dict)

    @property
    def reduced_order(self) -> int:
        return sum(net.output_dim for net in self.basis_blocks)

    @property
    def coeff_net(self) -> Mlp:
        if len(self.coeff_blocks) != 1:
            raise ValueError("model holds multiple blocks; use coeff_blocks")
        return self.coeff_blocks[0]

    @property
    def basis_net(self) -> Mlp:
        if len(self.basis_blocks) != 1:
            raise ValueError("model holds multiple blocks; use basis_blocks")
        return self.basis_blocks[0]


def new_model(
    snapshots: SnapshotSet,
    r: int,
    seed: int = 0,
    basis_hidden=DEFAULT_BASIS_HIDDEN,
    coeff_hidden=DEFAULT_COEFF_HIDDEN,
) -> LpModel:
    """Fresh model with Glorot-initialized nets and data-driven normalization."""
    if r < 1:
        raise ValueError("reduced order must be at least 1")
    mu_dim = snapshots.mu_dim
    rng = np.random.default_rng(seed)
    coeff = mlp_init([1 + mu_dim, *coeff_hidden, r], rng)
    basis = mlp_init([2 + mu_dim, *basis_hidden, r], rng)
    t_lo, t_hi = snapshots.times.min(), snapshots.times.max()
    x_lo, x_hi = snapshots.nodes.min(), snapshots.nodes.max()
    if mu_dim:
        mu_lo = snapshots.parameters.min(axis=0)
        mu_hi = snapshots.parameters.max(axis=0)
    else:
        mu_lo = np.zeros(0)
        mu_hi = np.zeros(0)
    coeff_scaler = AffineScaler.from_ranges(np.concatenate([[t_lo], mu_lo]), np.concatenate([[t_hi], mu_hi]))
    basis_scaler = AffineScaler.from_ranges(
        np.concatenate([[x_lo, t_lo], mu_lo]), np.concatenate([[x_hi, t_hi], mu_hi])
    )
    return LpModel(
        [coeff],
        [basis],
        coeff_scaler,
        basis_scaler,
        mu_dim,
        meta={
            "seed": seed,
            "t_train_range": [float(t_lo), float(t_hi)],
            "basis_hidden": list(basis_hidden),
            "coeff_hidden": list(coeff_hidden),
        },
    )


def coeff_inputs(model: LpModel, t: float, mu) -> np.ndarray:
    mu = np.atleast_1d(np.asarray(mu, dtype=float)) if np.size(mu) else np.zeros(0)
    return model.coeff_scaler.transform(np.concatenate([[t], mu]))


def coeff_values(model: LpModel, t: float, mu=()) -> np.ndarray:
    row = coeff_inputs(model, t, mu)
    return np.concatenate([mlp_forward(net, row) for net in model.coeff_blocks])


def basis_values(model: LpModel, x_nodes, t: float, mu=()) -> np.ndarray:
    """Basis matrix (n_nodes, r): column j holds basis function j at the nodes."""
    x_nodes = np.atleast_1d(np.asarray(x_nodes, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float)) if np.size(mu) else np.zeros(0)
    X = np.empty((x_nodes.size, 2 + model.mu_dim))
    X[:, 0] = x_nodes
    X[:, 1] = t
    if model.mu_dim:
        X[:, 2:] = mu
    Xn = model.basis_scaler.transform(X)
    cols = [mlp_forward(net, Xn) for net in model.basis_blocks]
    return cols[0] if len(cols) == 1 else np.concatenate(cols, axis=1)


def lp_forward(model: LpModel, x: float, t: float, mu=()) -> float:
    """Pointwise reduced approximation: coefficient-basis inner product."""
    phi = basis_values(model, [x], t, mu)[0]
    return float(phi @ coeff_values(model, t, mu))


def predict_values(model: LpModel, x_nodes, t: float, mu=()) -> np.ndarray:
    return basis_values(model, x_nodes, t, mu) @ coeff_values(model, t, mu)


# ---------------------------------------------------------------------------
# training


def _flatten_training_points(snapshots: SnapshotSet):
    """Stack the (x, t, mu) -> u corpus as flat arrays (row per sample)."""
    n_mu, n_t, n_x = snapshots.values.shape
    mu_dim = snapshots.mu_dim
    P = n_mu * n_t * n_x
    Xb = np.empty((P, 2 + mu_dim))
    # nodes broadcast against (n_mu, n_t, n_x) whether shared or per-time
    Xb[:, 0] = np.reshape(np.broadcast_to(snapshots.nodes, (n_mu, n_t, n_x)), P)
    Xb[:, 1] = np.reshape(np.broadcast_to(snapshots.times[None, :, None], (n_mu, n_t, n_x)), P)
    if mu_dim:
        Xb[:, 2:] = np.reshape(
            np.broadcast_to(snapshots.parameters[:, None, None, :], (n_mu, n_t, n_x, mu_dim)),
            (P, mu_dim),
        )
    targets = np.reshape(snapshots.values, P)
    return Xb, targets.copy()


def _predict_blocks(coeff_nets, basis_nets, Xc, Xb) -> np.ndarray:
    out = np.zeros(Xb.shape[0])
    for cn, bn in zip(coeff_nets, basis_nets):
        out += np.sum(mlp_forward(cn, Xc) * mlp_forward(bn, Xb), axis=1)
    return out


def backprop(model: LpModel, batch):
    """Loss and exact parameter gradients of the batch-mean squared error.

    ``batch`` holds rows (x, t, mu..., u_target). Gradients cover every
    block, ordered block by block as coefficient params then basis params.
    Returns ``(loss, grads)``.
    """
    B = np.asarray(batch, dtype=float)
    if B.ndim == 1:
        B = B[None, :]
    if B.shape[0] == 0:
        raise ValueError("empty batch")
    d = 2 + model.mu_dim
    Xb = model.basis_scaler.transform(B[:, :d])
    Xc = model.coeff_scaler.transform(B[:, 1:d])
    y = B[:, d]
    outs = []
    pred = np.zeros(B.shape[0])
    for cn, bn in zip(model.coeff_blocks, model.basis_blocks):
        a_out, cache_c = mlp_forward_cached(cn, Xc)
        phi_out, cache_b = mlp_forward_cached(bn, Xb)
        pred += np.sum(a_out * phi_out, axis=1)
        outs.append((a_out, phi_out, cache_c, cache_b))
    res = pred - y
    loss = float(res @ res) / res.size
    dpred = (2.0 / res.size) * res
    grads = []
    for (cn, bn), (a_out, phi_out, cache_c, cache_b) in zip(
        zip(model.coeff_blocks, model.basis_blocks), outs
    ):
        grads.extend(mlp_backward(cn, cache_c, dpred[:, None] * phi_out))
        grads.extend(mlp_backward(bn, cache_b, dpred[:, None] * a_out))
    return loss, grads


def model_parameters(model: LpModel) -> list:
    """Flat list of every trainable array, matching backprop's gradient order."""
    params = []
    for cn, bn in zip(model.coeff_blocks, model.basis_blocks):
        params.extend(cn.parameters())
        params.extend(bn.parameters())
    return params


def _train_pair(
    coeff_net: Mlp,
    basis_net: Mlp,
    Xc: np.ndarray,
    Xb: np.ndarray,
    targets: np.ndarray,
    cfg: TrainConfig,
):
    """Minibatch Adam on the mean-square mismatch for one network pair.

    ``targets`` already has any frozen-block prediction subtracted, so the
    pair is fit to the residual. Returns the per-epoch loss history.
    """
    rng = np.random.default_rng(cfg.seed)
    params = coeff_net.parameters() + basis_net.parameters()
    state = AdamState.for_params(params)
    n_coeff = len(coeff_net.parameters())
    P = targets.size
    batch = min(cfg.batch_size, P)
    history = []
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        order = rng.permutation(P) if cfg.shuffle else np.arange(P)
        sq_sum = 0.0
        for b_idx, start in enumerate(range(0, P, batch)):
            sel = order[start : start + batch]
            xc = Xc[sel]
            xb = Xb[sel]
            y = targets[sel]
            a_out, cache_c = mlp_forward_cached(coeff_net, xc)
            phi_out, cache_b = mlp_forward_cached(basis_net, xb)
            pred = np.sum(a_out * phi_out, axis=1)
            res = pred - y
            loss = float(res @ res) / sel.size
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, b_idx, loss)
            sq_sum += float(res @ res)
            scale = 2.0 / sel.size
            dpred = scale * res
            g_coeff = mlp_backward(coeff_net, cache_c, dpred[:, None] * phi_out)
            g_basis = mlp_backward(basis_net, cache_b, dpred[:, None] * a_out)
            adam_step(params, g_coeff + g_basis, state, lr)
        history.append(sq_sum / P)
        lr *= cfg.lr_decay
    return history


def train_offline(model: LpModel, snapshots: SnapshotSet, cfg: TrainConfig):
    """Train the model's (single) block pair on the snapshot corpus in place.

    Returns ``(model, loss_history)`` with one mean-square loss per epoch;
    fully deterministic for a fixed (seed, cfg, data) triple.
    """
    if snapshots.values.size == 0:
        raise ValueError("empty snapshot set")
    if len(model.coeff_blocks) != 1:
        raise ValueError("train_offline expects a single-block model; see train_block_incremental")
    Xb_raw, targets = _flatten_training_points(snapshots)
    Xb = model.basis_scaler.transform(Xb_raw)
    Xc = model.coeff_scaler.transform(Xb_raw[:, 1:])
    history = _train_pair(model.coeff_blocks[0], model.basis_blocks[0], Xc, Xb, targets, cfg)
    model.meta["loss_history"] = history
    model.meta["train_config"] = {
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "shuffle": cfg.shuffle,
        "lr_decay": cfg.lr_decay,
    }
    return model, history


def train_block_incremental(base: LpModel, delta_r: int, snapshots: SnapshotSet, cfg: TrainConfig):
    """Augment a trained model by a frozen-base residual-fit block.

    A fresh (coefficient, basis) pair of width ``delta_r`` is trained
    against the mismatch between the frozen base prediction and the
    snapshots; the returned model concatenates the blocks, so its order is
    ``base.reduced_order + delta_r``. ``delta_r == 0`` returns the base
    unchanged.
    """
    if delta_r < 0:
        raise ValueError("delta_r must be nonnegative")
    if delta_r == 0:
        return base, []
    Xb_raw, targets = _flatten_training_points(snapshots)
    Xb = base.basis_scaler.transform(Xb_raw)
    Xc = base.coeff_scaler.transform(Xb_raw[:, 1:])
    residual = targets - _predict_blocks(base.coeff_blocks, base.basis_blocks, Xc, Xb)
    rng = np.random.default_rng(cfg.seed)
    coeff_hidden = base.meta.get("coeff_hidden", list(DEFAULT_COEFF_HIDDEN))
    basis_hidden = base.meta.get("basis_hidden", list(DEFAULT_BASIS_HIDDEN))
    coeff = mlp_init([1 + base.mu_dim, *coeff_hidden, delta_r], rng)
    basis = mlp_init([2 + base.mu_dim, *basis_hidden, delta_r], rng)
    history = _train_pair(coeff, basis, Xc, Xb, residual, cfg)
    augmented = LpModel(
        [net.copy() for net in base.coeff_blocks] + [coeff],
        [net.copy() for net in base.basis_blocks] + [basis],
        base.coeff_scaler,
        base.basis_scaler,
        base.mu_dim,
        meta=dict(base.meta, block_loss_history=history),
    )
    return augmented, history


def training_loss(model: LpModel, snapshots: SnapshotSet) -> float:
    """Mean-square mismatch of the full model over the whole corpus."""
    Xb_raw, targets = _flatten_training_points(snapshots)
    Xb = model.basis_scaler.transform(Xb_raw)
    Xc = model.coeff_scaler.transform(Xb_raw[:, 1:])
    res = _predict_blocks(model.coeff_blocks, model.basis_blocks, Xc, Xb) - targets
    return float(res @ res) / targets.size


# ---------------------------------------------------------------------------
# persistence (self-describing JSON, lossless float64 round trip)


def _net_to_dict(net: Mlp) -> dict:
    return {
        "layer_dims": net.layer_dims,
        "hidden_activation": "tanh",
        "output_rule": "softmax_affine",
        "weights": [W.tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def _net_from_dict(d: dict) -> Mlp:
    return Mlp(
        [np.asarray(W, dtype=float) for W in d["weights"]],
        [np.asarray(b, dtype=float) for b in d["biases"]],
    )


def save_model(path, model: LpModel) -> None:
    doc = {
        "format": "transrom-model-v1",
        "mu_dim": model.mu_dim,
        "reduced_order": model.reduced_order,
        "coeff_scaler": {"shift": model.coeff_scaler.shift.tolist(), "scale": model.coeff_scaler.scale.tolist()},
        "basis_scaler": {"shift": model.basis_scaler.shift.tolist(), "scale": model.basis_scaler.scale.tolist()},
        "coeff_blocks": [_net_to_dict(n) for n in model.coeff_blocks],
        "basis_blocks": [_net_to_dict(n) for n in model.basis_blocks],
        "meta": model.meta,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> LpModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "transrom-model-v1":
        raise ValueError(f"{path} is not a model document")
    return LpModel(
        [_net_from_dict(d) for d in doc["coeff_blocks"]],
        [_net_from_dict(d) for d in doc["basis_blocks"]],
        AffineScaler(np.asarray(doc["coeff_scaler"]["shift"]), np.asarray(doc["coeff_scaler"]["scale"])),
        AffineScaler(np.asarray(doc["basis_scaler"]["shift"]), np.asarray(doc["basis_scaler"]["scale"])),
        int(doc["mu_dim"]),
        meta=doc.get("meta", {}),
    )
