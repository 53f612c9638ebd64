"""Gated broad learning system classification head.

The selected features are projected into a wide hidden layer, split into
``n_groups`` group tokens that attend to each other, and a sigmoid gate mixes
the attended representation with the projection (highway mixing) before layer
norm, dropout and a scalar sigmoid output.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from . import tensor as T
from .metrics import f1_at
from .optim import Adam, restore, snapshot, xavier_uniform, zeros, ones
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class GBLSConfig:
    input_dim: int = 0
    hidden_dim: int = 216
    n_heads: int = 8
    n_groups: int | None = None
    dropout: float = 0.1
    l2_lambda: float = 1e-4
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 60
    patience: int = 8

    def __post_init__(self):
        if self.n_groups is None:
            self.n_groups = self.n_heads
        if self.hidden_dim % self.n_groups:
            raise ValueError("hidden_dim must be divisible by n_groups")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def group_dim(self) -> int:
        return self.hidden_dim // self.n_groups

    def to_dict(self) -> dict:
        return asdict(self)


def init_params(config: GBLSConfig, seed: int = 0) -> dict[str, Tensor]:
    if config.input_dim < 1:
        raise ValueError("GBLSConfig.input_dim must be set before initialisation")
    rng = np.random.default_rng(seed)
    H, dg, nh = config.hidden_dim, config.group_dim, config.n_heads
    return {
        "gbls.w_in": xavier_uniform(rng, config.input_dim, H),
        "gbls.b_in": zeros(H),
        "gbls.attn.wq": xavier_uniform(rng, dg, nh * dg),
        "gbls.attn.wk": xavier_uniform(rng, dg, nh * dg),
        "gbls.attn.wv": xavier_uniform(rng, dg, nh * dg),
        "gbls.attn.wo": xavier_uniform(rng, nh * dg, dg),
        "gbls.attn.bo": zeros(dg),
        "gbls.gate.w": xavier_uniform(rng, 2 * H, H),
        "gbls.gate.b": zeros(H),
        "gbls.ln.gain": ones(H),
        "gbls.ln.bias": zeros(H),
        "gbls.out.w": xavier_uniform(rng, H, 1),
        "gbls.out.b": zeros(1),
    }


# biases, gains and layer-norm shifts are excluded from the L2 penalty
WEIGHT_KEYS = ("gbls.w_in", "gbls.attn.wq", "gbls.attn.wk", "gbls.attn.wv", "gbls.attn.wo", "gbls.gate.w", "gbls.out.w")


@dataclass
class GBLSForward:
    logit: Tensor
    prob: Tensor
    hidden: Tensor
    attended: Tensor
    gate: Tensor
    mixed: Tensor


def group_attention(h: Tensor, params: Mapping[str, Tensor], config: GBLSConfig) -> Tensor:
    """Self-attention across the ``n_groups`` group tokens of each hidden vector."""
    B = h.shape[0]
    G, dg, nh = config.n_groups, config.group_dim, config.n_heads
    tokens = h.reshape(B, G, dg)

    def split(w: Tensor) -> Tensor:
        return (tokens @ w).reshape(B, G, nh, dg).transpose(0, 2, 1, 3)

    q, k, v = split(params["gbls.attn.wq"]), split(params["gbls.attn.wk"]), split(params["gbls.attn.wv"])
    weights = T.softmax((q @ k.T) * (1.0 / math.sqrt(dg)))
    ctx = (weights @ v).transpose(0, 2, 1, 3).reshape(B, G, nh * dg)
    out = ctx @ params["gbls.attn.wo"] + params["gbls.attn.bo"]
    return out.reshape(B, G * dg)


def forward(
    x,
    params: Mapping[str, Tensor],
    config: GBLSConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
    gate_override: float | None = None,
) -> GBLSForward:
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise T.ShapeError(f"GBLS expects (batch, {config.input_dim}) input, got {x.shape}")
    h = T.gelu(x @ params["gbls.w_in"] + params["gbls.b_in"])
    a = group_attention(h, params, config)
    if gate_override is None:
        g = T.sigmoid(T.concat([h, a], axis=-1) @ params["gbls.gate.w"] + params["gbls.gate.b"])
    else:
        g = Tensor(np.full(h.shape, float(gate_override)))
    mixed = g * a + (1.0 - g) * h
    out = T.layer_norm(mixed, params["gbls.ln.gain"], params["gbls.ln.bias"])
    out = T.dropout(out, config.dropout, rng, training)
    logit = (out @ params["gbls.out.w"] + params["gbls.out.b"]).reshape(x.shape[0])
    return GBLSForward(logit, T.sigmoid(logit), h, a, g, mixed)


def predict_proba(x: np.ndarray, params: Mapping[str, Tensor], config: GBLSConfig, batch_size: int = 512) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = []
    with T.no_grad():
        for start in range(0, len(x), batch_size):
            out.append(forward(x[start : start + batch_size], params, config).prob.data)
    return np.concatenate(out) if out else np.zeros(0)


def predict_with_threshold(prob, theta: float):
    """Label 1 iff ``prob >= theta``."""
    if not 0.0 < theta < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return (np.asarray(prob) >= theta).astype(np.int64)


def l2_penalty(params: Mapping[str, Tensor]) -> Tensor:
    total = None
    for key in WEIGHT_KEYS:
        sq = (params[key] * params[key]).sum()
        total = sq if total is None else total + sq
    return total


def loss_fn(x, y, params, config, training, rng) -> Tensor:
    fw = forward(x, params, config, training=training, rng=rng)
    loss = T.bce_with_logits(fw.logit, y)
    if config.l2_lambda:
        loss = loss + config.l2_lambda * l2_penalty(params)
    return loss


@dataclass
class GBLSHistory:
    rows: list[dict] = field(default_factory=list)
    best_epoch: int = -1

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_f1"]
        lines += [f"{r['epoch']},{r['train_loss']!r},{r['val_loss']!r},{r['val_f1']!r}" for r in self.rows]
        return "\n".join(lines) + "\n"


def _bce(prob: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(prob, 1e-12, 1 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def train(
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    config: GBLSConfig,
    seed: int = 0,
) -> tuple[dict[str, Tensor], GBLSHistory]:
    """Mini-batch Adam on BCE + L2 with early stopping on the validation objective (BCE + L2).

    Returns the parameters from the epoch with the lowest validation loss.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    if len(np.unique(y_train)) < 2:
        raise ValueError("GBLS training set must contain both classes")
    if config.input_dim != x_train.shape[1]:
        raise ValueError(f"config.input_dim={config.input_dim} but features have {x_train.shape[1]} columns")
    rng = np.random.default_rng(seed)
    params = init_params(config, seed)
    opt = Adam(params, lr=config.learning_rate)
    history = GBLSHistory()
    best_loss, best_state, stale = math.inf, snapshot(params), 0
    n = len(x_train)
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            opt.zero_grad()
            loss = loss_fn(x_train[idx], y_train[idx], params, config, True, rng)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            count += len(idx)
        val_prob = predict_proba(x_val, params, config)
        val_loss = _bce(val_prob, np.asarray(y_val, dtype=np.float64))
        if config.l2_lambda:
            # same objective as training, so heavy regularisation is not undone by the best-epoch restore
            with T.no_grad():
                val_loss += config.l2_lambda * l2_penalty(params).item()
        history.rows.append(
            {
                "epoch": epoch,
                "train_loss": total / count,
                "val_loss": val_loss,
                "val_f1": f1_at(val_prob, y_val, 0.5),
            }
        )
        if val_loss < best_loss:
            best_loss, best_state, stale = val_loss, snapshot(params), 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                log.debug("GBLS early stop at epoch %d (best %d)", epoch, history.best_epoch)
                break
    restore(params, best_state)
    return params, history
