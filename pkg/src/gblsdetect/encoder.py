"""Toy-scale disentangled-attention encoder with squeeze-and-excitation and a reduction head.

Forward path for a batch of token ids::

    embed -> LN -> n_layers x [disentangled attention + FFN (each residual + LN)]
          -> masked mean pool -> SE recalibration -> (linear, BN, GELU) x 2

Weights are stored ``(in, out)`` and applied as ``x @ W + b``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from . import tensor as T
from .optim import ones, xavier_uniform, zeros
from .tensor import BatchNormState, Tensor


@dataclass
class EncoderConfig:
    vocab_size: int = 512
    d_model: int = 96
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int | None = None
    max_len: int = 32
    max_relative_distance: int = 16
    se_ratio: int = 4
    dropout: float = 0.1
    use_se: bool = True

    def __post_init__(self):
        if self.d_ff is None:
            self.d_ff = 4 * self.d_model
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.d_model % 4 or self.d_model // 4 < 1:
            raise ValueError("d_model must be divisible by 4 for the two halving reduction blocks")
        if self.d_model // self.se_ratio < 1:
            raise ValueError("se_ratio too large for d_model")
        if self.max_len < 2 or self.max_relative_distance < 1:
            raise ValueError("max_len must be >= 2 and max_relative_distance >= 1")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def reduction_dims(self) -> tuple[int, int, int]:
        return (self.d_model, self.d_model // 2, self.d_model // 4)

    @property
    def output_dim(self) -> int:
        return self.d_model // 4

    def to_dict(self) -> dict:
        return asdict(self)


def relative_buckets(n: int, k: int) -> np.ndarray:
    """``bucket[i, j] = clamp(i - j, -k, k) + k``."""
    idx = np.arange(n)
    return np.clip(idx[:, None] - idx[None, :], -k, k) + k


def init_params(config: EncoderConfig, seed: int = 0) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    d, ff = config.d_model, config.d_ff
    k = config.max_relative_distance
    p: dict[str, Tensor] = {
        "encoder.embed.content": xavier_uniform(rng, config.vocab_size, d),
        "encoder.embed.relpos": xavier_uniform(rng, 2 * k + 1, d),
        "encoder.embed.ln.gain": ones(d),
        "encoder.embed.ln.bias": zeros(d),
    }
    for layer in range(config.n_layers):
        pre = f"encoder.layer{layer}."
        for name in ("q", "k", "v", "o"):
            p[pre + f"attn.w{name}"] = xavier_uniform(rng, d, d)
            p[pre + f"attn.b{name}"] = zeros(d)
        p[pre + "attn.wq_pos"] = xavier_uniform(rng, d, d)
        p[pre + "attn.wk_pos"] = xavier_uniform(rng, d, d)
        p[pre + "attn.ln.gain"] = ones(d)
        p[pre + "attn.ln.bias"] = zeros(d)
        p[pre + "ffn.w1"] = xavier_uniform(rng, d, ff)
        p[pre + "ffn.b1"] = zeros(ff)
        p[pre + "ffn.w2"] = xavier_uniform(rng, ff, d)
        p[pre + "ffn.b2"] = zeros(d)
        p[pre + "ffn.ln.gain"] = ones(d)
        p[pre + "ffn.ln.bias"] = zeros(d)
    bottleneck = d // config.se_ratio
    p["encoder.se.w1"] = xavier_uniform(rng, d, bottleneck)
    p["encoder.se.w2"] = xavier_uniform(rng, bottleneck, d)
    dims = config.reduction_dims
    for i in range(2):
        p[f"encoder.reduce{i}.w"] = xavier_uniform(rng, dims[i], dims[i + 1])
        p[f"encoder.reduce{i}.b"] = zeros(dims[i + 1])
        p[f"encoder.reduce{i}.bn.gain"] = ones(dims[i + 1])
        p[f"encoder.reduce{i}.bn.bias"] = zeros(dims[i + 1])
    return p


def _heads(x: Tensor, n_heads: int) -> Tensor:
    """``(..., n, d) -> (..., heads, n, d_head)``"""
    *lead, n, d = x.shape
    x = x.reshape(*lead, n, n_heads, d // n_heads)
    nd = x.ndim
    return x.transpose(*range(nd - 3), nd - 2, nd - 3, nd - 1)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, dh = x.shape
    nd = x.ndim
    x = x.transpose(*range(nd - 3), nd - 2, nd - 3, nd - 1)
    return x.reshape(*lead, n, h * dh)


def attention_scores(
    x: Tensor,
    relpos: Tensor,
    params: Mapping[str, Tensor],
    prefix: str,
    n_heads: int,
    k: int,
) -> tuple[Tensor, Tensor]:
    """Scaled disentangled scores ``(B, heads, n, n)`` and the value heads.

    ``score[i, j] = Qc_i.Kc_j + Qc_i.Kr[d(i,j)] + Kc_j.Qr[d(j,i)]`` scaled by
    ``1/sqrt(3 d_head)``.
    """
    n = x.shape[-2]
    q = _heads(x @ params[prefix + "wq"] + params[prefix + "bq"], n_heads)
    kc = _heads(x @ params[prefix + "wk"] + params[prefix + "bk"], n_heads)
    v = _heads(x @ params[prefix + "wv"] + params[prefix + "bv"], n_heads)
    q_pos = _heads(relpos @ params[prefix + "wq_pos"], n_heads)  # (heads, 2k+1, dh)
    k_pos = _heads(relpos @ params[prefix + "wk_pos"], n_heads)
    buckets = relative_buckets(n, k)
    c2c = q @ kc.T
    c2p = T.gather_last(q @ k_pos.T, buckets)
    # rows indexed by key j, columns by query i; swap afterwards
    p2c = T.gather_last(kc @ q_pos.T, buckets).T
    d_head = q.shape[-1]
    return (c2c + c2p + p2c) * (1.0 / math.sqrt(3.0 * d_head)), v


def disentangled_attention(
    x: Tensor,
    mask: np.ndarray,
    relpos: Tensor,
    params: Mapping[str, Tensor],
    prefix: str,
    n_heads: int,
    k: int,
    *,
    training: bool = False,
    dropout_p: float = 0.0,
    rng: np.random.Generator | None = None,
    residual: bool = True,
    norm: bool = True,
    return_weights: bool = False,
):
    """Multi-head disentangled self-attention over ``x`` of shape ``(B, n, d)``.

    ``mask`` is a boolean ``(B, n)`` array, True on real tokens.  Masked keys
    get zero attention weight.
    """
    mask = np.asarray(mask, dtype=bool)
    scores, v = attention_scores(x, relpos, params, prefix, n_heads, k)
    weights = T.softmax(scores, mask=mask[:, None, None, :])
    ctx = _merge_heads(weights @ v)
    out = ctx @ params[prefix + "wo"] + params[prefix + "bo"]
    out = T.dropout(out, dropout_p, rng, training)
    if residual:
        out = out + x
    if norm:
        out = T.layer_norm(out, params[prefix + "ln.gain"], params[prefix + "ln.bias"])
    return (out, weights) if return_weights else out


def se_block(pooled: Tensor, w1: Tensor, w2: Tensor, return_scale: bool = False):
    """Channel recalibration ``pooled * sigmoid(relu(pooled @ W1) @ W2)``."""
    scale = T.sigmoid(T.relu(pooled @ w1) @ w2)
    out = pooled * scale
    return (out, scale) if return_scale else out


def masked_mean_pool(h: Tensor, mask: np.ndarray) -> Tensor:
    m = np.asarray(mask, dtype=np.float64)
    counts = m.sum(axis=1, keepdims=True)
    if np.any(counts == 0):
        raise ValueError("every sequence needs at least one unmasked token")
    weights = np.broadcast_to((m / counts)[:, :, None], h.shape)
    return (h * Tensor(weights)).sum(axis=1)


class Encoder:
    """Parameters plus batch-norm running statistics for one encoder."""

    def __init__(self, config: EncoderConfig, seed: int = 0, params: dict[str, Tensor] | None = None):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)
        dims = config.reduction_dims
        self.bn = {f"encoder.reduce{i}.bn": BatchNormState.fresh(dims[i + 1]) for i in range(2)}

    # -- pieces ---------------------------------------------------------------
    def embed(self, ids: np.ndarray) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2:
            raise ValueError("ids must be a (batch, length) array")
        if ids.shape[1] > self.config.max_len:
            raise ValueError(f"sequence length {ids.shape[1]} exceeds max_len {self.config.max_len}")
        return T.take_rows(self.params["encoder.embed.content"], ids)

    def contextualize(
        self,
        emb: Tensor,
        mask: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        cfg, p = self.config, self.params
        if emb.shape[-2] > cfg.max_len:
            raise ValueError(f"sequence length {emb.shape[-2]} exceeds max_len {cfg.max_len}")
        h = T.layer_norm(emb, p["encoder.embed.ln.gain"], p["encoder.embed.ln.bias"])
        h = T.dropout(h, cfg.dropout, rng, training)
        relpos = p["encoder.embed.relpos"]
        for layer in range(cfg.n_layers):
            pre = f"encoder.layer{layer}."
            h = disentangled_attention(
                h, mask, relpos, p, pre + "attn.", cfg.n_heads, cfg.max_relative_distance,
                training=training, dropout_p=cfg.dropout, rng=rng,
            )
            f = T.gelu(h @ p[pre + "ffn.w1"] + p[pre + "ffn.b1"]) @ p[pre + "ffn.w2"] + p[pre + "ffn.b2"]
            f = T.dropout(f, cfg.dropout, rng, training)
            h = T.layer_norm(h + f, p[pre + "ffn.ln.gain"], p[pre + "ffn.ln.bias"])
        return h

    def recalibrate(self, pooled: Tensor) -> Tensor:
        if not self.config.use_se:
            return pooled
        return se_block(pooled, self.params["encoder.se.w1"], self.params["encoder.se.w2"])

    def reduce(self, pooled: Tensor, training: bool = False) -> Tensor:
        p = self.params
        h = pooled
        for i in range(2):
            pre = f"encoder.reduce{i}."
            h = h @ p[pre + "w"] + p[pre + "b"]
            h = T.batch_norm(h, p[pre + "bn.gain"], p[pre + "bn.bias"], self.bn[pre + "bn"], training)
            h = T.gelu(h)
        return h

    # -- full path --------------------------------------------------------------
    def forward_embeddings(
        self,
        emb: Tensor,
        mask: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        h = self.contextualize(emb, mask, training, rng)
        pooled = masked_mean_pool(h, mask)
        return self.reduce(self.recalibrate(pooled), training)

    def forward(
        self,
        ids: np.ndarray,
        mask: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Reduced representation ``(B, d_model/4)`` for a batch of encoded texts."""
        return self.forward_embeddings(self.embed(ids), mask, training, rng)

    def encode_text(self, ids: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Eval-mode feature vector ``(d_model/4,)`` for a single encoded example."""
        with T.no_grad():
            out = self.forward(np.asarray(ids)[None, :], np.asarray(mask)[None, :], training=False)
        return out.data[0]

    # -- state -----------------------------------------------------------------
    def state(self) -> dict[str, np.ndarray]:
        out = {k: v.data for k, v in self.params.items()}
        for name, st in self.bn.items():
            out[name + ".running_mean"] = st.running_mean
            out[name + ".running_var"] = st.running_var
        return out

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        for k in self.params:
            if k not in state:
                raise KeyError(f"missing tensor {k}")
            if state[k].shape != self.params[k].shape:
                raise ValueError(f"shape mismatch for {k}: {state[k].shape} vs {self.params[k].shape}")
            self.params[k].data = np.array(state[k])
        for name, st in self.bn.items():
            st.running_mean = np.array(state[name + ".running_mean"])
            st.running_var = np.array(state[name + ".running_var"])

    def copy_bn(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        return {k: (s.running_mean.copy(), s.running_var.copy()) for k, s in self.bn.items()}

    def restore_bn(self, saved: Mapping[str, tuple[np.ndarray, np.ndarray]]) -> None:
        for k, (m, v) in saved.items():
            self.bn[k].running_mean = m.copy()
            self.bn[k].running_var = v.copy()
