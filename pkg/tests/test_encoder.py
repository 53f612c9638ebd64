import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gblsdetect import tensor as T
from gblsdetect.encoder import (
    Encoder,
    EncoderConfig,
    attention_scores,
    disentangled_attention,
    init_params,
    masked_mean_pool,
    relative_buckets,
    se_block,
)
from gblsdetect.gradcheck import grad_check_params
from gblsdetect.tensor import Tensor

CFG = EncoderConfig(vocab_size=20, d_model=8, n_layers=1, n_heads=2, max_len=6, max_relative_distance=2, dropout=0.0)
PRE = "encoder.layer0.attn."


def _params(seed=0):
    return init_params(CFG, seed)


def naive_attention(x, relpos, p, n_heads, k, mask):
    """Literal per-pair score loop, then softmax, value mix, projection, residual and norm."""
    n, d = x.shape
    dh = d // n_heads
    q = x @ p[PRE + "wq"].data + p[PRE + "bq"].data
    kc = x @ p[PRE + "wk"].data + p[PRE + "bk"].data
    v = x @ p[PRE + "wv"].data + p[PRE + "bv"].data
    qr = relpos @ p[PRE + "wq_pos"].data
    kr = relpos @ p[PRE + "wk_pos"].data
    delta = lambda i, j: max(-k, min(k, i - j)) + k
    ctx = np.zeros((n, d))
    for h in range(n_heads):
        s = slice(h * dh, (h + 1) * dh)
        score = np.full((n, n), -np.inf)
        for i in range(n):
            for j in range(n):
                if mask[j]:
                    raw = q[i, s] @ kc[j, s] + q[i, s] @ kr[delta(i, j), s] + kc[j, s] @ qr[delta(j, i), s]
                    score[i, j] = raw / math.sqrt(3 * dh)
        w = np.exp(score - score.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        ctx[:, s] = w @ v[:, s]
    out = ctx @ p[PRE + "wo"].data + p[PRE + "bo"].data + x
    mu = out.mean(-1, keepdims=True)
    var = out.var(-1, keepdims=True)
    return (out - mu) / np.sqrt(var + 1e-5) * p[PRE + "ln.gain"].data + p[PRE + "ln.bias"].data


def test_relative_buckets():
    b = relative_buckets(4, 1)
    assert b.tolist() == [[1, 0, 0, 0], [2, 1, 0, 0], [2, 2, 1, 0], [2, 2, 2, 1]]


@pytest.mark.parametrize("mask", [[1, 1, 1], [1, 1, 0]])
def test_matches_naive_loop(rng, mask):
    p = _params(1)
    x = rng.normal(size=(3, 8))
    relpos = p["encoder.embed.relpos"].data
    got = disentangled_attention(Tensor(x[None]), np.array([mask], bool), Tensor(relpos), p, PRE, 2, 2)
    want = naive_attention(x, relpos, p, 2, 2, mask)
    np.testing.assert_allclose(got.data[0], want, atol=1e-12, rtol=0)


def test_uniform_rows_for_equal_content_and_zero_positions(rng):
    p = _params(2)
    x = np.tile(rng.normal(size=8), (5, 1))[None]
    mask = np.array([[1, 1, 1, 1, 0]], bool)
    _, w = disentangled_attention(Tensor(x), mask, Tensor(np.zeros((5, 8))), p, PRE, 2, 2, return_weights=True)
    np.testing.assert_allclose(w.data[..., :4], 0.25, atol=1e-12)
    assert np.all(w.data[..., 4] == 0.0)


def test_zero_position_tables_give_content_only_scores(rng):
    p = _params(3)
    x = rng.normal(size=(1, 4, 8))
    scores, _ = attention_scores(Tensor(x), Tensor(np.zeros((5, 8))), p, PRE, 2, 2)
    q = (x[0] @ p[PRE + "wq"].data).reshape(4, 2, 4).transpose(1, 0, 2)
    kk = (x[0] @ p[PRE + "wk"].data).reshape(4, 2, 4).transpose(1, 0, 2)
    np.testing.assert_allclose(scores.data[0], q @ kk.transpose(0, 2, 1) / math.sqrt(12), atol=1e-12)


def test_single_visible_token_returns_its_value(rng):
    p = _params(4)
    x = rng.normal(size=(1, 4, 8))
    mask = np.array([[1, 0, 0, 0]], bool)
    out = disentangled_attention(Tensor(x), mask, p["encoder.embed.relpos"], p, PRE, 2, 2, residual=False, norm=False)
    v0 = x[0, 0] @ p[PRE + "wv"].data + p[PRE + "bv"].data
    want = v0 @ p[PRE + "wo"].data + p[PRE + "bo"].data
    np.testing.assert_allclose(out.data[0], np.tile(want, (4, 1)), atol=1e-12)


@settings(max_examples=20)
@given(st.integers(1, 6), st.integers(0, 2**31))
def test_attention_rows_are_distributions(n_visible, seed):
    r = np.random.default_rng(seed)
    p = _params(seed % 7)
    mask = np.zeros((1, 6), bool)
    mask[0, :n_visible] = True
    _, w = disentangled_attention(Tensor(r.normal(size=(1, 6, 8))), mask, p["encoder.embed.relpos"], p, PRE, 2, 2, return_weights=True)
    np.testing.assert_allclose(w.data.sum(-1), 1.0, atol=1e-9)
    assert np.all(w.data[..., n_visible:] == 0.0)


def test_se_zero_weights_halve():
    x = Tensor(np.array([[1.0, -2.0, 3.0, 0.5]]))
    out = se_block(x, Tensor(np.zeros((4, 2))), Tensor(np.zeros((2, 4))))
    np.testing.assert_allclose(out.data, 0.5 * x.data, atol=1e-15)


def test_se_hand_case():
    x = np.array([[1.0, -1.0, 2.0, 0.0]])
    w1 = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, -1.0], [0.5, 0.5]])
    w2 = np.array([[1.0, -1.0, 0.0, 2.0], [0.5, 0.5, -1.0, 0.0]])
    # relu(x W1) = relu([3, -3]) = [3, 0]; s = sigmoid([3, -3, 0, 6])
    s = 1 / (1 + np.exp(-np.array([3.0, -3.0, 0.0, 6.0])))
    out = se_block(Tensor(x), Tensor(w1), Tensor(w2))
    np.testing.assert_allclose(out.data, x * s, atol=1e-12)


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.integers(0, 1000))
def test_se_shrinks_without_sign_change(vals, seed):
    r = np.random.default_rng(seed)
    x = np.array([vals])
    out, scale = se_block(Tensor(x), Tensor(r.normal(size=(4, 2))), Tensor(r.normal(size=(2, 4))), return_scale=True)
    assert np.all((scale.data > 0) & (scale.data < 1))
    assert np.all(np.abs(out.data) <= np.abs(x))
    assert np.all(np.sign(out.data) * np.sign(x) >= 0)


def test_masked_mean_pool():
    h = Tensor(np.arange(12.0).reshape(1, 3, 4))
    out = masked_mean_pool(h, np.array([[1, 1, 0]], bool))
    np.testing.assert_allclose(out.data, [[2.0, 3.0, 4.0, 5.0]])
    with pytest.raises(ValueError):
        masked_mean_pool(h, np.zeros((1, 3), bool))


def test_output_width_and_config_rules():
    assert EncoderConfig().output_dim == 24
    assert EncoderConfig().reduction_dims == (96, 48, 24)
    with pytest.raises(ValueError):
        EncoderConfig(d_model=10, n_heads=4)


def test_encode_text_shape_and_length_limit(rng):
    enc = Encoder(CFG, seed=0)
    for n in range(1, 7):
        ids = rng.integers(4, 20, size=n)
        assert enc.encode_text(ids, np.ones(n, bool)).shape == (2,)
    with pytest.raises(ValueError, match="max_len"):
        enc.encode_text(np.ones(7, int), np.ones(7, bool))


def test_pad_region_content_is_ignored(rng):
    enc = Encoder(CFG, seed=5)
    mask = np.array([1, 1, 1, 0, 0, 0], bool)
    a = np.array([2, 7, 9, 0, 0, 0])
    b = np.array([2, 7, 9, 13, 5, 11])
    np.testing.assert_allclose(enc.encode_text(a, mask), enc.encode_text(b, mask), atol=1e-12)


def test_eval_mode_deterministic(rng):
    enc = Encoder(CFG, seed=1)
    ids = rng.integers(4, 20, size=(3, 6))
    mask = np.ones((3, 6), bool)
    with T.no_grad():
        a = enc.forward(ids, mask).data
        b = enc.forward(ids, mask).data
    assert np.array_equal(a, b)


def test_encoder_gradient_check(rng):
    enc = Encoder(CFG, seed=2)
    ids = rng.integers(4, 20, size=(4, 5))
    mask = np.ones((4, 5), bool)
    mask[1, 3:] = False
    target = rng.normal(size=(4, 2))

    def loss():
        out = enc.forward(ids, mask, training=True)
        return ((out - Tensor(target)) ** 2).sum()

    params = {k: v for k, v in enc.params.items()}
    for v in params.values():
        v.requires_grad = True
    assert grad_check_params(loss, params, max_coords=4, rng=np.random.default_rng(0)) < 1e-4


def test_embedding_jacobian_two_tokens(rng):
    enc = Encoder(CFG, seed=3)
    emb = Tensor(rng.normal(size=(1, 2, 8)), requires_grad=True)
    mask = np.ones((1, 2), bool)
    w = rng.normal(size=2)
    assert grad_check_params(lambda: (enc.forward_embeddings(emb, mask) * Tensor(w)).sum(), {"emb": emb}) < 1e-4


def test_state_roundtrip():
    a, b = Encoder(CFG, seed=0), Encoder(CFG, seed=9)
    b.load_state(a.state())
    ids = np.array([2, 5, 6, 0, 0, 0])
    mask = ids != 0
    assert np.array_equal(a.encode_text(ids, mask), b.encode_text(ids, mask))
