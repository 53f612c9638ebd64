import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gblsdetect.metrics import (
    THRESHOLD_GRID,
    compute_gmb,
    compute_metrics,
    f1_at,
    power_mean,
    roc_auc,
    select_threshold,
)


def pair_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


@settings(max_examples=60)
@given(st.integers(2, 200), st.integers(0, 2**31), st.integers(2, 12))
def test_auc_matches_pair_count(n, seed, levels):
    r = np.random.default_rng(seed)
    y = r.integers(0, 2, size=n)
    y[0], y[1] = 0, 1
    s = r.integers(0, levels, size=n) / levels  # coarse grid forces ties
    assert roc_auc(s, y) == pair_auc(s, y)


def test_auc_edge_cases():
    assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.5, 0.5], [0, 1]) == 0.5
    assert roc_auc([0.1, 0.2], [1, 1]) is None


def test_metrics_consistency():
    m = compute_metrics([0.9, 0.8, 0.7, 0.2], [1, 0, 1, 1], 0.5)
    assert (m.tp, m.fp, m.tn, m.fn) == (2, 1, 0, 1)
    assert m.accuracy == 0.5 and m.n == 4
    assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall), abs=1e-12)
    half = compute_metrics([0.9, 0.9], [1, 0], 0.5)
    assert half.precision == 0.5 and half.recall == 1.0 and half.f1 == pytest.approx(2 / 3, abs=1e-12)
    single = compute_metrics([0.2, 0.3], [0, 0])
    assert single.roc_auc is None and single.f1 == 0.0
    with pytest.raises(ValueError):
        compute_metrics([], [])


@settings(max_examples=40)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=30))
def test_metric_identities(pairs):
    p = [a for a, _ in pairs]
    y = [b for _, b in pairs]
    m = compute_metrics(p, y, 0.5)
    assert m.n == len(p)
    assert m.accuracy == (m.tp + m.tn) / m.n
    if m.precision + m.recall:
        assert abs(m.f1 - 2 * m.precision * m.recall / (m.precision + m.recall)) < 1e-12
    if m.roc_auc is not None:
        assert 0 <= m.roc_auc <= 1


def brute_threshold(p, y):
    scored = [(f1_at(p, y, t), t) for t in THRESHOLD_GRID]
    best = max(s for s, _ in scored)
    cands = [t for s, t in scored if s == best]
    return min(cands, key=lambda t: (abs(round(t - 0.5, 10)), t))


def test_threshold_examples():
    assert select_threshold([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 0.5
    assert select_threshold([0.3] * 4, [0, 1, 0, 1]) == 0.3  # every theta <= 0.3 ties; nearest 0.5 wins
    with pytest.raises(ValueError):
        select_threshold([0.2, 0.4], [1, 1])


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=25))
def test_threshold_matches_brute_force(pairs):
    p = [a for a, _ in pairs]
    y = [b for _, b in pairs]
    if len(set(y)) < 2:
        return
    assert select_threshold(p, y) == brute_threshold(p, y)


def test_power_mean_examples():
    assert power_mean([0.8, 0.8, 0.8], -5) == pytest.approx(0.8, abs=1e-15)
    assert power_mean([1.0, 0.5], -5) == pytest.approx(16.5 ** -0.2, abs=1e-12)
    assert abs(power_mean([1.0, 0.5], -5) - 0.5708) < 1e-4


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=10), st.sampled_from([-5.0, -2.0, -1.0, 0.0, 1.0, 2.0]))
def test_power_mean_bracketing(vals, p):
    m = power_mean(vals, p)
    assert min(vals) <= m <= max(vals)
    if p < 1:
        assert m <= np.mean(vals) + 1e-12


def _bias_fixture(seed):
    r = np.random.default_rng(seed)
    n = 120
    y = r.integers(0, 2, size=n)
    p = np.clip(0.5 * y + 0.5 * r.random(n), 0, 1)
    tags = [frozenset(t for t in ("a", "b", "c") if r.random() < 0.4) for _ in range(n)]
    return p, y, tags


def test_gmb_bracketing_and_sets():
    p, y, tags = _bias_fixture(0)
    b = compute_gmb(p, y, tags)
    for gmb, aucs in ((b.gmb_sub, b.subgroup_auc), (b.gmb_bpsn, b.bpsn_auc), (b.gmb_bnsp, b.bnsp_auc)):
        assert min(aucs.values()) <= gmb <= max(aucs.values())
    member = np.array(["a" in t for t in tags])
    y_b = y.astype(bool)
    bpsn = (~member & y_b) | (member & ~y_b)
    assert b.bpsn_auc["a"] == roc_auc(p[bpsn], y[bpsn])
    assert b.power == -5.0


def test_gmb_excludes_undefined_and_errors():
    # "b" has only positives, so its subgroup AUC is undefined
    p = np.array([0.9, 0.1, 0.8, 0.7, 0.3])
    y = np.array([1, 0, 1, 1, 0])
    tags = [frozenset({"a"}), frozenset({"a"}), frozenset({"b"}), frozenset({"b"}), frozenset()]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        b = compute_gmb(p, y, tags)
    assert b.excluded == ["b"] and list(b.subgroup_auc) == ["a"]
    assert caught
    with pytest.raises(ValueError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        compute_gmb(p, y, [frozenset()] * 2 + [frozenset({"b"})] * 2 + [frozenset()])
