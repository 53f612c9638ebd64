import numpy as np
import pytest
from hypothesis import given, strategies as st

from gblsdetect.select import (
    SelectionMask,
    SelectorConfig,
    apply_mask,
    equal_frequency_bins,
    fit_selector,
    identity_mask,
    l1_kill_lambda,
    mutual_information,
    mutual_information_discrete,
    select_l1,
    select_mi,
)


def brute_mi(x, y):
    n = len(x)
    total = 0.0
    for a in set(x):
        for b in set(y):
            pab = sum(1 for i in range(n) if x[i] == a and y[i] == b) / n
            if pab > 0:
                pa = sum(1 for v in x if v == a) / n
                pb = sum(1 for v in y if v == b) / n
                total += pab * np.log2(pab / (pa * pb))
    return total


def test_label_copy_is_one_bit():
    y = np.array([0, 1] * 50)
    assert mutual_information(y.astype(float), y, 2) == pytest.approx(1.0, abs=1e-12)


def test_independent_feature_fixture():
    r = np.random.default_rng(0)
    y = np.array([0, 1] * 500)
    assert mutual_information(r.permutation(1000).astype(float), y) < 0.05


def test_constant_feature():
    assert mutual_information(np.ones(10), np.array([0, 1] * 5)) == 0.0


def test_mi_input_errors():
    with pytest.raises(ValueError):
        mutual_information(np.ones(4), np.zeros(4))
    with pytest.raises(ValueError):
        mutual_information(np.ones(1), np.zeros(1))


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 1)), min_size=2, max_size=40))
def test_matches_brute_force(pairs):
    x = [a for a, _ in pairs]
    y = [b for _, b in pairs]
    got = mutual_information_discrete(x, y)
    assert got >= -1e-12
    assert abs(got - brute_mi(x, y)) < 1e-12
    # relabelling the bins changes nothing
    assert abs(mutual_information_discrete([7 - a for a in x], y) - got) < 1e-12


def test_equal_frequency_bins_ties_share_bin():
    b = equal_frequency_bins([3.0, 1.0, 1.0, 2.0], 2)
    assert b[1] == b[2] == 0 and b[0] == 1
    assert equal_frequency_bins(np.arange(10.0), 5).tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]


@given(st.integers(0, 10_000))
def test_select_mi_monotone_invariant(seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(60, 4))
    y = (X[:, 2] + 0.5 * r.normal(size=60) > 0).astype(int)
    if y.min() == y.max():
        return
    a = select_mi(X, y, 2)
    Z = X.copy()
    Z[:, 1] = np.exp(Z[:, 1])
    Z[:, 2] = 3 * Z[:, 2] + 1
    b = select_mi(Z, y, 2)
    assert a.indices.tolist() == b.indices.tolist()
    np.testing.assert_array_equal(a.scores, b.scores)


def test_select_mi_examples(rng):
    y = np.array([0, 1] * 30)
    X = np.column_stack([y, rng.normal(size=60), rng.normal(size=60)]).astype(float)
    assert np.argmax(select_mi(X, y, 3).scores) == 0
    assert select_mi(X, y, 1).indices.tolist() == [0]
    assert select_mi(X, y, 3).indices.tolist() == [0, 1, 2]
    dup = np.column_stack([rng.normal(size=60), y, y]).astype(float)
    assert select_mi(dup, y, 1).indices.tolist() == [1]
    with pytest.raises(ValueError):
        select_mi(X, y, 4)


def test_l1_kill_lambda(rng):
    X = rng.normal(size=(80, 5))
    y = (X[:, 0] > 0).astype(int)
    lam = l1_kill_lambda(X, y)
    assert select_l1(X, y, lam * 1.0001).indices.size == 0
    assert select_l1(X, y, lam * 0.5).indices.size > 0


def test_l1_zero_lambda_symmetric_fixture():
    base = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
    X = np.tile(base, (5, 1))
    y = (X[:, 0] > 0).astype(int)
    mask = select_l1(X, y, 0.0)
    assert 0 in mask.indices.tolist() and 1 not in mask.indices.tolist()
    assert not mask.converged and mask.warnings  # separable data never reaches the tolerance


def test_l1_duplicate_columns(rng):
    x = rng.normal(size=100)
    y = (x > 0).astype(int)
    X = np.column_stack([x, x, rng.normal(size=100)])
    assert {0, 1} & set(select_l1(X, y, 0.01).indices.tolist())


def test_l1_path_monotone(rng):
    X = rng.normal(size=(120, 6))
    y = (X[:, 0] + 0.5 * X[:, 1] + 0.3 * rng.normal(size=120) > 0).astype(int)
    sizes = [select_l1(X, y, lam, max_epochs=2000).indices.size for lam in (0.001, 0.01, 0.05, 0.1, 0.2, 0.5)]
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))


def test_apply_mask(rng):
    X = rng.normal(size=(5, 3))
    assert np.array_equal(apply_mask(X, identity_mask(3)), X)
    assert apply_mask(X, SelectionMask([1], [0.0])).shape == (5, 1)
    with pytest.raises(ValueError):
        apply_mask(X, SelectionMask([2, 0], [0.0, 0.0]))
    with pytest.raises(IndexError):
        apply_mask(X, SelectionMask([3], [0.0]))


def test_fit_selector_dispatch(rng):
    X = rng.normal(size=(40, 6))
    y = (X[:, 0] > 0).astype(int)
    assert fit_selector(X, y, SelectorConfig(method="none")).indices.tolist() == list(range(6))
    assert fit_selector(X, y, SelectorConfig(method="mi")).indices.size == 3
    huge = fit_selector(X, y, SelectorConfig(method="l1", l1_lambda=10.0))
    assert huge.indices.tolist() == [0] and huge.warnings
    with pytest.raises(ValueError):
        SelectorConfig(method="pca")
