"""Feature selection over the fused representation: binned mutual information or L1 logistic."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class SelectorConfig:
    method: str = "mi"  # "mi" | "l1" | "none"
    keep_k: int | None = None  # None -> half the feature dimension
    bins: int = 10
    l1_lambda: float = 0.01
    weight_threshold: float = 1e-4
    max_epochs: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        self.method = self.method.lower()
        if self.method not in ("mi", "l1", "none"):
            raise ValueError(f"unknown selection method {self.method!r}")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if self.keep_k is not None and self.keep_k < 1:
            raise ValueError("keep_k must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SelectionMask:
    indices: np.ndarray
    scores: np.ndarray
    method: str = "none"
    converged: bool = True
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)

    def validate(self, dim: int) -> None:
        idx = self.indices
        if idx.ndim != 1:
            raise ValueError("mask indices must be 1-D")
        if idx.size and (idx.min() < 0 or idx.max() >= dim):
            raise IndexError(f"mask index out of range for dimension {dim}")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("mask indices must be strictly increasing")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "indices": [int(i) for i in self.indices],
            "scores": [float(s) for s in self.scores],
            "converged": self.converged,
        }


def equal_frequency_bins(values, n_bins: int) -> np.ndarray:
    """Equal-frequency bin ids; equal values always share a bin.

    Values are ordered by (value, index); the element at rank ``r`` falls in
    bin ``floor(r * n_bins / n)`` and tied values inherit the bin of their
    first occurrence.
    """
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    order = np.lexsort((np.arange(n), v))
    rank_bins = (np.arange(n) * n_bins) // n
    sorted_vals = v[order]
    first = np.ones(n, dtype=bool)
    first[1:] = sorted_vals[1:] != sorted_vals[:-1]
    group_start = np.maximum.accumulate(np.where(first, np.arange(n), 0))
    bins = np.empty(n, dtype=np.int64)
    bins[order] = rank_bins[group_start]
    return bins


def mutual_information_discrete(x_bins, labels) -> float:
    """MI in bits between two discrete arrays, summed over non-empty joint cells."""
    x = np.asarray(x_bins)
    y = np.asarray(labels)
    n = x.size
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    joint = np.zeros((xi.max() + 1, yi.max() + 1))
    np.add.at(joint, (xi, yi), 1.0)
    pxy = joint / n
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    return float(np.sum(pxy[nz] * np.log2(pxy[nz] / (px @ py)[nz])))


def mutual_information(feature, labels, n_bins: int = 10) -> float:
    y = np.asarray(labels)
    if y.size < 2:
        raise ValueError("mutual information needs at least 2 samples")
    if len(np.unique(y)) < 2:
        raise ValueError("mutual information needs both label classes")
    return mutual_information_discrete(equal_frequency_bins(feature, n_bins), y)


def select_mi(features, labels, keep_k: int, n_bins: int = 10) -> SelectionMask:
    X = np.asarray(features, dtype=np.float64)
    d = X.shape[1]
    if not 1 <= keep_k <= d:
        raise ValueError(f"keep_k={keep_k} outside [1, {d}]")
    scores = np.array([mutual_information(X[:, j], labels, n_bins) for j in range(d)])
    # stable sort on -score keeps the lower index first among ties
    chosen = np.sort(np.argsort(-scores, kind="stable")[:keep_k])
    return SelectionMask(chosen, scores[chosen], method="mi")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def standardize_columns(X: np.ndarray) -> np.ndarray:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X - mu) / sd


def l1_logistic(
    X: np.ndarray, y: np.ndarray, l1_lambda: float, max_epochs: int = 500, tol: float = 1e-6
) -> tuple[np.ndarray, float, bool]:
    """Proximal-gradient (ISTA) fit of mean BCE + lambda * ||w||_1; the intercept is unpenalised.

    Returns ``(w, b, converged)``.
    """
    n, d = X.shape
    y = np.asarray(y, dtype=np.float64)
    lipschitz = 0.25 * (np.linalg.norm(X, 2) ** 2 / n + 1.0)
    step = 1.0 / lipschitz
    w = np.zeros(d)
    base = np.clip(y.mean(), 1e-6, 1 - 1e-6)
    b = float(np.log(base / (1 - base)))
    converged = False
    for _ in range(max_epochs):
        r = _sigmoid(X @ w + b) - y
        gw = X.T @ r / n
        gb = r.mean()
        # optimality residual of the composite objective
        sub = np.where(w != 0, gw + l1_lambda * np.sign(w), np.sign(gw) * np.maximum(np.abs(gw) - l1_lambda, 0.0))
        if np.sqrt(np.sum(sub**2) + gb**2) < tol:
            converged = True
            break
        z = w - step * gw
        w = np.sign(z) * np.maximum(np.abs(z) - step * l1_lambda, 0.0)
        b -= step * gb
    return w, b, converged


def l1_kill_lambda(features, labels) -> float:
    """Smallest lambda at which the all-zero weight vector is optimal."""
    X = standardize_columns(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64)
    return float(np.max(np.abs(X.T @ (y.mean() - y) / len(y))))


def select_l1(features, labels, l1_lambda: float, threshold: float = 1e-4, max_epochs: int = 500, tol: float = 1e-6) -> SelectionMask:
    X = standardize_columns(np.asarray(features, dtype=np.float64))
    w, _, converged = l1_logistic(X, labels, l1_lambda, max_epochs, tol)
    chosen = np.flatnonzero(np.abs(w) > threshold)
    mask = SelectionMask(chosen, np.abs(w[chosen]), method="l1", converged=converged)
    if not converged:
        msg = f"L1 selection did not reach gradient norm {tol} in {max_epochs} epochs"
        mask.warnings.append(msg)
        log.warning(msg)
    return mask


def identity_mask(dim: int) -> SelectionMask:
    return SelectionMask(np.arange(dim), np.zeros(dim), method="none")


def fit_selector(features, labels, config: SelectorConfig) -> SelectionMask:
    X = np.asarray(features, dtype=np.float64)
    d = X.shape[1]
    if config.method == "none":
        return identity_mask(d)
    if config.method == "mi":
        k = config.keep_k if config.keep_k is not None else max(1, d // 2)
        return select_mi(X, labels, min(k, d), config.bins)
    mask = select_l1(X, labels, config.l1_lambda, config.weight_threshold, config.max_epochs, config.tol)
    if mask.indices.size == 0:
        # an empty selection would leave the classifier without input
        best = int(np.argmax(np.abs(standardize_columns(X).T @ (np.asarray(labels) - np.mean(labels)))))
        mask.warnings.append("L1 retained no features; kept the single most correlated one")
        mask.indices, mask.scores = np.array([best]), np.array([0.0])
    return mask


def apply_mask(features, mask: SelectionMask) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    mask.validate(X.shape[1])
    return X[:, mask.indices]
