"""Explanations: integrated gradients, LIME surrogates, token-category tables and calibration."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Callable, Mapping, Sequence

import numpy as np

from .tensor import Tensor


# ---------------------------------------------------------------------------
# integrated gradients
# ---------------------------------------------------------------------------


@dataclass
class AttributionReport:
    tokens: list[str]
    scores: list[float]
    completeness_gap: float
    output: float
    baseline_output: float
    steps: int
    baseline: str = "zero-embedding"

    @property
    def total(self) -> float:
        return float(sum(self.scores))

    def to_dict(self) -> dict:
        return asdict(self)


def integrated_gradients(
    forward: Callable[[Tensor], Tensor],
    x: np.ndarray,
    baseline: np.ndarray | None = None,
    steps: int = 512,
    batch_size: int = 128,
) -> tuple[np.ndarray, float, float]:
    """Midpoint-rule integrated gradients.

    ``forward`` maps a batch ``(B, *x.shape)`` to ``(B,)`` outputs.  Returns
    the per-coordinate attribution (same shape as ``x``), ``F(x)`` and
    ``F(baseline)``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    x0 = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    if x0.shape != x.shape:
        raise ValueError("baseline must have the same shape as the input")
    delta = x - x0
    alphas = (np.arange(1, steps + 1) - 0.5) / steps
    grad_sum = np.zeros_like(x)
    for s in range(0, steps, batch_size):
        a = alphas[s : s + batch_size]
        path = Tensor(x0[None] + a.reshape((-1,) + (1,) * x.ndim) * delta[None], requires_grad=True)
        out = forward(path)
        out.sum().backward()
        if path.grad is None:
            continue
        if not np.all(np.isfinite(path.grad)):
            raise FloatingPointError("non-finite gradient along the integration path")
        grad_sum += path.grad.sum(axis=0)
    ends = forward(Tensor(np.stack([x, x0]))).data
    return delta * grad_sum / steps, float(ends[0]), float(ends[1])


def token_attributions(
    forward: Callable[[Tensor], Tensor],
    embeddings: np.ndarray,
    tokens: Sequence[str],
    steps: int = 512,
    baseline: np.ndarray | None = None,
    baseline_name: str = "zero-embedding",
) -> AttributionReport:
    """IG over an ``(n_tokens, d)`` embedding matrix; token score = sum over its dims."""
    attr, fx, f0 = integrated_gradients(forward, embeddings, baseline, steps)
    scores = attr.sum(axis=-1)
    gap = abs(float(attr.sum()) - (fx - f0))
    return AttributionReport(list(tokens), [float(s) for s in scores], gap, fx, f0, steps, baseline_name)


# ---------------------------------------------------------------------------
# category table
# ---------------------------------------------------------------------------

FREQUENCY_BUCKETS = ("Low", "Medium", "High", "Very High")


def default_categories() -> dict[str, list[str]]:
    text = resources.files("gblsdetect").joinpath("data/categories.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass
class CategoryRow:
    category: str
    phrase: str
    avg_attribution: float
    count: int
    frequency: str


def _find(tokens: Sequence[str], phrase: Sequence[str]) -> list[int]:
    k = len(phrase)
    return [i for i in range(len(tokens) - k + 1) if list(tokens[i : i + k]) == list(phrase)]


def aggregate_attributions(
    reports: Sequence[AttributionReport],
    categories: Mapping[str, Sequence[str]] | None = None,
) -> list[CategoryRow]:
    """Average attribution of each category phrase across reports.

    Multi-token phrases score the sum of their tokens.  Frequency buckets are
    the quartiles of occurrence counts among the phrases found.
    """
    if not reports:
        raise ValueError("need at least one attributed text")
    categories = categories if categories is not None else default_categories()
    sums: dict[tuple[str, str], float] = defaultdict(float)
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for rep in reports:
        toks = [t.lower() for t in rep.tokens]
        for cat, phrases in categories.items():
            for phrase in phrases:
                words = phrase.lower().split()
                for i in _find(toks, words):
                    sums[(cat, phrase)] += float(sum(rep.scores[i : i + len(words)]))
                    counts[(cat, phrase)] += 1
    if not counts:
        return []
    freq = np.array(list(counts.values()), dtype=np.float64)
    q1, q2, q3 = np.quantile(freq, [0.25, 0.5, 0.75])
    rows = []
    for cat, phrases in categories.items():
        for phrase in phrases:
            key = (cat, phrase)
            if key not in counts:
                continue
            c = counts[key]
            bucket = FREQUENCY_BUCKETS[int(c > q1) + int(c > q2) + int(c > q3)]
            rows.append(CategoryRow(cat, phrase, sums[key] / c, c, bucket))
    return rows


def category_table_csv(rows: Sequence[CategoryRow]) -> str:
    lines = ["category,phrase,avg_attribution,count,frequency"]
    lines += [f"{r.category},{r.phrase},{r.avg_attribution:.6f},{r.count},{r.frequency}" for r in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# LIME
# ---------------------------------------------------------------------------


@dataclass
class LimeExplanation:
    tokens: list[str]
    weights: list[float]
    intercept: float
    r2: float
    n_samples: int
    kernel_width: float
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def lime_masks(n_tokens: int, n_samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    masks = rng.random((n_samples, n_tokens)) < 0.5
    masks[0] = True
    return masks


def weighted_ridge(Z: np.ndarray, y: np.ndarray, w: np.ndarray, ridge: float) -> tuple[np.ndarray, float, float]:
    """Weighted ridge regression with an unpenalised intercept; returns (coef, intercept, weighted R^2).

    Weights enter as raw multiplicities, so a duplicated sample acts exactly
    like one sample of twice the weight.
    """
    w = np.asarray(w, dtype=np.float64)
    total = w.sum()
    zbar = (w @ Z) / total
    ybar = float(w @ y) / total
    Zc = Z - zbar
    yc = y - ybar
    A = Zc.T @ (Zc * w[:, None]) + ridge * np.eye(Z.shape[1])
    coef = np.linalg.solve(A, Zc.T @ (w * yc))
    intercept = ybar - float(zbar @ coef)
    resid = y - (Z @ coef + intercept)
    ss_tot = float(w @ (yc * yc))
    ss_res = float(w @ (resid * resid))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else -math.inf
    return coef, intercept, min(r2, 1.0)


def lime_explain(
    predict: Callable[[np.ndarray], np.ndarray],
    tokens: Sequence[str],
    n_samples: int = 1000,
    kernel_width: float = 0.25,
    seed: int = 0,
    ridge: float = 1e-3,
) -> LimeExplanation:
    """Local linear surrogate over token-presence masks.

    ``predict`` maps a boolean ``(n_samples, n_tokens)`` mask matrix (True =
    token kept, False = replaced by PAD) to model probabilities.
    """
    n_tokens = len(tokens)
    if n_tokens < 1:
        raise ValueError("LIME needs at least one token")
    if n_samples < 10:
        raise ValueError("LIME needs at least 10 samples")
    masks = lime_masks(n_tokens, n_samples, seed)
    Z = masks.astype(np.float64)
    if np.all(Z == Z[0]):
        raise ValueError("degenerate perturbation design: all masks identical")
    y = np.asarray(predict(masks), dtype=np.float64)
    dist = 1.0 - Z.mean(axis=1)
    kernel = np.exp(-(dist**2) / kernel_width**2)
    coef, intercept, r2 = weighted_ridge(Z, y, kernel, ridge)
    return LimeExplanation(list(tokens), [float(c) for c in coef], intercept, r2, n_samples, kernel_width, seed)


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------


@dataclass
class CalibrationBin:
    lower: float
    upper: float
    count: int
    confidence: float
    accuracy: float


@dataclass
class CalibrationReport:
    bins: list[CalibrationBin]
    ece: float
    n_bins: int
    n: int
    confidences: list[float] = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        lines = ["bin,lower,upper,count,confidence,accuracy"]
        for i, b in enumerate(self.bins):
            lines.append(f"{i},{b.lower:.4f},{b.upper:.4f},{b.count},{b.confidence:.6f},{b.accuracy:.6f}")
        return "\n".join(lines) + "\n"

    def histogram(self, n_bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
        return np.histogram(np.asarray(self.confidences), bins=n_bins, range=(0.0, 1.0))


def bin_index(values: np.ndarray, n_bins: int) -> np.ndarray:
    """Equal-width, right-inclusive bins on [0, 1]; 0 falls in the first bin."""
    idx = np.ceil(np.asarray(values) * n_bins).astype(np.int64) - 1
    return np.clip(idx, 0, n_bins - 1)


def calibration(prob, labels, n_bins: int = 10) -> CalibrationReport:
    """Top-label reliability: confidence ``max(p, 1-p)`` against correctness of the 0.5-threshold decision."""
    p = np.asarray(prob, dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    n = p.size
    if n_bins < 1 or n < n_bins:
        raise ValueError(f"need at least n_bins={n_bins} predictions, got {n}")
    pred = (p >= 0.5).astype(np.int64)
    conf = np.where(pred == 1, p, 1.0 - p)
    correct = (pred == y).astype(np.float64)
    idx = bin_index(conf, n_bins)
    bins = []
    ece = 0.0
    for b in range(n_bins):
        sel = idx == b
        c = int(sel.sum())
        mc = float(conf[sel].mean()) if c else 0.0
        acc = float(correct[sel].mean()) if c else 0.0
        bins.append(CalibrationBin(b / n_bins, (b + 1) / n_bins, c, mc, acc))
        if c:
            ece += c / n * abs(mc - acc)
    return CalibrationReport(bins, float(ece), n_bins, n, [float(v) for v in conf])


# ---------------------------------------------------------------------------
# detector-facing helpers
# ---------------------------------------------------------------------------


def text_seed(seed: int, index: int) -> int:
    """Per-text seed so explanations do not depend on batch composition."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _visible_tokens(detector, text: str) -> list[str]:
    from .train import cased_tokens

    return cased_tokens(text)[: detector.encoder.config.max_len - 1]


IG_BASELINES = ("pad", "zero")


def explain_ig(detector, text: str, steps: int = 512, baseline: str = "pad") -> AttributionReport:
    """IG for one text; scores cover ``[CLS]`` plus every visible token.

    The default baseline puts the PAD embedding at every position (attention
    mask unchanged).  ``"zero"`` uses all-zero embeddings, where the
    scale-invariant layer norms make the path nearly discontinuous and the
    recorded completeness gap is correspondingly large.
    """
    from .text import CLS, PAD, RESERVED
    from .train import sentiment_features

    if baseline not in IG_BASELINES:
        raise ValueError(f"unknown IG baseline {baseline!r}")
    toks = _visible_tokens(detector, text)
    if not toks:
        raise ValueError("cannot explain an empty text")
    ids, mask = detector.encode_tokens([toks])
    n = int(mask[0].sum())
    ids, mask = ids[:, :n], mask[:, :n]
    emb = detector.encoder.embed(ids).data[0]
    if baseline == "pad":
        x0 = detector.encoder.embed(np.full_like(ids, PAD)).data[0]
    else:
        x0 = np.zeros_like(emb)
    sent = sentiment_features([toks], detector.lexicon)

    def forward(batch: Tensor) -> Tensor:
        return detector.prob_from_embeddings(batch, np.repeat(mask, batch.shape[0], axis=0), sent)

    tokens = [RESERVED[CLS]] + [t.lower() for t in toks]
    return token_attributions(forward, emb, tokens, steps, x0, f"{baseline}-embedding")


def explain_lime(
    detector, text: str, n_samples: int = 1000, kernel_width: float = 0.25, seed: int = 0
) -> LimeExplanation:
    """LIME over the visible tokens; dropped tokens become PAD and are masked out of attention."""
    from .text import PAD
    from .train import sentiment_features

    toks = _visible_tokens(detector, text)
    if not toks:
        raise ValueError("cannot explain an empty text")
    ids, _ = detector.encode_tokens([toks])

    def predict(masks: np.ndarray) -> np.ndarray:
        keep = np.concatenate([np.ones((len(masks), 1), dtype=bool), masks], axis=1)
        k = keep.shape[1]
        batch_ids = np.where(keep, ids[:, :k], PAD)
        sent = sentiment_features([[t for t, m in zip(toks, row) if m] for row in masks], detector.lexicon)
        return detector.proba_from_arrays(batch_ids, keep, sent)

    return lime_explain(predict, toks, n_samples, kernel_width, seed)
