"""Classification metrics, F1-optimal thresholds and generalized-mean bias scores."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

log = logging.getLogger(__name__)

THRESHOLD_GRID = np.round(np.arange(1, 100) * 0.01, 2)
GMB_POWER = -5.0


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float | None
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BiasReport:
    subgroup_auc: dict[str, float]
    bpsn_auc: dict[str, float]
    bnsp_auc: dict[str, float]
    gmb_sub: float
    gmb_bpsn: float
    gmb_bnsp: float
    power: float
    excluded: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float | None:
    """Mann-Whitney AUC with midranks for ties; ``None`` when a class is missing."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s, method="average")
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion(prob, labels, theta: float) -> tuple[int, int, int, int]:
    pred = np.asarray(prob) >= theta
    y = np.asarray(labels).astype(bool)
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    tn = int(np.sum(~pred & ~y))
    fn = int(np.sum(~pred & y))
    return tp, fp, tn, fn


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def f1_at(prob, labels, theta: float) -> float:
    tp, fp, _, fn = confusion(prob, labels, theta)
    return _prf(tp, fp, fn)[2]


def compute_metrics(prob, labels, theta: float = 0.5) -> MetricsReport:
    prob = np.asarray(prob, dtype=np.float64)
    if prob.size == 0:
        raise ValueError("compute_metrics needs at least one example")
    tp, fp, tn, fn = confusion(prob, labels, theta)
    precision, recall, f1 = _prf(tp, fp, fn)
    return MetricsReport(
        accuracy=(tp + tn) / prob.size,
        precision=precision,
        recall=recall,
        f1=f1,
        roc_auc=roc_auc(prob, labels),
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        threshold=float(theta),
    )


def select_threshold(prob, labels, grid: Iterable[float] = THRESHOLD_GRID) -> float:
    """F1-maximising threshold; ties go to the value nearest 0.5, then the smaller one."""
    y = np.asarray(labels)
    if len(np.unique(y)) < 2:
        raise ValueError("threshold selection needs both classes in the validation labels")
    best_key, best = None, 0.5
    for theta in grid:
        key = (-f1_at(prob, y, theta), abs(round(theta - 0.5, 10)), theta)
        if best_key is None or key < best_key:
            best_key, best = key, float(theta)
    return best


def power_mean(values: Sequence[float], p: float) -> float:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("power mean of no values")
    if p == 0:
        return float(np.exp(np.mean(np.log(v))))
    if p < 0 and np.any(v == 0):
        return 0.0
    # clamp guards against last-ulp drift outside [min, max]
    return float(np.clip(np.mean(v**p) ** (1.0 / p), v.min(), v.max()))


def compute_gmb(prob, labels, subgroups: Sequence[Iterable[str]], p: float = GMB_POWER) -> BiasReport:
    """Subgroup, BPSN and BNSP AUCs per identity tag, combined by a power mean."""
    prob = np.asarray(prob, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    tags = [frozenset(s) for s in subgroups]
    if len(tags) != len(prob):
        raise ValueError("subgroups must align with probabilities")
    names = sorted(set().union(*tags)) if tags else []
    sub, bpsn, bnsp = {}, {}, {}
    excluded = []
    for name in names:
        member = np.array([name in t for t in tags])
        settings = {
            "sub": member,
            "bpsn": (~member & y) | (member & ~y),
            "bnsp": (~member & ~y) | (member & y),
        }
        aucs = {k: roc_auc(prob[m], y[m]) for k, m in settings.items()}
        if any(a is None for a in aucs.values()):
            excluded.append(name)
            warnings.warn(f"subgroup {name!r} has an undefined AUC and is excluded from GMB", stacklevel=2)
            continue
        sub[name], bpsn[name], bnsp[name] = aucs["sub"], aucs["bpsn"], aucs["bnsp"]
    if not sub:
        raise ValueError("no subgroup has a defined AUC in all three settings")
    return BiasReport(
        subgroup_auc=sub,
        bpsn_auc=bpsn,
        bnsp_auc=bnsp,
        gmb_sub=power_mean(list(sub.values()), p),
        gmb_bpsn=power_mean(list(bpsn.values()), p),
        gmb_bnsp=power_mean(list(bnsp.values()), p),
        power=p,
        excluded=excluded,
    )
