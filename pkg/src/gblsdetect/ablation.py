"""Component ablation: SE block, sentiment fusion and feature-selection method."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

from .encoder import EncoderConfig
from .select import SelectorConfig
from .sentiment import SentimentLexicon
from .text import DatasetSplit
from .train import StageError, TrainConfig, run_pipeline

log = logging.getLogger(__name__)

METRICS = ("accuracy", "precision", "recall", "f1", "roc_auc")


@dataclass
class AblationRow:
    index: int
    name: str
    kind: str  # "config" | "delta" | "selector"
    values: dict[str, float | None] = field(default_factory=dict)
    status: str = "ok"

    def csv_line(self) -> str:
        cells = [str(self.index), self.name, self.kind]
        # repr keeps every bit, so deltas re-read from the CSV still equal row differences
        cells += ["" if self.values.get(m) is None else repr(float(self.values[m])) for m in METRICS]
        cells.append(self.status)
        return ",".join(cells)


@dataclass
class AblationReport:
    rows: list[AblationRow]

    def to_csv(self) -> str:
        header = "row,configuration,kind," + ",".join(METRICS) + ",status"
        return "\n".join([header] + [r.csv_line() for r in self.rows]) + "\n"

    def row(self, name: str) -> AblationRow:
        return next(r for r in self.rows if r.name == name)

    def to_dict(self) -> dict:
        return {"rows": [{"row": r.index, "configuration": r.name, "kind": r.kind, **r.values, "status": r.status} for r in self.rows]}


# (name, use_se, use_sentiment, selector method)
CONFIGS = (
    ("baseline", False, False, "none"),
    ("+SE", True, False, "none"),
    ("+SE+Sentiment", True, True, "none"),
    ("+SE+Sentiment+FS(MI)", True, True, "mi"),
)
DELTAS = (
    ("SE contribution", "+SE", "baseline"),
    ("Sentiment contribution", "+SE+Sentiment", "+SE"),
    ("FS contribution", "+SE+Sentiment+FS(MI)", "+SE+Sentiment"),
)
SELECTORS = (
    ("FS: MI", "+SE+Sentiment+FS(MI)"),
    ("FS: L1", None),
    ("FS: none", "+SE+Sentiment"),
)


def _metric_values(result) -> dict[str, float | None]:
    m = result.metrics
    return {"accuracy": m.accuracy, "precision": m.precision, "recall": m.recall, "f1": m.f1, "roc_auc": m.roc_auc}


def _run(split, enc_cfg, train_cfg, lexicon, lexicon_path, cache) -> tuple[dict, str]:
    try:
        res = run_pipeline(split, enc_cfg, train_cfg, lexicon=lexicon, lexicon_path=lexicon_path, stage1_cache=cache)
        return _metric_values(res), "ok"
    except StageError as exc:
        log.error("ablation row failed: %s", exc)
        return {}, f"failed [{exc.stage}]"


def run_ablation(
    split: DatasetSplit,
    encoder_config: EncoderConfig,
    train_config: TrainConfig,
    lexicon: SentimentLexicon | None = None,
    lexicon_path: str | None = None,
    stage1_cache: dict | None = None,
) -> AblationReport:
    """All rows share one seed; runs that differ only after stage 1 reuse its encoder."""
    cache: dict = {} if stage1_cache is None else stage1_cache
    rows: list[AblationRow] = []
    by_name: dict[str, AblationRow] = {}
    for name, use_se, use_sent, method in CONFIGS:
        enc = EncoderConfig(**{**encoder_config.to_dict(), "use_se": use_se})
        cfg = copy.deepcopy(train_config)
        cfg.use_sentiment = use_sent
        cfg.selector = SelectorConfig(**{**train_config.selector.to_dict(), "method": method})
        log.info("ablation: %s", name)
        values, status = _run(split, enc, cfg, lexicon, lexicon_path, cache)
        row = AblationRow(len(rows) + 1, name, "config", values, status)
        rows.append(row)
        by_name[name] = row
    for name, a, b in DELTAS:
        ra, rb = by_name[a], by_name[b]
        values: dict[str, float | None] = {}
        for m in METRICS:
            va, vb = ra.values.get(m), rb.values.get(m)
            values[m] = None if va is None or vb is None else va - vb
        ok = ra.status == "ok" and rb.status == "ok"
        rows.append(AblationRow(len(rows) + 1, name, "delta", values, "ok" if ok else "failed [input row]"))
    for name, source in SELECTORS:
        if source is not None:
            src = by_name[source]
            rows.append(AblationRow(len(rows) + 1, name, "selector", dict(src.values), src.status))
            continue
        enc = EncoderConfig(**{**encoder_config.to_dict(), "use_se": True})
        cfg = copy.deepcopy(train_config)
        cfg.use_sentiment = True
        cfg.selector = SelectorConfig(**{**train_config.selector.to_dict(), "method": "l1"})
        log.info("ablation: %s", name)
        values, status = _run(split, enc, cfg, lexicon, lexicon_path, cache)
        rows.append(AblationRow(len(rows) + 1, name, "selector", values, status))
    return AblationReport(rows)
