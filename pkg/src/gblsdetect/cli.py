"""Command-line entry point: train, evaluate, explain, calibrate, ablate (and generate).

Exit codes: 0 success, 1 invalid input (config, dataset, checkpoint, arguments),
2 failure while running.  ``GBLS_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, svg
from . import config as cfgmod
from .ablation import run_ablation
from .checkpoint import CheckpointError
from .explain import (
    aggregate_attributions,
    calibration,
    category_table_csv,
    explain_ig,
    explain_lime,
    text_seed,
)
from .metrics import compute_gmb, compute_metrics
from .synthetic import CorpusSpec, generate_corpus
from .text import DatasetError, RawRecord, load_dataset, split, write_dataset
from .train import Detector, StageError, run_pipeline

log = logging.getLogger("gblsdetect")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class InputError(ValueError):
    """Bad command-line input; maps to exit code 1."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _write_meta(out: Path, command: str, extra: dict | None = None) -> None:
    """Timestamps and timings live here so the primary artifacts stay byte-stable."""
    meta = {
        "command": command,
        "finished_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
        **(extra or {}),
    }
    _write(out / "run_meta.json", _dump(meta))


def _load_config(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    if getattr(args, "dataset", None):
        cfg.data.path = args.dataset
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out = args.out
    cfg.validate()
    return cfg


def _records(cfg: cfgmod.RunConfig) -> list[RawRecord]:
    if cfg.data.path is None:
        return generate_corpus(cfg.data.synthetic)
    return load_dataset(cfg.data.path, cfg.data.format, cfg.data.max_error_rate).records


def _load_detector(path: str) -> tuple[Detector, str]:
    if not Path(path).exists():
        raise InputError(f"checkpoint not found: {path}")
    try:
        return Detector.load(path)
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot load checkpoint {path}: {exc}") from exc


def _check_digest(args, digest: str) -> None:
    if args.config:
        cfg = cfgmod.load(args.config)  # --dataset here is the scored set, not training data
        if args.seed is not None:
            cfg.seed = args.seed
        expected = cfg.digest()
        if expected != digest:
            raise InputError(f"config digest {expected[:12]} does not match checkpoint digest {digest[:12]}")


def _dataset_records(path: str | None) -> list[RawRecord]:
    if not path:
        raise InputError("--dataset is required")
    if not Path(path).is_file():
        raise InputError(f"dataset not found: {path}")
    return load_dataset(path).records


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    records = _records(cfg)
    parts = split(records, cfg.data.ratios, seed=cfg.seed, stratified=cfg.data.stratified)
    digest = cfg.digest()
    res = run_pipeline(parts, cfg.encoder, cfg.train_config(), lexicon_path=cfg.lexicon)
    det = res.detector
    det.save(out / "checkpoint", digest)
    for name, part in (("train", parts.train), ("val", parts.val), ("test", parts.test)):
        write_dataset(part, out / "data" / f"{name}.csv")
    report = {
        "config_digest": digest,
        "config": cfg.to_dict() | {"out": None},
        "threshold": det.threshold,
        "test": res.metrics.to_dict(),
        "validation": res.val_metrics.to_dict(),
        "bias": res.bias.to_dict() if res.bias else None,
        "selection": det.mask.to_dict() | {"warnings": det.mask.warnings},
        "sizes": {"train": len(parts.train), "val": len(parts.val), "test": len(parts.test), "vocab": len(det.vocab)},
        "stage1_best_epoch": res.stage1.best_epoch,
        "gbls_best_epoch": res.gbls_history.best_epoch,
    }
    _write(out / "report.json", _dump(report))
    _write(out / "stage1_history.csv", res.stage1.to_csv())
    _write(out / "gbls_history.csv", res.gbls_history.to_csv())
    _write_meta(out, "train", {"timings_s": res.timings})
    print(f"test accuracy {res.metrics.accuracy:.4f}  auc {res.metrics.roc_auc}  -> {out}")
    return EXIT_OK


def _misclassified_csv(records: Sequence[RawRecord], prob: np.ndarray, theta: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["text", "label", "prediction", "probability", "error", "subgroups"])
    for r, p in zip(records, prob):
        pred = int(p >= theta)
        if pred != r.label:
            kind = "false_positive" if pred == 1 else "false_negative"
            w.writerow([r.text, r.label, pred, f"{p:.6f}", kind, "|".join(sorted(r.subgroups))])
    return buf.getvalue()


def cmd_evaluate(args) -> int:
    det, digest = _load_detector(args.checkpoint)
    _check_digest(args, digest)
    records = _dataset_records(args.dataset)
    out = Path(args.out or "evaluation")
    prob = det.predict_proba([r.text for r in records])
    labels = np.array([r.label for r in records])
    metrics = compute_metrics(prob, labels, det.threshold)
    bias = None
    if any(r.subgroups for r in records):
        bias = compute_gmb(prob, labels, [r.subgroups for r in records])
    report = {
        "config_digest": digest,
        "dataset": Path(args.dataset).name,
        "metrics": metrics.to_dict(),
        "bias": bias.to_dict() if bias else None,
    }
    _write(out / "evaluation.json", _dump(report))
    _write(out / "misclassified.csv", _misclassified_csv(records, prob, det.threshold))
    _write_meta(out, "evaluate")
    print(f"accuracy {metrics.accuracy:.4f}  f1 {metrics.f1:.4f}  auc {metrics.roc_auc}  -> {out}")
    return EXIT_OK


def _explain_inputs(args) -> tuple[list[str], list[int] | None]:
    if args.text:
        texts, labels = list(args.text), None
    elif args.dataset:
        path = Path(args.dataset)
        if not path.is_file():
            raise InputError(f"input file not found: {path}")
        if path.suffix.lower() == ".txt":
            texts = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
            labels = None
        else:
            recs = load_dataset(path).records
            texts, labels = [r.text for r in recs], [r.label for r in recs]
    else:
        raise InputError("explain needs --text or --dataset")
    if not texts or any(not t.strip() for t in texts):
        raise InputError("explain needs non-empty input texts")
    return texts, labels


def cmd_explain(args) -> int:
    det, digest = _load_detector(args.checkpoint)
    texts, labels = _explain_inputs(args)
    methods = ("ig", "lime") if args.method == "both" else (args.method,)
    out = Path(args.out or "explanations")
    seed = args.seed if args.seed is not None else 0
    ig_reports = []
    for i, text in enumerate(texts):
        doc = {"config_digest": digest, "index": i, "text": text, "probability": float(det.predict_proba([text])[0])}
        if "ig" in methods:
            rep = explain_ig(det, text, steps=args.steps)
            ig_reports.append((rep, doc["probability"] >= det.threshold, labels[i] if labels else None))
            doc["ig"] = rep.to_dict()
            svg.write(out / f"text_{i:03d}_ig.svg", svg.bar_chart(rep.tokens, rep.scores, "Integrated gradients"))
        if "lime" in methods:
            lx = explain_lime(det, text, n_samples=args.samples, seed=text_seed(seed, i))
            doc["lime"] = lx.to_dict()
            svg.write(out / f"text_{i:03d}_lime.svg", svg.bar_chart(lx.tokens, lx.weights, "LIME weights"))
        _write(out / f"text_{i:03d}.json", _dump(doc))
    if ig_reports:
        _write(out / "categories_all.csv", category_table_csv(aggregate_attributions([r for r, _, _ in ig_reports])))
        if labels is not None:
            tp = [r for r, pred, y in ig_reports if pred and y == 1]
            if tp:
                _write(out / "categories_true_positive.csv", category_table_csv(aggregate_attributions(tp)))
    _write_meta(out, "explain")
    print(f"{len(texts)} explanation(s) -> {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    det, digest = _load_detector(args.checkpoint)
    _check_digest(args, digest)
    records = _dataset_records(args.dataset)
    if len(records) < args.bins:
        raise InputError(f"need at least {args.bins} examples for {args.bins} bins, got {len(records)}")
    out = Path(args.out or "calibration")
    prob = det.predict_proba([r.text for r in records])
    rep = calibration(prob, [r.label for r in records], args.bins)
    _write(out / "calibration.csv", rep.to_csv())
    _write(out / "calibration.json", _dump({"config_digest": digest, "ece": rep.ece, "n": rep.n, "n_bins": rep.n_bins}))
    occupied = [b for b in rep.bins if b.count]
    diag = svg.line_plot(
        [("perfect", [0.0, 1.0], [0.0, 1.0]), ("model", [b.confidence for b in occupied], [b.accuracy for b in occupied])],
        title=f"Reliability (ECE {rep.ece:.4f})",
        xlabel="mean confidence",
        ylabel="accuracy",
        xlim=(0.0, 1.0),
        ylim=(0.0, 1.0),
    )
    svg.write(out / "reliability.svg", diag)
    counts, edges = rep.histogram()
    svg.write(out / "confidence_hist.svg", svg.histogram(counts, edges, "Confidence distribution", "confidence"))
    _write_meta(out, "calibrate")
    print(f"ECE {rep.ece:.4f} over {rep.n} examples -> {out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    parts = split(_records(cfg), cfg.data.ratios, seed=cfg.seed, stratified=cfg.data.stratified)
    t0 = time.perf_counter()
    report = run_ablation(parts, cfg.encoder, cfg.train_config(), lexicon_path=cfg.lexicon)
    _write(out / "ablation.csv", report.to_csv())
    _write(out / "ablation.json", _dump({"config_digest": cfg.digest(), **report.to_dict()}))
    _write_meta(out, "ablate", {"elapsed_s": time.perf_counter() - t0})
    print(report.to_csv(), end="")
    failed = [r.name for r in report.rows if r.status != "ok"]
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_generate(args) -> int:
    spec = CorpusSpec(n=args.n, seed=args.seed if args.seed is not None else CorpusSpec.seed)
    out = Path(args.out or "synthetic.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(generate_corpus(spec), out)
    print(f"{spec.n} texts -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _u64(value: str) -> int:
    v = int(value)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gblsdetect", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=False, checkpoint=False, dataset=False):
        if config:
            sp.add_argument("--config", help="JSON run configuration")
        if checkpoint:
            sp.add_argument("--checkpoint", required=True, help="checkpoint file or directory")
        if dataset:
            sp.add_argument("--dataset", help="CSV/JSONL dataset (text,label[,subgroups])")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=_u64, help="override the run seed")

    sp = sub.add_parser("train", help="two-stage training and test evaluation")
    common(sp, config=True, dataset=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="metrics, bias scores and misclassifications")
    common(sp, config=True, checkpoint=True, dataset=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("explain", help="IG and/or LIME token explanations")
    common(sp, checkpoint=True, dataset=True)
    sp.add_argument("--text", action="append", help="text to explain (repeatable)")
    sp.add_argument("--method", choices=("ig", "lime", "both"), default="both")
    sp.add_argument("--steps", type=int, default=512, help="IG integration steps")
    sp.add_argument("--samples", type=int, default=1000, help="LIME perturbation samples")
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("calibrate", help="reliability table, ECE and plots")
    common(sp, config=True, checkpoint=True, dataset=True)
    sp.add_argument("--bins", type=int, default=10)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("ablate", help="component ablation table")
    common(sp, config=True, dataset=True)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("generate", help="write the synthetic corpus")
    sp.add_argument("--out", help="output CSV/JSONL path")
    sp.add_argument("--seed", type=_u64)
    sp.add_argument("--n", type=int, default=2000)
    sp.set_defaults(func=cmd_generate)
    return p


def _setup_logging() -> None:
    level = os.environ.get("GBLS_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage; here that is invalid input
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (cfgmod.ConfigError, DatasetError, CheckpointError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the runtime exit code
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
