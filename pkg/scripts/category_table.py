"""Token-category attribution table over a labelled dataset (all texts and true positives).

    python scripts/category_table.py CHECKPOINT DATASET [--limit 200] [--steps 128] [--out table]
"""

import argparse
from pathlib import Path

from gblsdetect.explain import aggregate_attributions, category_table_csv, explain_ig
from gblsdetect.text import load_dataset
from gblsdetect.train import Detector

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("checkpoint")
    ap.add_argument("dataset")
    ap.add_argument("--limit", type=int, default=200)
    ap.add_argument("--steps", type=int, default=128)
    ap.add_argument("--out", default="table")
    args = ap.parse_args()

    det, _ = Detector.load(args.checkpoint)
    recs = load_dataset(args.dataset).records[: args.limit]
    prob = det.predict_proba([r.text for r in recs])
    reports = [explain_ig(det, r.text, steps=args.steps) for r in recs]
    tp = [rep for rep, r, p in zip(reports, recs, prob) if r.label == 1 and p >= det.threshold]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "categories_all.csv").write_text(category_table_csv(aggregate_attributions(reports)), encoding="utf-8")
    if tp:
        (out / "categories_true_positive.csv").write_text(category_table_csv(aggregate_attributions(tp)), encoding="utf-8")
    print((out / "categories_all.csv").read_text(encoding="utf-8"), end="")
