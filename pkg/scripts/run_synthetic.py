"""Train on the bundled synthetic corpus, then evaluate, calibrate and explain a few texts.

    python scripts/run_synthetic.py [--out runs/synthetic] [--config scripts/synthetic.json]
"""

import argparse
import json
import sys
from pathlib import Path

from gblsdetect.cli import main

HERE = Path(__file__).resolve().parent
SAMPLES = [
    "you are a pathetic idiot and everyone knows it",
    "great match last night, the keeper was brilliant",
    "people like you should just disappear",
]


def run(argv):
    code = main(argv)
    if code:
        sys.exit(code)


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(HERE / "synthetic.json"))
    ap.add_argument("--out", default="runs/synthetic")
    args = ap.parse_args()
    out = Path(args.out)
    ckpt = str(out / "checkpoint")
    test_csv = str(out / "data" / "test.csv")

    run(["train", "--config", args.config, "--out", str(out)])
    run(["evaluate", "--checkpoint", ckpt, "--config", args.config, "--dataset", test_csv, "--out", str(out / "evaluation")])
    run(["calibrate", "--checkpoint", ckpt, "--config", args.config, "--dataset", test_csv, "--out", str(out / "calibration")])
    texts = [a for t in SAMPLES for a in ("--text", t)]
    run(["explain", "--checkpoint", ckpt, *texts, "--method", "both", "--out", str(out / "explanations")])

    report = json.loads((out / "report.json").read_text())
    cal = json.loads((out / "calibration" / "calibration.json").read_text())
    print(json.dumps({"test": report["test"], "gmb": report["bias"] and {k: report["bias"][k] for k in ("gmb_sub", "gmb_bpsn", "gmb_bnsp")}, "ece": cal["ece"]}, indent=2))
