"""Component ablation on the synthetic corpus (about two minutes on one core).

    python scripts/run_ablation.py [--out runs/ablation] [--config scripts/synthetic.json]
"""

import argparse
import sys
from pathlib import Path

from gblsdetect.cli import main

HERE = Path(__file__).resolve().parent

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(HERE / "synthetic.json"))
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()
    sys.exit(main(["ablate", "--config", args.config, "--out", args.out]))
