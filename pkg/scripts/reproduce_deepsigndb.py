"""Train and score the vanilla variant on licensed DeepSignDB office-scenario data.

Not part of the test suite: it needs the restricted corpus and many hours of
CPU time.  Convert the pen-tablet subset to canonical TSV first and write three
manifests next to the converted files:

    train.json             dataset manifest, development subjects
    val.json               dataset manifest, held-out development subjects
    eval_comparisons.json  comparison list of the evaluation protocol, with
                           enrolled_subject / questioned_subject fields

Then run

    python scripts/reproduce_deepsigndb.py --data DIR --out runs/deepsigndb

The script trains with ``sigver train``, evaluates with ``sigver evaluate``
and exits 0 when the overall EER lands within the tolerance band of the
reference value below.
"""

import argparse
import json
import sys
from pathlib import Path

from sigver.cli import main as sigver

REFERENCE_EER = 0.0464
TOLERANCE = 0.015


def run(argv):
    code = sigver(argv)
    if code != 0:
        raise SystemExit(f"sigver {argv[0]} failed with exit code {code}")


def main():
    ap = argparse.ArgumentParser(description="DeepSignDB office-scenario reproduction")
    ap.add_argument("--data", type=Path, required=True, help="directory holding the three manifests")
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--pairs-per-epoch", type=int, default=20000)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--patience", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for name in ("train.json", "val.json", "eval_comparisons.json"):
        if not (args.data / name).exists():
            raise SystemExit(f"missing {args.data / name}")
    args.out.mkdir(parents=True, exist_ok=True)
    ckpt = args.out / "vanilla.ckpt"

    run(["train", "--variant", "vanilla", "--train-manifest", str(args.data / "train.json"),
         "--val-manifest", str(args.data / "val.json"), "--epochs", str(args.epochs),
         "--pairs-per-epoch", str(args.pairs_per_epoch), "--batch", str(args.batch),
         "--lr", str(args.lr), "--patience", str(args.patience), "--threads", str(args.threads),
         "--seed", str(args.seed), "--out", str(ckpt), "--log", str(args.out / "train_log.jsonl")])
    run(["evaluate", "--model", str(ckpt), "--manifest", str(args.data / "eval_comparisons.json"),
         "--out-dir", str(args.out / "report"), "--seed", str(args.seed)])

    report = json.loads((args.out / "report" / "report.json").read_text())
    eer = report["eer_overall"]
    ok = abs(eer - REFERENCE_EER) <= TOLERANCE
    print(f"overall EER {eer:.4f} (reference {REFERENCE_EER:.4f} +/- {TOLERANCE}): {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
