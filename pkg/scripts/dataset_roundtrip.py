#!/usr/bin/env python3
"""Design -> simulate -> estimate, end to end through the command line.

Exercises the finite-sample pipeline: publish the probe design, simulate
agents at exactly those price pairs, then hand the estimator nothing but
the resulting choice frequencies. Prints the estimate next to the truth.
"""

import argparse
import json
import sys
from pathlib import Path

from ctxrisk.cli import main as ctxrisk_main


def run(argv: list[str]) -> None:
    print("+ ctxrisk " + " ".join(argv))
    code = ctxrisk_main(argv)
    if code != 0:
        raise SystemExit(f"step failed with exit code {code}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/dataset_mc.yaml")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    w = ["--workers", str(args.workers)]
    run(["identify", "--config", args.config] + w)

    # out_dir and price_file come from the config; find them there.
    # (identify just wrote effective_config.json, so read the merged values)
    out_dirs = []
    for line in Path(args.config).read_text().splitlines():
        if "out_dir:" in line.split("#")[0]:
            out_dirs.append(line.split("out_dir:")[1].strip())
    out = Path(out_dirs[-1] if out_dirs else "out")

    run(["simulate", "--config", args.config] + w)
    run(["identify", "--config", args.config, "--dataset", str(out / "dataset.csv")] + w)

    summary = json.loads((out / "summary.json").read_text())
    effective = json.loads((out / "effective_config.json").read_text())["effective"]
    truth = effective["scenario"]["mixture"]["alpha"]
    est = summary["alpha_hat"]
    print(f"truth alpha = {truth}")
    print(f"estimated   = {est}" + (f"   |err| = {abs(est - truth):.4f}" if est is not None else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
