#!/usr/bin/env python3
# Copyright 2026 The m2cs-emu Authors
# SPDX-License-Identifier: Apache-2.0
"""Render a benchmark report's point table next to its JSON as a PNG.

The first CSV column is the x axis; every other column is drawn against it.
"""

import argparse
import csv
import json
import pathlib
import sys


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("report", type=pathlib.Path, help="<name>.json written by `m2cs run`")
    ap.add_argument("--out", type=pathlib.Path, help="defaults to <name>.png beside the report")
    args = ap.parse_args()

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib is not installed", file=sys.stderr)
        return 1

    meta = json.loads(args.report.read_text())
    with args.report.with_suffix(".csv").open(newline="") as f:
        rows = list(csv.reader(f))
    if len(rows) < 2:
        print("report has no point data", file=sys.stderr)
        return 1
    header, data = rows[0], [[float(v) for v in r] for r in rows[1:]]
    x = [r[0] for r in data]

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for k, name in enumerate(header[1:], start=1):
        ax.plot(x, [r[k] for r in data], marker=".", label=name)
    ax.set_xlabel(header[0])
    status = "pass" if meta.get("passed") else "fail"
    ax.set_title(f"{meta['benchmark']} (seed {meta['seed']}, {status})")
    fits = ", ".join(f"{k}={v:.5g}" for k, v in meta.get("fitted", {}).items())
    if fits:
        fig.text(0.01, 0.01, fits, fontsize=7)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    out = args.out or args.report.with_suffix(".png")
    fig.savefig(out, dpi=120, bbox_inches="tight")
    print(f"plot: {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
