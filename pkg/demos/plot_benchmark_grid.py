"""
A miniature benchmark grid through the command line
===================================================

The ``omrf benchmark`` command runs every method on every replicate of a
grid of conditions and writes per-cell results plus an aggregate table of
medians and 5%/95% quantiles.  Here the grid is shrunk to two cells.
"""

import csv
import json
import tempfile
from pathlib import Path

from omrf.cli import main

work = Path(tempfile.mkdtemp())
config = {
    "benchmark": {"structures": ["random"], "P": [4], "N": [500], "K_str": 1, "K_sample": 2,
                  "methods": ["pseudo", "core", "ph-ghw"], "iterations": 3000, "burn_in": 1000},
}
(work / "grid.json").write_text(json.dumps(config))
main(["benchmark", "--config", str(work / "grid.json"), "--out", str(work / "out")])

###############################################################################
# Rerunning with ``--resume`` skips the cells listed as done in the manifest.

main(["benchmark", "--config", str(work / "grid.json"), "--out", str(work / "out"), "--resume"])

with open(work / "out" / "aggregate.csv") as fh:
    for row in csv.DictReader(fh):
        if row["kind"] == "absent" and row["metric"] in ("eta", "sd_ratio"):
            print(f"{row['method']:>7} {row['metric']:>8}: median {float(row['median']):.2f} "
                  f"[{float(row['q05']):.2f}, {float(row['q95']):.2f}]")
