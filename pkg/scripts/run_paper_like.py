#!/usr/bin/env python3
"""Full-scale sweep on the 10x10 coarse grid with 24 random inclusions.

This reproduces the benchmark protocol end to end (three Darcy numbers,
M = 5..25, with and without oversampling).  Budget hours of runtime; the
offline bases are cached under the output directory, so reruns after an
interruption skip completed offline work.  MSFLOW_THREADS parallelizes the
per-cell local solves.
"""

import pathlib
import sys

from msflow.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    config = HERE / "configs" / "paper_like.cfg"
    sys.exit(main(["sweep", "--config", str(config), *sys.argv[1:]]))
