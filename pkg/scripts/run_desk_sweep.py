#!/usr/bin/env python3
"""Desk-scale error sweep (minutes): fine references plus multiscale runs
over the basis-size and Darcy-number grids, one CSV per Darcy value."""

import pathlib
import sys

from msflow.cli import main

HERE = pathlib.Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    config = HERE / "configs" / "desk_test1.cfg"
    sys.exit(main(["sweep", "--config", str(config), *sys.argv[1:]]))
