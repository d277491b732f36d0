#!/usr/bin/env python3
"""Generate the three standard desk-scale datasets under ./data."""

import sys

from ikno.cli import main

if __name__ == "__main__":
    extra = sys.argv[1:]
    for kind, out in (
        ("csines", "data/csines"),
        ("poisson-gauss", "data/poisson-gauss"),
        ("toy-advection", "data/toy-advection"),
    ):
        rc = main(["gen-data", "--kind", kind, "--out", out] + extra)
        if rc != 0:
            raise SystemExit(rc)
