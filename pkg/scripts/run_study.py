#!/usr/bin/env python3
"""Truncation-order study on the csines dataset (generate it first)."""

import sys

from ikno.cli import main

if __name__ == "__main__":
    raise SystemExit(main(
        ["finite-order-study", "--data", "data/csines", "--out", "study-out"]
        + sys.argv[1:]
    ))
