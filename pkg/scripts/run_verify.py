#!/usr/bin/env python3
"""Run the full correctness suites and write verify_report.json."""

import sys

from ikno.cli import main

if __name__ == "__main__":
    raise SystemExit(main(["verify", "--out", "verify-out"] + sys.argv[1:]))
