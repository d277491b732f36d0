#!/usr/bin/env python3
"""Train the default tp-variant model on the csines dataset."""

import sys

from ikno.cli import main

if __name__ == "__main__":
    raise SystemExit(main(
        ["train", "--data", "data/csines", "--steps", "2000",
         "--out", "train-out"] + sys.argv[1:]
    ))
