#!/usr/bin/env python3
"""Render convergence figures from study CSV files.

Usage: plot.py --in study.csv [more.csv ...] [--order 0.5] [--out fig.svg]

Works without installing the package by adding the local src/ tree to the
import path.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent / "src"))

from spdeplots.cli import main

if __name__ == "__main__":
    sys.exit(main())
