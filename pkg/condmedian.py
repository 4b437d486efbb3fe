#!/usr/bin/env python3
"""Online conditional geometric median -- command-line entry point.

    python condmedian.py simulate --n 2000 --output data.csv
    python condmedian.py estimate data.csv --x 0.39
    python condmedian.py profile data.csv --quantiles 0.25,0.5,0.75,0.9
    python condmedian.py benchmark --experiment experiments/table1.conf
"""

import os
import sys

SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, SCRIPT_DIR)

from src.cli import run_cli  # noqa: E402

if __name__ == "__main__":
    sys.exit(run_cli(sys.argv[1:]))
