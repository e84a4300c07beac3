#!/usr/bin/env python
"""
Entry point for running qcmediator from a source checkout.

Usage:
    python run.py list-scenarios
    python run.py run --config particles --out results
    python run.py sweep --config general --param widths --values 1,2,4
    python run.py accept --jobs 4
"""

import sys

from qcmediator.cli import main


if __name__ == "__main__":
    sys.exit(main())
