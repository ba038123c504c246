#!/usr/bin/env python3
"""
discrete-cbo - time-discrete consensus-based optimization experiments.

Usage:
    python discrete_cbo.py run --objective sphere_plus_one --dim 2 --seed 7
    python discrete_cbo.py certify --config experiment.cfg
    python discrete_cbo.py verify-replay --out cbo-output

Equivalent to the installed `discrete-cbo` command.
"""

import sys

# Check for numpy before importing the package
try:
    import numpy  # noqa: F401
except ImportError:
    print("\nError: numpy not installed.")
    print("Install it with: pip install numpy scipy\n")
    sys.exit(1)

from discrete_cbo import main

if __name__ == "__main__":
    sys.exit(main())
