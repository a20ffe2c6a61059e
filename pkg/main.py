#!/usr/bin/env python3
"""
Quantum Uplink launcher
Runs the command-line interface from a source checkout.

    python main.py feasibility --fig5 --out feasibility.csv
"""

import sys

from src.quantum_uplink.cli import main

if __name__ == "__main__":
    sys.exit(main())
