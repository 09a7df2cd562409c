#!/usr/bin/env python3
"""
Launch the PINN training command line.

Examples:
    python start_training.py presets
    python start_training.py run heat1d-cwp --iterations 2000 --seeds 1
"""

import sys

from app.main import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
