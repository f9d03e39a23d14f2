#!/usr/bin/env python3
"""
Command-line entry point for flowpriors.

Usage:
    python flowpriors_cli.py gen --preset walk --frames 16 --size 128x128 --seed 7 --out walk.hfsf
    python flowpriors_cli.py --help
"""

import sys

from flowpriors.cli import main

if __name__ == "__main__":
    sys.exit(main())
