#!/usr/bin/env python3
"""CLI script for the groundwater surrogate workbench."""

import sys

from dotenv import load_dotenv

from app.cli import main

if __name__ == "__main__":
    load_dotenv()
    sys.exit(main())
