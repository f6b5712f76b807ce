"""
Bi-Poisson Process Toolkit - Main Application
Command-line entry point; see backend/cli.py for the subcommands.
"""

import sys

from backend.cli import main

if __name__ == "__main__":
    sys.exit(main())
