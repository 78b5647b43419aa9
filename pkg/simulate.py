#!/usr/bin/env python
"""Command-line utility for running dvrgme simulations."""
import os
import sys


def main():
    """Run the simulate command."""
    sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
    try:
        from dvrgme.cli import simulate
    except ImportError as exc:
        raise ImportError(
            "Couldn't import dvrgme. Are its dependencies installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    simulate()


if __name__ == "__main__":
    main()
