"""Command-line entry point."""

from knmf.cli.main import main

__all__ = ["main"]
