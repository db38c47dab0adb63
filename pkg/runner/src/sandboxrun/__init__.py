"""Sandbox runner package; the deliverable is a single script file.

Hosts invoke the runner as an interpreter script path, so the only public
helper here locates that file for configuration.
"""

from pathlib import Path

__version__ = "0.1.0"


def runner_path() -> str:
    """Absolute path of the runner script, for --runner flags and env vars."""
    return str(Path(__file__).resolve().parent / "runner.py")
