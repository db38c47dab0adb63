import json
import subprocess
import sys
from pathlib import Path

import pytest

SRC_DIR = Path(__file__).parent.parent / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

from sandboxrun import runner_path  # noqa: E402

# Mirror of the host's hard-kill margin past the program timeout.
HOST_GRACE_S = 2.0

RESPONSE_KEYS = {"status", "stdout", "stderr", "duration_ms"}
STATUSES = {"OK", "RUNTIME_ERROR", "TIMEOUT", "OUTPUT_OVERFLOW"}


@pytest.fixture(scope="session")
def runner():
    return runner_path()


@pytest.fixture
def invoke(runner, tmp_path):
    """Call the runner exactly the way the host does; return the process."""

    def call(program, mode="run", timeout_ms=3000, scratch=None, raw_args=None):
        scratch = Path(scratch) if scratch else tmp_path / "scratch"
        scratch.mkdir(exist_ok=True)
        program_path = scratch / "prog.src"
        program_path.write_text(program, encoding="utf-8")
        if raw_args is None:
            raw_args = [
                "--program",
                str(program_path),
                "--mode",
                mode,
                "--timeout-ms",
                str(timeout_ms),
            ]
        return subprocess.run(
            [sys.executable, runner, *raw_args],
            capture_output=True,
            text=True,
            timeout=timeout_ms / 1000.0 + HOST_GRACE_S + 15.0,
            cwd=scratch,
        )

    return call


def well_formed(proc):
    """Assert the one-line protocol contract and return the parsed record."""
    assert proc.returncode == 0, proc.stderr
    lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
    assert len(lines) == 1, f"expected one response line, got {len(lines)}"
    payload = json.loads(lines[0])
    assert set(payload) == RESPONSE_KEYS
    assert payload["status"] in STATUSES
    assert isinstance(payload["stdout"], str)
    assert isinstance(payload["stderr"], str)
    assert isinstance(payload["duration_ms"], int)
    assert payload["duration_ms"] >= 0
    return payload
