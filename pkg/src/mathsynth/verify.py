"""Program execution via the sandbox runner, and answer comparison.

The host never executes candidate programs in-process. It writes the program
to a scratch file, invokes the runner subprocess, and parses exactly one JSON
response line. Any deviation from that protocol is SANDBOX_FAILURE, which is
deliberately distinct from failures of the program under test.
"""

from __future__ import annotations

import json
import logging
import os
import re
import shutil
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .corpus import AnswerKind, GroundTruthAnswer
from .numform import parse_number_text
from .template import InstantiatedSample

log = logging.getLogger(__name__)

RUNNER_ENV_VAR = "MATHSYNTH_RUNNER"
PROGRAM_FILENAME = "prog.src"
# The runner enforces the timeout itself; the host allows this much slack
# before concluding the runner is wedged and killing it.
HOST_KILL_GRACE_S = 2.0


class ExecStatus(Enum):
    OK = "OK"
    RUNTIME_ERROR = "RUNTIME_ERROR"
    TIMEOUT = "TIMEOUT"
    OUTPUT_OVERFLOW = "OUTPUT_OVERFLOW"
    SANDBOX_FAILURE = "SANDBOX_FAILURE"


@dataclass(frozen=True)
class ExecutionLimits:
    timeout_s: float = 10.0
    memory_bytes: int = 512 * 1024 * 1024
    output_bytes: int = 64 * 1024

    def __post_init__(self):
        if self.timeout_s <= 0 or self.memory_bytes <= 0 or self.output_bytes <= 0:
            raise ValueError("execution limits must be positive")


@dataclass(frozen=True)
class ExecutionResult:
    status: ExecStatus
    stdout: str = ""
    stderr: str = ""
    duration_s: float = 0.0

    @property
    def value_line(self) -> Optional[str]:
        """Last non-empty stdout line; the program's answer when status is OK."""
        for line in reversed(self.stdout.splitlines()):
            if line.strip():
                return line.strip()
        return None


@dataclass(frozen=True)
class ComparisonPolicy:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9


def resolve_runner(runner: Optional[str] = None) -> Optional[str]:
    path = runner or os.environ.get(RUNNER_ENV_VAR)
    if path and Path(path).is_file():
        # The runner subprocess gets a scratch cwd; keep the path valid there.
        return str(Path(path).resolve())
    return None


def _run_protocol(
    program: str, mode: str, limits: ExecutionLimits, runner: Optional[str]
) -> ExecutionResult:
    runner_path = resolve_runner(runner)
    if runner_path is None:
        return ExecutionResult(
            status=ExecStatus.SANDBOX_FAILURE, stderr="sandbox runner not found"
        )
    scratch = tempfile.mkdtemp(prefix="mathsynth-")
    started = time.monotonic()
    try:
        program_path = Path(scratch) / PROGRAM_FILENAME
        program_path.write_text(program, encoding="utf-8")
        cmd = [
            sys.executable,
            runner_path,
            "--program",
            str(program_path),
            "--mode",
            mode,
            "--timeout-ms",
            str(int(limits.timeout_s * 1000)),
        ]
        try:
            proc = subprocess.run(
                cmd,
                capture_output=True,
                text=True,
                timeout=limits.timeout_s + HOST_KILL_GRACE_S,
                cwd=scratch,
            )
        except subprocess.TimeoutExpired:
            return ExecutionResult(
                status=ExecStatus.TIMEOUT,
                stderr="host hard kill: runner unresponsive past the timeout",
                duration_s=time.monotonic() - started,
            )
        duration = time.monotonic() - started
        if proc.returncode != 0:
            return ExecutionResult(
                status=ExecStatus.SANDBOX_FAILURE,
                stderr=f"runner exit {proc.returncode}: {proc.stderr.strip()[:500]}",
                duration_s=duration,
            )
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if len(lines) != 1:
            return ExecutionResult(
                status=ExecStatus.SANDBOX_FAILURE,
                stderr=f"expected one response line, got {len(lines)}",
                duration_s=duration,
            )
        try:
            payload = json.loads(lines[0])
            status = ExecStatus(payload["status"])
            result = ExecutionResult(
                status=status,
                stdout=str(payload["stdout"]),
                stderr=str(payload["stderr"]),
                duration_s=float(payload["duration_ms"]) / 1000.0,
            )
        except (ValueError, KeyError, TypeError) as exc:
            return ExecutionResult(
                status=ExecStatus.SANDBOX_FAILURE,
                stderr=f"malformed runner response: {exc}",
                duration_s=duration,
            )
        if result.status is ExecStatus.SANDBOX_FAILURE:
            return result
        if mode == "run" and result.status is ExecStatus.OK and result.value_line is None:
            return ExecutionResult(
                status=ExecStatus.RUNTIME_ERROR,
                stdout=result.stdout,
                stderr="program produced no output",
                duration_s=result.duration_s,
            )
        return result
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def execute(
    program: str,
    limits: ExecutionLimits = ExecutionLimits(),
    runner: Optional[str] = None,
) -> ExecutionResult:
    """Run a fully instantiated program to completion under the sandbox."""
    return _run_protocol(program, "run", limits, runner)


def syntax_check(
    program: str,
    limits: ExecutionLimits = ExecutionLimits(),
    runner: Optional[str] = None,
) -> ExecutionResult:
    """Compile-only check; the program is never executed."""
    return _run_protocol(program, "check", limits, runner)


# --- answer comparison -------------------------------------------------------

_CURRENCY_CHARS = "$€£"
_LABEL_PREFIX_RE = re.compile(r"^[A-Ea-e]\s*[).:\-]\s*")
_MARKUP_STRIP_RE = re.compile(r"\\left|\\right|\\!|\\,|\\;|[$]")


def _parse_loose_number(text: str) -> Optional[Fraction]:
    s = " ".join(text.split()).strip()
    while s and s[0] in _CURRENCY_CHARS:
        s = s[1:].strip()
    s = s.rstrip(".").strip()
    if s.endswith("%"):
        s = s[:-1].strip()
    try:
        return parse_number_text(s)
    except ValueError:
        return None


def numbers_close(a: Fraction, b: Fraction, policy: ComparisonPolicy) -> bool:
    """Symmetric tolerance: absolute or relative, whichever passes."""
    if a == b:
        return True
    diff = abs(float(a) - float(b))
    if diff <= policy.abs_tol:
        return True
    scale = max(abs(float(a)), abs(float(b)))
    return scale > 0 and diff / scale <= policy.rel_tol


def _normalize_text(text: str) -> str:
    s = _MARKUP_STRIP_RE.sub("", text)
    s = " ".join(s.split()).strip().rstrip(".")
    return s.casefold()


def compare_answers(
    got: Optional[str],
    expected: GroundTruthAnswer,
    policy: ComparisonPolicy = ComparisonPolicy(),
    choices: Optional[Sequence[str]] = None,
) -> tuple[bool, str]:
    """Decide whether an answer string matches ground truth. Never raises.

    Returns (matched, reason); reason explains a False result
    ("UNPARSEABLE", "VALUE_MISMATCH", ...).
    """
    if got is None or not str(got).strip():
        return False, "MISSING"
    got = str(got)

    if expected.kind is AnswerKind.NUMERIC:
        value = _parse_loose_number(got)
        if value is None:
            return False, "UNPARSEABLE"
        if numbers_close(value, expected.numeric_value, policy):
            return True, "ok"
        return False, "VALUE_MISMATCH"

    if expected.kind is AnswerKind.CHOICE:
        label = expected.choice_label
        trimmed = got.strip()
        m = re.fullmatch(r"\(?\s*([A-Ea-e])\s*\)?\.?", trimmed)
        if m:
            if m.group(1).upper() == label:
                return True, "ok"
            return False, "LABEL_MISMATCH"
        if choices:
            index = ord(label) - ord("A")
            if 0 <= index < len(choices):
                option = choices[index]
                bare = _LABEL_PREFIX_RE.sub("", option.strip())
                if _normalize_text(trimmed) == _normalize_text(bare):
                    return True, "ok"
                got_num = _parse_loose_number(trimmed)
                opt_num = _parse_loose_number(bare)
                if got_num is not None and opt_num is not None:
                    if numbers_close(got_num, opt_num, policy):
                        return True, "ok"
        return False, "CHOICE_MISMATCH"

    if _normalize_text(got) == _normalize_text(expected.text_value):
        return True, "ok"
    return False, "TEXT_MISMATCH"


# --- sample verification -----------------------------------------------------


@dataclass(frozen=True)
class VerificationOutcome:
    passed: bool
    reason: str = "ok"
    execution: Optional[ExecutionResult] = None


def verify_sample(
    sample: InstantiatedSample,
    limits: ExecutionLimits = ExecutionLimits(),
    policy: ComparisonPolicy = ComparisonPolicy(),
    runner: Optional[str] = None,
    choices: Optional[Sequence[str]] = None,
) -> VerificationOutcome:
    """Full samples execute and compare; symbolic samples only syntax-check."""
    if sample.retained:
        result = syntax_check(sample.program, limits, runner)
        if result.status is ExecStatus.OK:
            return VerificationOutcome(passed=True, execution=result)
        return VerificationOutcome(
            passed=False, reason=f"{result.status.value}: {result.stderr[:200]}", execution=result
        )
    if sample.expected_answer is None:
        raise ValueError("full sample without an expected answer")
    result = execute(sample.program, limits, runner)
    if result.status is not ExecStatus.OK:
        return VerificationOutcome(
            passed=False, reason=f"{result.status.value}: {result.stderr[:200]}", execution=result
        )
    matched, reason = compare_answers(result.value_line, sample.expected_answer, policy, choices)
    return VerificationOutcome(passed=matched, reason=reason, execution=result)


@dataclass
class SweepReport:
    total: int = 0
    passed: int = 0
    failures: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return self.passed == self.total

    def to_json(self) -> dict:
        return {"total": self.total, "passed": self.passed, "failures": self.failures}


def verify_sweep(
    samples: Sequence[InstantiatedSample],
    limits: ExecutionLimits = ExecutionLimits(),
    policy: ComparisonPolicy = ComparisonPolicy(),
    runner: Optional[str] = None,
    workers: int = 1,
) -> SweepReport:
    """Re-verify every sample (execution for full, syntax for symbolic)."""
    report = SweepReport(total=len(samples))

    def _one(indexed):
        index, sample = indexed
        outcome = verify_sample(sample, limits, policy, runner)
        return index, sample, outcome

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_one, enumerate(samples)))
    else:
        outcomes = [_one(pair) for pair in enumerate(samples)]
    for index, sample, outcome in sorted(outcomes, key=lambda item: item[0]):
        if outcome.passed:
            report.passed += 1
        else:
            report.failures.append(
                {
                    "index": index,
                    "problem_id": sample.provenance.get("problem_id", ""),
                    "reason": outcome.reason,
                }
            )
    return report
