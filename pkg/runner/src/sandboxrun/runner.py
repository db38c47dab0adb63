"""Execute or syntax-check one submitted program and answer in one line.

Invoked as a script: --program <path> --mode run|check --timeout-ms N.
The reply is a single JSON object on stdout, {"status", "stdout", "stderr",
"duration_ms"}, and the exit code says only whether the protocol was honored
(0) or violated (3). Program failures are statuses, never exit codes.

The submitted program runs in a fresh namespace with restricted builtins:
imports outside a small numeric allow-list are blocked, open() is jailed to
the working directory, and stdin is empty. Stdout and stderr are captured
into memory with a hard cap, so nothing a program prints can reach the
protocol stream or forge a response line.

This file must stay import-free of its own package so a bare file path works.
"""

import argparse
import builtins
import io
import json
import linecache
import os
import signal
import sys
import time
import traceback

VIRTUAL_NAME = "prog.src"
OUTPUT_CAP = 64 * 1024
TRUNCATION_MARKER = "...[truncated]"

# Mirrors the template validator's import allow-list. The validator is the
# authoritative gate; this one just keeps hostile inputs honest.
ALLOWED_MODULES = frozenset(
    {"math", "fractions", "decimal", "itertools", "functools", "collections"}
)

EXIT_PROTOCOL_VIOLATION = 3

# How often the timer re-fires after the deadline, for programs that swallow
# the first timeout exception.
REFIRE_INTERVAL_S = 0.05


class _Overflow(Exception):
    pass


class _Timeout(Exception):
    pass


class CappedWriter(io.TextIOBase):
    """In-memory sink that refuses to grow past the cap."""

    def __init__(self, cap):
        self.cap = cap
        self.chunks = []
        self.size = 0
        self.overflowed = False

    def writable(self):
        return True

    def write(self, s):
        s = str(s)
        if self.overflowed:
            raise _Overflow()
        if self.size + len(s) > self.cap:
            self.chunks.append(s[: self.cap - self.size])
            self.size = self.cap
            self.overflowed = True
            raise _Overflow()
        self.chunks.append(s)
        self.size += len(s)
        return len(s)

    @property
    def text(self):
        out = "".join(self.chunks)
        if self.overflowed:
            out += TRUNCATION_MARKER
        return out


def filtered_traceback(exc):
    """Traceback limited to program frames, so host paths never leak."""
    lines = ["Traceback (most recent call last):\n"]
    for frame in traceback.extract_tb(exc.__traceback__):
        if frame.filename != VIRTUAL_NAME:
            continue
        lines.append(f'  File "{frame.filename}", line {frame.lineno}, in {frame.name}\n')
        if frame.line:
            lines.append(f"    {frame.line}\n")
    lines.extend(traceback.format_exception_only(type(exc), exc))
    return "".join(lines)


def response_line(status, stdout, stderr, duration_ms):
    return json.dumps(
        {
            "status": status,
            "stdout": stdout,
            "stderr": stderr,
            "duration_ms": int(duration_ms),
        },
        ensure_ascii=False,
    )


def respond(channel, status, stdout, stderr, duration_ms):
    print(response_line(status, stdout, stderr, duration_ms), file=channel, flush=True)
    sys.exit(0)


def violation(message):
    print(f"protocol violation: {message}", file=sys.stderr, flush=True)
    sys.exit(EXIT_PROTOCOL_VIOLATION)


def make_import_gate():
    real_import = builtins.__import__

    def gated(name, globals=None, locals=None, fromlist=(), level=0):
        top = str(name).partition(".")[0]
        if level != 0 or top not in ALLOWED_MODULES:
            raise ImportError(f"import of {name!r} is blocked in the sandbox")
        return real_import(name, globals, locals, fromlist, level)

    return gated


def make_guarded_open(root):
    real_open = builtins.open
    root = os.path.realpath(root)

    def guarded(file, mode="r", *args, **kwargs):
        if isinstance(file, int):
            raise PermissionError("file descriptors are not available in the sandbox")
        path = os.path.realpath(os.path.join(root, os.fspath(file)))
        try:
            inside = os.path.commonpath([path, root]) == root
        except ValueError:
            inside = False
        if not inside:
            raise PermissionError(f"path escapes the working directory: {file!r}")
        return real_open(path, mode, *args, **kwargs)

    return guarded


def restricted_builtins(root):
    table = dict(vars(builtins))
    table["__import__"] = make_import_gate()
    table["open"] = make_guarded_open(root)
    for name in ("breakpoint", "exit", "quit", "help"):
        table.pop(name, None)
    return table


def run_program(code, timeout_s, started, real_out):
    out = CappedWriter(OUTPUT_CAP)
    err = CappedWriter(OUTPUT_CAP)
    state = {"fired": False}

    def on_alarm(signum, frame):
        if state["fired"]:
            # The program swallowed the first timeout. End it from the
            # handler: restore nothing, answer on the saved channel, leave.
            signal.setitimer(signal.ITIMER_REAL, 0)
            line = response_line(
                "TIMEOUT", out.text, err.text, (time.monotonic() - started) * 1000
            )
            print(line, file=real_out, flush=True)
            os._exit(0)
        state["fired"] = True
        raise _Timeout()

    namespace = {
        "__name__": "__main__",
        "__file__": VIRTUAL_NAME,
        "__builtins__": restricted_builtins(os.getcwd()),
    }

    status = "OK"
    stderr_extra = ""
    saved = (sys.stdout, sys.stderr, sys.stdin)
    signal.signal(signal.SIGALRM, on_alarm)
    sys.stdout, sys.stderr, sys.stdin = out, err, io.StringIO("")
    signal.setitimer(signal.ITIMER_REAL, timeout_s, REFIRE_INTERVAL_S)
    try:
        exec(code, namespace)
    except _Timeout:
        status = "TIMEOUT"
    except _Overflow:
        status = "OUTPUT_OVERFLOW"
    except RecursionError:
        status = "RUNTIME_ERROR"
        stderr_extra = "RecursionError: maximum recursion depth exceeded\n"
    except SystemExit as exc:
        if exc.code not in (0, None):
            status = "RUNTIME_ERROR"
            stderr_extra = f"SystemExit: {exc.code}\n"
    except BaseException as exc:
        status = "RUNTIME_ERROR"
        stderr_extra = filtered_traceback(exc)
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        sys.stdout, sys.stderr, sys.stdin = saved

    if status == "OK":
        # A swallowed timeout or overflow still happened; report it.
        if state["fired"]:
            status = "TIMEOUT"
        elif out.overflowed or err.overflowed:
            status = "OUTPUT_OVERFLOW"
    duration_ms = (time.monotonic() - started) * 1000
    respond(real_out, status, out.text, err.text + stderr_extra, duration_ms)


def main():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--program", required=True)
    parser.add_argument("--mode", required=True, choices=["run", "check"])
    parser.add_argument("--timeout-ms", required=True, type=int)
    try:
        args = parser.parse_args()
    except SystemExit:
        violation("expected --program <path> --mode run|check --timeout-ms N")
    if args.timeout_ms <= 0:
        violation(f"timeout must be positive, got {args.timeout_ms}")

    try:
        with open(args.program, "r", encoding="utf-8") as fh:
            source = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        violation(f"cannot read program: {exc}")

    # Deterministic error text: source lines resolve through the virtual name.
    linecache.cache[VIRTUAL_NAME] = (
        len(source),
        None,
        source.splitlines(True),
        VIRTUAL_NAME,
    )

    real_out = sys.stdout
    started = time.monotonic()
    try:
        code = compile(source, VIRTUAL_NAME, "exec")
    except (SyntaxError, ValueError) as exc:
        stderr = "".join(traceback.format_exception_only(type(exc), exc))
        respond(real_out, "RUNTIME_ERROR", "", stderr, (time.monotonic() - started) * 1000)

    if args.mode == "check":
        # Compile only; the program never runs in check mode.
        respond(real_out, "OK", "", "", (time.monotonic() - started) * 1000)

    run_program(code, args.timeout_ms / 1000.0, started, real_out)


if __name__ == "__main__":
    main()
