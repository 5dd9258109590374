#!/usr/bin/env python3
"""Execute one untrusted program from stdin and report on stdout.

Protocol: the full program text arrives on stdin; the shim replies with
exactly one JSON line on the original stdout:

    {"status": "ok"|"error", "final_line": str, "exception_class": str|null,
     "traceback_tail": str|null, "printed_bytes": int}

The program runs in a fresh namespace with file descriptor 1 redirected to
a capture file, so nothing the program prints (or writes to fd 1 directly)
can corrupt the report channel. Interpreter-level policy via an audit hook
denies network access, process spawning, and writes outside the working
directory; the host supplies process limits and the kill timer. A memory
cap in TUPLEREASON_MEM_MIB is applied to this process at startup.

The shim itself must never crash: every program failure, including syntax
errors and policy denials, becomes an "error" report and exit code 0.
This file is self-contained so it can be invoked as ``python -I shim.py``.
"""

from __future__ import annotations

import json
import os
import sys
import traceback

MEM_LIMIT_ENV = "TUPLEREASON_MEM_MIB"
TRACEBACK_FRAMES = 5
CAPTURE_NAME = ".stdout-capture"
STDERR_NAME = ".stderr-capture"
# Hard per-file size cap; keeps a print loop from filling the disk.
FSIZE_LIMIT_BYTES = 64 * 1024 * 1024
# Only the tail of the capture is scanned for the final line, so reporting
# stays within the memory cap even after enormous output.
CAPTURE_TAIL_BYTES = 64 * 1024
# Reported fields are bounded so the report line always fits well inside
# the host's 64 KiB stdout window, even after JSON escaping.
FINAL_LINE_CAP = 4096
TRACEBACK_CAP = 2048

_BLOCKED_EVENTS = frozenset(
    {
        "subprocess.Popen",
        "os.system",
        "os.exec",
        "os.posix_spawn",
        "os.spawn",
        "os.fork",
        "os.forkpty",
        "os.startfile",
        "pty.spawn",
    }
)

_FS_EVENTS = frozenset(
    {"os.remove", "os.unlink", "os.rmdir", "os.rename", "os.truncate",
     "os.mkdir", "os.link", "os.symlink", "shutil.rmtree", "shutil.move"}
)

_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_APPEND | os.O_CREAT | os.O_TRUNC


def _apply_resource_limits() -> None:
    # Limits are best-effort; the host still owns the kill timer.
    try:
        import resource
        import signal

        # Exceeding RLIMIT_FSIZE kills by SIGXFSZ unless ignored; ignoring
        # turns the overflow into a catchable OSError inside the program.
        signal.signal(signal.SIGXFSZ, signal.SIG_IGN)
        resource.setrlimit(resource.RLIMIT_FSIZE, (FSIZE_LIMIT_BYTES, FSIZE_LIMIT_BYTES))
        raw = os.environ.get(MEM_LIMIT_ENV)
        if raw:
            mem = int(raw) * 1024 * 1024
            resource.setrlimit(resource.RLIMIT_AS, (mem, mem))
    except (ImportError, AttributeError, ValueError, OSError):
        pass


def _inside(root: str, path: object) -> bool:
    if isinstance(path, int):  # reopening an fd: nothing new to confine
        return True
    try:
        if isinstance(path, bytes):
            path = path.decode(sys.getfilesystemencoding(), "replace")
        resolved = os.path.realpath(os.fspath(path))
    except (TypeError, ValueError):
        return False
    if resolved == "/dev/null":
        return True
    return resolved == root or resolved.startswith(root + os.sep)


def _install_policy(root: str) -> None:
    def hook(event: str, args: tuple) -> None:
        if event.startswith("socket.") or event.startswith("urllib."):
            raise PermissionError("network access disabled")
        if event in _BLOCKED_EVENTS:
            raise PermissionError("process spawning disabled")
        if event == "open":
            path, mode, flags = args
            if isinstance(mode, str):
                writing = any(c in mode for c in "wax+")
            else:
                writing = bool((flags or 0) & _WRITE_FLAGS)
            if writing and not _inside(root, path):
                raise PermissionError("file writes are confined to the scratch directory")
        elif event in _FS_EVENTS:
            for arg in args:
                if isinstance(arg, (str, bytes)) and not _inside(root, arg):
                    raise PermissionError("filesystem changes are confined to the scratch directory")

    sys.addaudithook(hook)


def _traceback_tail(exc: BaseException) -> str:
    frames = traceback.format_tb(exc.__traceback__)[-TRACEBACK_FRAMES:]
    last = traceback.format_exception_only(type(exc), exc)
    return "".join(frames + last).strip()[-TRACEBACK_CAP:]


def main() -> None:
    _apply_resource_limits()
    program = sys.stdin.buffer.read().decode("utf-8", errors="replace")

    # Keep a private handle on the real stdout, then point fd 1 at a capture
    # file so the report channel stays clean whatever the program does.
    # fd 2 goes to scratch as well so the host's pipes can never be flooded.
    report_fd = os.dup(1)
    scratch = os.path.realpath(os.getcwd())
    capture_path = os.path.join(scratch, CAPTURE_NAME)
    capture_fd = os.open(capture_path, os.O_CREAT | os.O_WRONLY | os.O_TRUNC, 0o600)
    os.dup2(capture_fd, 1)
    os.close(capture_fd)
    stderr_fd = os.open(
        os.path.join(scratch, STDERR_NAME), os.O_CREAT | os.O_WRONLY | os.O_TRUNC, 0o600
    )
    os.dup2(stderr_fd, 2)
    os.close(stderr_fd)

    _install_policy(scratch)

    status = "ok"
    exception_class: str | None = None
    tail: str | None = None
    try:
        code = compile(program, "<program>", "exec")
        namespace: dict = {"__name__": "__main__", "__builtins__": __builtins__}
        exec(code, namespace)
    except SystemExit as exc:
        if exc.code not in (None, 0):
            status = "error"
            exception_class = "SystemExit"
            tail = f"SystemExit: {exc.code}"
    except BaseException as exc:
        status = "error"
        exception_class = type(exc).__name__
        tail = _traceback_tail(exc)

    try:
        sys.stdout.flush()
    except Exception:
        pass
    try:
        printed_bytes = os.path.getsize(capture_path)
        with open(capture_path, "rb") as fh:
            if printed_bytes > CAPTURE_TAIL_BYTES:
                fh.seek(printed_bytes - CAPTURE_TAIL_BYTES)
            printed_tail = fh.read()
    except OSError:
        printed_bytes = 0
        printed_tail = b""

    final_line = ""
    for line in printed_tail.decode("utf-8", errors="replace").splitlines():
        if line.strip():
            # Keep the end of oversized lines; answers sit at the end.
            final_line = line.strip()[-FINAL_LINE_CAP:]

    report = {
        "status": status,
        "final_line": final_line,
        "exception_class": exception_class,
        "traceback_tail": tail,
        "printed_bytes": printed_bytes,
    }
    try:
        os.write(report_fd, (json.dumps(report) + "\n").encode("utf-8"))
    except OSError:
        pass  # the host reports the missing record as unparseable output
    os._exit(0)


if __name__ == "__main__":
    main()
