"""Host-side controller for executing generated verification programs.

Each execution spawns one fresh runner child process (never a persistent
kernel), feeds it the program on stdin, and expects a single JSON record
back on stdout per the child protocol:

    {"status": "ok"|"error", "final_line": str, "exception_class": str|null,
     "traceback_tail": str|null, "printed_bytes": int}

Program failures are data, not exceptions: they land in ExecutionResult.
"""

from __future__ import annotations

import json
import os
import re
import shlex
import shutil
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .answers import Answer, extract_answer

RUNNER_ENV = "TUPLEREASON_RUNNER"
RUNNER_SCRIPT_NAME = "tuplereason-runner"
MEM_LIMIT_ENV = "TUPLEREASON_MEM_MIB"

STDOUT_CAP_BYTES = 64 * 1024
KILL_GRACE_S = 1.0


class EmptyProgram(ValueError):
    """Nothing remained after stripping code fences."""


class SandboxUnavailable(RuntimeError):
    """The runner child process could not be spawned at all."""


class ExecStatus(Enum):
    OK = "ok"
    ERROR = "error"
    TIMEOUT = "timeout"
    OUTPUT_UNPARSEABLE = "output_unparseable"


class ErrorKind(Enum):
    SYNTAX_ERROR = "SyntaxError"
    UNBOUND_LOCAL = "UnboundLocal"
    NAME_ERROR = "NameError"
    ZERO_DIVISION = "ZeroDivision"
    TYPE_ERROR = "TypeError"
    TIMEOUT = "Timeout"
    RESOURCE_LIMIT = "ResourceLimit"
    OTHER = "Other"


# Classification uses only the exception class name reported by the runner.
_EXCEPTION_KINDS = {
    "SyntaxError": ErrorKind.SYNTAX_ERROR,
    "IndentationError": ErrorKind.SYNTAX_ERROR,
    "TabError": ErrorKind.SYNTAX_ERROR,
    "UnboundLocalError": ErrorKind.UNBOUND_LOCAL,
    "NameError": ErrorKind.NAME_ERROR,
    "ZeroDivisionError": ErrorKind.ZERO_DIVISION,
    "TypeError": ErrorKind.TYPE_ERROR,
    "MemoryError": ErrorKind.RESOURCE_LIMIT,
    "RecursionError": ErrorKind.RESOURCE_LIMIT,
}


def classify_exception(class_name: str) -> ErrorKind:
    return _EXCEPTION_KINDS.get(class_name, ErrorKind.OTHER)


@dataclass(frozen=True)
class VerificationProgram:
    code: str
    language_tag: str = "python"

    def __post_init__(self):
        if not self.code.strip():
            raise EmptyProgram("verification program is empty")


@dataclass(frozen=True)
class SandboxLimits:
    timeout_s: float = 10.0
    mem_mib: int = 512


@dataclass(frozen=True)
class ExecutionResult:
    status: ExecStatus
    answer: Answer | None
    stdout: str  # raw child stdout, capped at 64 KiB
    error_kind: ErrorKind | None = None
    traceback_excerpt: str | None = None
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if (self.status is ExecStatus.OK) != (self.answer is not None):
            raise ValueError("answer must be present exactly when status is ok")


_FENCE_RE = re.compile(r"```[ \t]*[A-Za-z0-9_+-]*[ \t]*\r?\n(.*?)```", re.DOTALL)


def strip_code_fences(completion: str) -> VerificationProgram:
    """Extract the first fenced code block, else treat the whole text as code."""
    m = _FENCE_RE.search(completion)
    if m:
        code = m.group(1)
    elif completion.lstrip().startswith("```"):
        # Unterminated fence: drop the fence line, keep the rest.
        code = completion.lstrip().split("\n", 1)[1] if "\n" in completion.lstrip() else ""
        code = code.rstrip().rstrip("`")
    else:
        code = completion
    code = code.strip()
    if not code:
        raise EmptyProgram("no code remained after stripping fences")
    return VerificationProgram(code)


def resolve_runner_command(explicit: Sequence[str] | None = None) -> list[str]:
    """Locate the runner shim: explicit command, env var, or PATH lookup.

    Paths are absolutized because the child runs in a scratch directory.
    """
    if explicit:
        return list(explicit)
    configured = os.environ.get(RUNNER_ENV)
    if configured:
        if os.path.isfile(configured):
            return [sys.executable, "-I", os.path.abspath(configured)]
        return shlex.split(configured)
    script = shutil.which(RUNNER_SCRIPT_NAME)
    if script:
        return [script]
    raise SandboxUnavailable(
        f"no runner shim found: set {RUNNER_ENV} or install {RUNNER_SCRIPT_NAME}"
    )


class CodeSandbox:
    """Executes programs via the runner shim, one isolated child per call.

    Safe for concurrent use up to ``max_concurrent`` in-flight executions;
    each call owns its child process and scratch directory exclusively.
    """

    def __init__(
        self,
        runner_cmd: Sequence[str] | None = None,
        limits: SandboxLimits | None = None,
        max_concurrent: int = 4,
    ):
        self._runner_cmd = list(runner_cmd) if runner_cmd else None
        self.limits = limits if limits is not None else SandboxLimits()
        self._gate = threading.BoundedSemaphore(max_concurrent)

    def execute(
        self, prog: VerificationProgram, limits: SandboxLimits | None = None
    ) -> ExecutionResult:
        limits = limits if limits is not None else self.limits
        cmd = resolve_runner_command(self._runner_cmd)
        with self._gate:
            return self._run_child(prog, cmd, limits)

    def _run_child(
        self, prog: VerificationProgram, cmd: list[str], limits: SandboxLimits
    ) -> ExecutionResult:
        start = time.monotonic()
        with tempfile.TemporaryDirectory(prefix="tuplereason-exec-") as scratch:
            env = {
                "PATH": os.environ.get("PATH", ""),
                "HOME": scratch,
                "TMPDIR": scratch,
                "LANG": "C.UTF-8",
                "PYTHONDONTWRITEBYTECODE": "1",
                MEM_LIMIT_ENV: str(limits.mem_mib),
            }
            try:
                proc = subprocess.Popen(
                    cmd,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    cwd=scratch,
                    env=env,
                    start_new_session=True,
                )
            except OSError as exc:
                raise SandboxUnavailable(f"cannot spawn runner {cmd!r}: {exc}") from exc
            try:
                out, _err = proc.communicate(
                    prog.code.encode("utf-8"), timeout=limits.timeout_s
                )
            except subprocess.TimeoutExpired:
                self._kill(proc)
                try:
                    out, _err = proc.communicate(timeout=KILL_GRACE_S)
                except (subprocess.TimeoutExpired, OSError):
                    out = b""
                return ExecutionResult(
                    status=ExecStatus.TIMEOUT,
                    answer=None,
                    stdout=_cap(out),
                    error_kind=ErrorKind.TIMEOUT,
                    traceback_excerpt=None,
                    wall_time=time.monotonic() - start,
                )
        return self._interpret(_cap(out), time.monotonic() - start)

    @staticmethod
    def _kill(proc: subprocess.Popen) -> None:
        try:
            os.killpg(os.getpgid(proc.pid), 9)
        except (ProcessLookupError, PermissionError, OSError):
            try:
                proc.kill()
            except OSError:
                pass

    @staticmethod
    def _interpret(stdout: str, wall_time: float) -> ExecutionResult:
        def unparseable() -> ExecutionResult:
            return ExecutionResult(
                status=ExecStatus.OUTPUT_UNPARSEABLE,
                answer=None,
                stdout=stdout,
                error_kind=None,
                traceback_excerpt=None,
                wall_time=wall_time,
            )

        lines = [line for line in stdout.splitlines() if line.strip()]
        if len(lines) != 1:
            return unparseable()
        try:
            report = json.loads(lines[0])
        except ValueError:
            return unparseable()
        if not isinstance(report, dict):
            return unparseable()
        status = report.get("status")
        final_line = report.get("final_line")
        exception_class = report.get("exception_class")
        traceback_tail = report.get("traceback_tail")
        if status not in ("ok", "error") or not isinstance(final_line, str):
            return unparseable()
        if status == "ok":
            if exception_class is not None:
                return unparseable()
            answer = extract_answer(final_line)
            if answer is None:
                return unparseable()
            return ExecutionResult(
                status=ExecStatus.OK,
                answer=answer,
                stdout=stdout,
                wall_time=wall_time,
            )
        if not isinstance(exception_class, str) or not exception_class:
            return unparseable()
        return ExecutionResult(
            status=ExecStatus.ERROR,
            answer=None,
            stdout=stdout,
            error_kind=classify_exception(exception_class),
            traceback_excerpt=traceback_tail if isinstance(traceback_tail, str) else exception_class,
            wall_time=wall_time,
        )


def _cap(raw: bytes) -> str:
    return raw[:STDOUT_CAP_BYTES].decode("utf-8", errors="replace")
