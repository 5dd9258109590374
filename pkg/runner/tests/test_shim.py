"""Black-box tests for the runner shim, driven over the child protocol:
program on stdin, one JSON report line on stdout, always exit 0."""

from __future__ import annotations

import json
import random
import subprocess
import sys
from pathlib import Path

SHIM = Path(__file__).parents[1] / "src" / "tuplereason_runner" / "shim.py"


def run_shim(program: str | bytes, tmp_path: Path, timeout: float = 15.0, env: dict | None = None):
    payload = program.encode("utf-8") if isinstance(program, str) else program
    proc = subprocess.run(
        [sys.executable, "-I", str(SHIM)],
        input=payload,
        capture_output=True,
        cwd=tmp_path,
        timeout=timeout,
        env={"PATH": "", "TMPDIR": str(tmp_path), **(env or {})},
    )
    assert proc.returncode == 0, proc.stderr.decode(errors="replace")
    lines = [l for l in proc.stdout.decode("utf-8", "replace").splitlines() if l.strip()]
    assert len(lines) == 1, f"expected one report line, got {lines!r}"
    return json.loads(lines[0])


def assert_well_formed(report: dict) -> None:
    assert set(report) == {
        "status", "final_line", "exception_class", "traceback_tail", "printed_bytes"
    }
    assert report["status"] in ("ok", "error")
    if report["status"] == "ok":
        assert report["exception_class"] is None
    else:
        assert isinstance(report["exception_class"], str) and report["exception_class"]
    assert isinstance(report["final_line"], str)
    assert isinstance(report["printed_bytes"], int)


def test_simple_print(tmp_path):
    report = run_shim("print(6*7)", tmp_path)
    assert_well_formed(report)
    assert report == {
        "status": "ok",
        "final_line": "42",
        "exception_class": None,
        "traceback_tail": None,
        "printed_bytes": 3,
    }


def test_last_nonempty_line_wins(tmp_path):
    report = run_shim("print('working')\nprint()\nprint(99)\nprint('')", tmp_path)
    assert report["status"] == "ok"
    assert report["final_line"] == "99"


def test_unbound_local_reports_concrete_class(tmp_path):
    report = run_shim("def f():\n    x += 1\nf()", tmp_path)
    assert_well_formed(report)
    assert report["status"] == "error"
    assert report["exception_class"] == "UnboundLocalError"
    assert "x" in report["traceback_tail"]


def test_syntax_error(tmp_path):
    report = run_shim("def broken(:\n    pass", tmp_path)
    assert report["status"] == "error"
    assert report["exception_class"] == "SyntaxError"


def test_zero_division(tmp_path):
    report = run_shim("print(1/0)", tmp_path)
    assert report["status"] == "error"
    assert report["exception_class"] == "ZeroDivisionError"


def test_traceback_tail_is_bounded(tmp_path):
    program = "\n".join(
        ["def f0():", "    raise ValueError('deep')"]
        + [f"def f{i}():\n    f{i - 1}()" for i in range(1, 12)]
        + ["f11()"]
    )
    report = run_shim(program, tmp_path)
    assert report["exception_class"] == "ValueError"
    # 5 frames plus the exception line
    assert len(report["traceback_tail"].splitlines()) <= 11


def test_network_probe_denied(tmp_path):
    report = run_shim(
        "import socket\nsocket.socket().connect(('example.com', 80))", tmp_path
    )
    assert report["status"] == "error"
    assert report["exception_class"] == "PermissionError"


def test_dns_lookup_denied(tmp_path):
    report = run_shim("import socket\nsocket.getaddrinfo('example.com', 80)", tmp_path)
    assert report["status"] == "error"


def test_subprocess_denied(tmp_path):
    report = run_shim("import subprocess\nsubprocess.run(['ls'])", tmp_path)
    assert report["status"] == "error"
    assert report["exception_class"] == "PermissionError"


def test_write_inside_scratch_allowed(tmp_path):
    report = run_shim(
        "with open('notes.txt', 'w') as fh:\n    fh.write('fine')\nprint('done', 1)",
        tmp_path,
    )
    assert report["status"] == "ok"
    assert (tmp_path / "notes.txt").read_text() == "fine"


def test_write_outside_scratch_denied(tmp_path):
    victim = tmp_path.parent / "forbidden.txt"
    report = run_shim(f"open({str(victim)!r}, 'w').write('nope')", tmp_path)
    assert report["status"] == "error"
    assert report["exception_class"] == "PermissionError"
    assert not victim.exists()


def test_delete_outside_scratch_denied(tmp_path):
    victim = tmp_path.parent / "precious.txt"
    victim.write_text("keep me")
    try:
        report = run_shim(f"import os\nos.remove({str(victim)!r})", tmp_path)
        assert report["status"] == "error"
        assert victim.exists()
    finally:
        victim.unlink(missing_ok=True)


def test_direct_fd_writes_cannot_corrupt_report(tmp_path):
    report = run_shim(
        "import os\nos.write(1, b'{\"status\": \"ok\", \"fake\": true}\\n')\nprint(7)",
        tmp_path,
    )
    assert_well_formed(report)
    assert report["final_line"] == "7"
    assert report["printed_bytes"] > 2


def test_replacing_sys_stdout_does_not_break_report(tmp_path):
    report = run_shim("import sys, io\nsys.stdout = io.StringIO()\nprint('hidden')", tmp_path)
    assert_well_formed(report)
    assert report["status"] == "ok"
    assert report["final_line"] == ""


def test_closing_stdout_is_survivable(tmp_path):
    report = run_shim("import os\nos.close(1)\nx = 5", tmp_path)
    assert_well_formed(report)


def test_clean_sys_exit_is_ok(tmp_path):
    report = run_shim("print(3)\nimport sys\nsys.exit(0)", tmp_path)
    assert report["status"] == "ok"
    assert report["final_line"] == "3"


def test_nonzero_sys_exit_is_error(tmp_path):
    report = run_shim("import sys\nsys.exit(4)", tmp_path)
    assert report["status"] == "error"
    assert report["exception_class"] == "SystemExit"


def test_memory_limit_applies(tmp_path):
    report = run_shim(
        "x = bytearray(300 * 1024 * 1024)\nprint(len(x))",
        tmp_path,
        env={MEMORY_ENV: "64"},
    )
    assert report["status"] == "error"
    assert report["exception_class"] == "MemoryError"


MEMORY_ENV = "TUPLEREASON_MEM_MIB"


def test_final_line_found_behind_large_output(tmp_path):
    program = "for i in range(40000):\n    print('filler line', i)\nprint(7)"
    report = run_shim(program, tmp_path)
    assert report["status"] == "ok"
    assert report["final_line"] == "7"
    assert report["printed_bytes"] > 64 * 1024


def test_stdout_flood_is_capped_by_file_size_limit(tmp_path):
    program = "chunk = 'x' * (1024 * 1024)\nwhile True:\n    print(chunk)"
    report = run_shim(program, tmp_path, timeout=60.0)
    assert_well_formed(report)
    assert report["status"] == "error"
    assert report["exception_class"] == "OSError"
    assert report["printed_bytes"] <= 64 * 1024 * 1024


def test_single_huge_line_yields_a_bounded_report(tmp_path):
    program = "print('y' * 200000 + ' tail ends with 5')"
    proc = subprocess.run(
        [sys.executable, "-I", str(SHIM)],
        input=program.encode(),
        capture_output=True,
        cwd=tmp_path,
        timeout=30.0,
        env={"PATH": "", "TMPDIR": str(tmp_path)},
    )
    assert proc.returncode == 0
    assert len(proc.stdout) < 64 * 1024  # fits the host's stdout window
    report = json.loads(proc.stdout.decode())
    assert report["status"] == "ok"
    assert len(report["final_line"]) <= 4096
    assert report["final_line"].endswith("tail ends with 5")


def test_stderr_spam_never_reaches_the_host(tmp_path):
    program = (
        "import sys\n"
        "for i in range(20000):\n"
        "    print('noise', i, file=sys.stderr)\n"
        "print(11)"
    )
    payload = program.encode("utf-8")
    proc = subprocess.run(
        [sys.executable, "-I", str(SHIM)],
        input=payload,
        capture_output=True,
        cwd=tmp_path,
        timeout=30.0,
        env={"PATH": "", "TMPDIR": str(tmp_path)},
    )
    assert proc.returncode == 0
    assert proc.stderr == b""  # the program's stderr stays in scratch
    report = json.loads(proc.stdout.decode())
    assert report["status"] == "ok"
    assert report["final_line"] == "11"


def test_fuzz_random_bytes_always_produce_a_report(tmp_path):
    rng = random.Random(1312)
    for _ in range(50):
        blob = rng.randbytes(rng.randint(1, 300))
        report = run_shim(blob, tmp_path)
        assert_well_formed(report)


def test_fuzz_random_ascii_always_produce_a_report(tmp_path):
    rng = random.Random(90210)
    for _ in range(50):
        text = "".join(chr(rng.randint(32, 126)) for _ in range(rng.randint(1, 120)))
        report = run_shim(text, tmp_path)
        assert_well_formed(report)
