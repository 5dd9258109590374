"""Adversarial-input properties: the text-facing surfaces must be total.

Model output is untrusted; extraction, trace parsing, and answer reading
may return nothing, but they must never raise.
"""

from __future__ import annotations

import math
import random

import pytest

from tuplereason.answers import extract_answer
from tuplereason.orchestrator import parse_trace
from tuplereason.sandbox import EmptyProgram, strip_code_fences
from tuplereason.tuples import Arithmetic, extract_tuples, parse_tuple, render_tuple

_POOL = (
    "(),= +-*/x×÷−0123456789. \n\t"
    "abcdefghijklmnopqrstuvwxyz"
    "ABCDEFG$%€£#`\"'[]{}@!?;:_~\\"
    "日本語πß"
)


def _random_text(rng: random.Random, size: int) -> str:
    return "".join(rng.choice(_POOL) for _ in range(size))


def test_extract_tuples_is_total_and_self_consistent():
    rng = random.Random(424242)
    for _ in range(2000):
        text = _random_text(rng, rng.randint(0, 160))
        found = extract_tuples(text)
        for t in found:
            assert len(t.fields) >= 2
            assert sum(isinstance(f, Arithmetic) for f in t.fields) <= 1
            start, end = t.source_span
            span_text = text[start:end]
            assert span_text.startswith("(") and span_text.endswith(")")
            assert parse_tuple(span_text) == t
            # Canonical rendering of anything extracted must reparse.
            assert parse_tuple(render_tuple(t)) == t


def test_extract_answer_is_total():
    rng = random.Random(7272)
    for _ in range(2000):
        text = _random_text(rng, rng.randint(0, 120))
        answer = extract_answer(text)
        if answer is not None:
            assert math.isfinite(answer.value)
            again = extract_answer(answer.raw)
            assert again is not None and again.value == answer.value


def test_parse_trace_is_total():
    rng = random.Random(99173)
    for _ in range(1000):
        text = _random_text(rng, rng.randint(0, 200))
        trace = parse_trace(text)
        assert trace.raw_text == text
        if text.strip():
            assert len(trace.steps) >= 1
        for line, attached in trace.steps:
            assert line.strip()
            if attached is not None:
                assert len(attached.fields) >= 2


def test_strip_code_fences_is_total_modulo_empty():
    rng = random.Random(515151)
    for _ in range(1000):
        text = _random_text(rng, rng.randint(0, 120))
        if rng.random() < 0.3:
            text = f"```python\n{text}\n```"
        try:
            prog = strip_code_fences(text)
        except EmptyProgram:
            continue
        assert prog.code.strip()
