"""Deterministic test doubles: a pure stub executor, scripted chat clients,
and the fault-injecting client used by the feedback-efficacy check."""

from __future__ import annotations

import random
import re
import threading

from tuplereason.client import ChatClient
from tuplereason.sandbox import (
    ErrorKind,
    ExecStatus,
    ExecutionResult,
    VerificationProgram,
)
from tuplereason.answers import extract_answer


class StubExecutor:
    """Interprets a tiny directive language instead of spawning a sandbox.

    ``print(<number>)`` succeeds with that answer; ``1/0`` fails with a
    division error; ``while True`` times out; anything else is an opaque
    failure. Pure and deterministic, wall_time always zero.
    """

    _PRINT_RE = re.compile(r"print\((-?\d+(?:\.\d+)?)\)\s*$")

    def execute(self, prog: VerificationProgram) -> ExecutionResult:
        code = prog.code
        if "while True" in code:
            return ExecutionResult(ExecStatus.TIMEOUT, None, "", ErrorKind.TIMEOUT, None, 0.0)
        if "1/0" in code:
            return ExecutionResult(
                ExecStatus.ERROR, None, "", ErrorKind.ZERO_DIVISION,
                "ZeroDivisionError: division by zero", 0.0,
            )
        m = self._PRINT_RE.search(code)
        if m:
            answer = extract_answer(m.group(1))
            return ExecutionResult(ExecStatus.OK, answer, m.group(1), None, None, 0.0)
        return ExecutionResult(
            ExecStatus.ERROR, None, "", ErrorKind.OTHER, "RuntimeError: stub fallthrough", 0.0
        )


class QueueClient(ChatClient):
    """Returns canned responses strictly in call order."""

    def __init__(self, responses: list[str]):
        super().__init__()
        self.responses = list(responses)
        self.requests = []

    def _complete(self, messages, params):
        self.requests.append((tuple(messages), params))
        if not self.responses:
            raise AssertionError("queue client ran out of scripted responses")
        return self.responses.pop(0)


_QID_RE = re.compile(r"\[Q(\d+)\]")


def classify_request(messages) -> tuple[str, str]:
    """Return (question_id, stage) for a request built by the prompt module.

    The question text must carry a ``[Qnn]`` marker. Stage is ``step1``,
    ``step2``, or ``feedback``, recognized from the final user message.
    """
    last = messages[-1].content
    m = _QID_RE.search(last)
    if m is None:
        raise AssertionError(f"no question marker in request: {last[:80]!r}")
    qid = f"Q{int(m.group(1)):02d}"
    if "Previous solution:" in last:
        return qid, "feedback"
    if "Relation tuples:" in last:
        return qid, "step2"
    return qid, "step1"


class ScenarioClient(ChatClient):
    """Plays back per-question attempt scripts.

    ``scripts`` maps question id to a list over attempts of
    (step1_completion, step2_completion_or_None).
    """

    def __init__(self, scripts: dict[str, list[tuple[str, str | None]]]):
        super().__init__()
        self.scripts = scripts
        self._attempt: dict[str, int] = {}
        self._lock = threading.Lock()

    def _complete(self, messages, params):
        qid, stage = classify_request(messages)
        with self._lock:
            if stage in ("step1", "feedback"):
                index = self._attempt.get(qid, 0)
                self._attempt[qid] = index + 1
                expected = "step1" if index == 0 else "feedback"
                assert stage == expected, f"{qid}: got {stage} on attempt {index + 1}"
                return self.scripts[qid][index][0]
            index = self._attempt[qid] - 1
            step2 = self.scripts[qid][index][1]
            assert step2 is not None, f"{qid}: unscripted step2 on attempt {index + 1}"
            return step2


def step1_text(answer: float, name: str = "total") -> str:
    value = int(answer) if float(answer).is_integer() else answer
    return (
        f"Counting everything gives the {name}. ({name}, {value})\n"
        f"The answer is {value}."
    )


def step2_text(answer: float) -> str:
    value = int(answer) if float(answer).is_integer() else answer
    return f"```python\nprint({value})\n```"


class FaultInjectingClient(ChatClient):
    """Scripted model with seeded fault rates for the efficacy property.

    Per question: the first attempt is wrong with probability 0.3; each
    verification program prints the true answer with probability 0.9 (else
    the wrong answer); each feedback attempt repairs a wrong state with
    probability 0.5 and never breaks a correct one.
    """

    def __init__(self, seed: int, golds: dict[str, float], max_attempts: int = 3):
        super().__init__()
        rng = random.Random(seed)
        self._golds = golds
        self._wrong = {q: g + 1 for q, g in golds.items()}
        self._step1_wrong = {q: rng.random() < 0.3 for q in golds}
        self._step2_right = {
            q: [rng.random() < 0.9 for _ in range(max_attempts)] for q in golds
        }
        self._feedback_fix = {
            q: [rng.random() < 0.5 for _ in range(max_attempts)] for q in golds
        }
        self._attempt: dict[str, int] = {}
        self._lock = threading.Lock()

    def _state_is_right(self, qid: str, attempt: int) -> bool:
        right = not self._step1_wrong[qid]
        for k in range(attempt):
            if not right and self._feedback_fix[qid][k]:
                right = True
        return right

    def _complete(self, messages, params):
        qid, stage = classify_request(messages)
        with self._lock:
            if stage in ("step1", "feedback"):
                attempt = self._attempt.get(qid, 0)
                self._attempt[qid] = attempt + 1
                value = (
                    self._golds[qid]
                    if self._state_is_right(qid, attempt)
                    else self._wrong[qid]
                )
                return step1_text(value)
            attempt = self._attempt[qid] - 1
            value = (
                self._golds[qid]
                if self._step2_right[qid][attempt]
                else self._wrong[qid]
            )
            return step2_text(value)
