"""The per-question control loop: tuple reasoning, program verification,
consistency checking, bounded dynamic feedback, and answer pooling.

An attempt is consistent when its declared answer numerically matches the
answer printed by the executed verification program. Inconsistent attempts
trigger a feedback retry that embeds the previous reasoning, up to
``max_attempts`` attempts in total. Every realized answer (declared and
verified, in order) is pooled, and the final answer is the pool's mode
with ties broken by earliest first occurrence.
"""

from __future__ import annotations

from dataclasses import dataclass

from .answers import Answer, answers_equal, extract_answer
from .client import ChatClient, GenParams
from .prompts import (
    PromptConfig,
    build_feedback_prompt,
    build_step1_prompt,
    build_step2_prompt,
)
from .sandbox import (
    EmptyProgram,
    ExecStatus,
    ExecutionResult,
    VerificationProgram,
    strip_code_fences,
)
from .tuples import RelationTuple, extract_tuples

DEFAULT_MAX_ATTEMPTS = 3


@dataclass(frozen=True)
class ReasoningTrace:
    """A completion split into lines, each line carrying its tuple if any."""

    steps: tuple[tuple[str, RelationTuple | None], ...]
    declared_answer: Answer | None
    raw_text: str


@dataclass(frozen=True)
class AttemptRecord:
    attempt_index: int  # 1-based
    trace: ReasoningTrace
    tuples: tuple[RelationTuple, ...]
    program: VerificationProgram | None
    exec_result: ExecutionResult | None
    consistent: bool

    def __post_init__(self):
        if self.consistent:
            declared = self.trace.declared_answer
            verified = self.exec_result.answer if self.exec_result else None
            if declared is None or verified is None or not answers_equal(declared, verified):
                raise ValueError("a consistent attempt needs matching declared and verified answers")


@dataclass(frozen=True)
class QuestionRun:
    question_id: str
    attempts: tuple[AttemptRecord, ...]
    pooled_answers: tuple[Answer, ...]
    final_answer: Answer | None

    @property
    def feedback_count(self) -> int:
        return len(self.attempts) - 1


@dataclass(frozen=True)
class LoopConfig:
    prompts: PromptConfig
    step1_params: GenParams
    step2_params: GenParams
    feedback_params: GenParams | None = None  # defaults to step1_params
    max_attempts: int = DEFAULT_MAX_ATTEMPTS

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")


def parse_trace(completion: str) -> ReasoningTrace:
    """Split a completion into steps and attach each extracted tuple to the
    line that contains it."""
    tuples = extract_tuples(completion)
    steps: list[tuple[str, RelationTuple | None]] = []
    offset = 0
    pending = list(tuples)
    for line in completion.splitlines(keepends=True):
        start, end = offset, offset + len(line)
        offset = end
        if not line.strip():
            continue
        attached = None
        if pending and start <= pending[0].source_span[0] < end:
            attached = pending.pop(0)
            # Extra tuples on the same line stay in the extraction list but
            # are not attached to a step.
            while pending and pending[0].source_span[0] < end:
                pending.pop(0)
        steps.append((line.strip(), attached))
    return ReasoningTrace(tuple(steps), extract_answer(completion), completion)


def run_question(
    question_id: str,
    question: str,
    *,
    client: ChatClient,
    executor,
    config: LoopConfig,
) -> QuestionRun:
    """Run the full loop for one question.

    ``executor`` needs an ``execute(program) -> ExecutionResult`` method.
    Transport and sandbox-availability errors propagate; program failures
    are recorded in the attempt and count as inconsistent.
    """
    feedback_params = config.feedback_params or config.step1_params
    attempts: list[AttemptRecord] = []
    pooled: list[Answer] = []
    previous_raw: str | None = None

    for attempt_index in range(1, config.max_attempts + 1):
        if attempt_index == 1:
            messages = build_step1_prompt(config.prompts, question)
            completion = client.chat(messages, config.step1_params, kind="step1")
        else:
            messages = build_feedback_prompt(config.prompts, question, previous_raw)
            completion = client.chat(messages, feedback_params, kind="feedback")
        trace = parse_trace(completion)
        previous_raw = trace.raw_text if trace.raw_text.strip() else "(empty completion)"
        tuples = tuple(extract_tuples(completion))
        if trace.declared_answer is not None:
            pooled.append(trace.declared_answer)

        program: VerificationProgram | None = None
        exec_result: ExecutionResult | None = None
        consistent = False
        if tuples and trace.declared_answer is not None:
            step2_messages = build_step2_prompt(config.prompts, question, list(tuples))
            step2_completion = client.chat(step2_messages, config.step2_params, kind="step2")
            try:
                program = strip_code_fences(step2_completion)
            except EmptyProgram:
                program = None
            if program is not None:
                exec_result = executor.execute(program)
                if exec_result.status is ExecStatus.OK:
                    pooled.append(exec_result.answer)
                    consistent = answers_equal(trace.declared_answer, exec_result.answer)

        attempts.append(
            AttemptRecord(attempt_index, trace, tuples, program, exec_result, consistent)
        )
        if consistent:
            break

    return QuestionRun(
        question_id=question_id,
        attempts=tuple(attempts),
        pooled_answers=tuple(pooled),
        final_answer=majority_vote(pooled),
    )


def majority_vote(pool: list[Answer] | tuple[Answer, ...]) -> Answer | None:
    """Mode of the pool under tolerance-based equality; ties go to the class
    whose first member appeared earliest; empty pools yield None."""
    representatives: list[Answer] = []
    counts: list[int] = []
    for answer in pool:
        for i, rep in enumerate(representatives):
            if answers_equal(answer, rep):
                counts[i] += 1
                break
        else:
            representatives.append(answer)
            counts.append(1)
    if not representatives:
        return None
    best = max(range(len(representatives)), key=lambda i: (counts[i], -i))
    return representatives[best]


def run_self_consistency(
    question_id: str,
    question: str,
    *,
    client: ChatClient,
    executor,
    config: LoopConfig,
    paths: int,
) -> tuple[Answer | None, list[QuestionRun]]:
    """Run ``paths`` independent loops and vote over the per-path finals.

    Returns the voted answer together with every path's run for reporting.
    """
    if paths < 1:
        raise ValueError("paths must be at least 1")
    if paths > 1 and config.step1_params.temperature <= 0.0:
        raise ValueError("multi-path runs need a sampling temperature above zero")
    runs = [
        run_question(
            f"{question_id}#path{i}" if paths > 1 else question_id,
            question,
            client=client,
            executor=executor,
            config=config,
        )
        for i in range(paths)
    ]
    finals = [r.final_answer for r in runs if r.final_answer is not None]
    return majority_vote(finals), runs
