"""Dataset ingestion, run driving, metric aggregation, and persistence.

Every source schema is normalized at the edge into DatasetExample records;
the pipeline downstream is format-agnostic. Reports carry integer counts
and recompute all percentages at serialization time.
"""

from __future__ import annotations

import json
import math
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .answers import Answer, extract_answer, grade
from .client import CallTally, ChatClient
from .orchestrator import (
    AttemptRecord,
    LoopConfig,
    QuestionRun,
    parse_trace,
    run_question,
    run_self_consistency,
)
from .sandbox import ErrorKind, ExecStatus, ExecutionResult, VerificationProgram
from .tuples import extract_tuples

DEFAULT_WORKERS = 4
HISTOGRAM_BINS = (0, 1, 2, 3)


class FormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


class MissingGold(FormatError):
    pass


class IdMismatch(ValueError):
    pass


@dataclass(frozen=True)
class DatasetExample:
    id: str
    question: str
    gold: Answer


@dataclass(frozen=True)
class QuestionOutcome:
    """One dataset question's result: its run paths and the chosen answer.

    Plain runs have a single path; self-consistency runs carry one per path
    with the final answer voted across them.
    """

    question_id: str
    paths: tuple[QuestionRun, ...]
    final_answer: Answer | None

    @classmethod
    def from_run(cls, run: QuestionRun) -> "QuestionOutcome":
        return cls(run.question_id, (run,), run.final_answer)


# ---------------------------------------------------------------------------
# Dataset loaders
# ---------------------------------------------------------------------------


def _gold_from_text(text: str, line: int) -> Answer:
    answer = extract_answer(text)
    if answer is None:
        raise MissingGold("no numeric gold answer", line)
    return answer


def _iter_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for i, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                yield i, json.loads(raw)
            except ValueError as exc:
                raise FormatError(f"bad JSON record: {exc}", i) from exc


def _load_gsm8k(path: Path) -> list[DatasetExample]:
    examples = []
    for i, record in _iter_jsonl(path):
        question = record.get("question")
        solution = record.get("answer")
        if not question or solution is None:
            raise FormatError("record needs 'question' and 'answer' fields", i)
        marker = solution.rfind("#### ")
        if marker == -1:
            raise MissingGold("no '#### ' gold marker in solution", i)
        gold = _gold_from_text(solution[marker + 5 :].splitlines()[0], i)
        examples.append(DatasetExample(record.get("id", f"gsm8k-{i:04d}"), question, gold))
    return examples


def _load_svamp(path: Path) -> list[DatasetExample]:
    try:
        records = json.loads(Path(path).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise FormatError(f"bad JSON document: {exc}") from exc
    if not isinstance(records, list):
        raise FormatError("expected a JSON array of records")
    examples = []
    for i, record in enumerate(records, start=1):
        body = (record.get("Body") or "").strip()
        question = (record.get("Question") or "").strip()
        if not question:
            raise FormatError("record needs a 'Question' field", i)
        if "Answer" not in record:
            raise MissingGold("record has no 'Answer' field", i)
        try:
            value = float(record["Answer"])
        except (TypeError, ValueError) as exc:
            raise MissingGold(f"non-numeric answer: {record['Answer']!r}", i) from exc
        if not math.isfinite(value):
            raise MissingGold(f"non-finite answer: {value!r}", i)
        text = f"{body} {question}".strip()
        examples.append(
            DatasetExample(str(record.get("ID", f"svamp-{i:04d}")), text, Answer(value, str(record["Answer"])))
        )
    return examples


def _load_asdiv(path: Path) -> list[DatasetExample]:
    examples = []
    for i, record in _iter_jsonl(path):
        body = (record.get("body") or record.get("Body") or "").strip()
        question = (record.get("question") or record.get("Question") or "").strip()
        answer_text = record.get("answer") or record.get("Answer")
        if not question:
            raise FormatError("record needs a 'question' field", i)
        if answer_text is None:
            raise MissingGold("record has no 'answer' field", i)
        gold = _gold_from_text(str(answer_text), i)
        text = f"{body} {question}".strip()
        examples.append(DatasetExample(str(record.get("id", f"asdiv-{i:04d}")), text, gold))
    return examples


def _load_mawps(path: Path) -> list[DatasetExample]:
    """MAWPS-family files (SingleOP, SingleEQ, AddSub, MultiArith): a JSON
    array or JSONL of {iIndex, sQuestion, lSolutions} records."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        try:
            rows = list(enumerate(json.loads(text), start=1))
        except ValueError as exc:
            raise FormatError(f"bad JSON document: {exc}") from exc
    else:
        rows = list(_iter_jsonl(path))
    examples = []
    for i, record in rows:
        question = (record.get("sQuestion") or "").strip()
        solutions = record.get("lSolutions")
        if not question:
            raise FormatError("record needs an 'sQuestion' field", i)
        if not solutions:
            raise MissingGold("record has no 'lSolutions' entry", i)
        try:
            value = float(solutions[0])
        except (TypeError, ValueError) as exc:
            raise MissingGold(f"non-numeric solution: {solutions[0]!r}", i) from exc
        if not math.isfinite(value):
            raise MissingGold(f"non-finite solution: {value!r}", i)
        examples.append(
            DatasetExample(str(record.get("iIndex", f"mawps-{i:04d}")), question, Answer(value, str(solutions[0])))
        )
    return examples


FORMAT_LOADERS: dict[str, Callable[[Path], list[DatasetExample]]] = {
    "gsm8k": _load_gsm8k,
    "svamp": _load_svamp,
    "asdiv": _load_asdiv,
    "mawps": _load_mawps,
}


def load_dataset(path: Path | str, format_name: str) -> list[DatasetExample]:
    try:
        loader = FORMAT_LOADERS[format_name]
    except KeyError:
        raise FormatError(
            f"unknown format {format_name!r}; known: {', '.join(sorted(FORMAT_LOADERS))}"
        ) from None
    return loader(Path(path))


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunReport:
    dataset_name: str
    n_total: int
    n_correct: int
    feedback_histogram: dict[int, int]
    error_kind_counts: dict[str, int]
    llm_call_tally: dict[str, int]
    config_snapshot: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_total if self.n_total else 0.0

    @property
    def feedback_share_percent(self) -> float:
        if not self.n_total:
            return 0.0
        needing = sum(count for rounds, count in self.feedback_histogram.items() if rounds > 0)
        return round(100.0 * needing / self.n_total, 1)

    def to_dict(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "n_total": self.n_total,
            "n_correct": self.n_correct,
            "accuracy": self.accuracy,
            "feedback_histogram": {str(k): v for k, v in sorted(self.feedback_histogram.items())},
            "feedback_share_percent": self.feedback_share_percent,
            "error_kind_counts": dict(sorted(self.error_kind_counts.items())),
            "llm_call_tally": self.llm_call_tally,
            "config_snapshot": self.config_snapshot,
        }

    def to_json_bytes(self) -> bytes:
        return (json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n").encode("utf-8")


def evaluate(
    runs: Sequence[QuestionRun | QuestionOutcome],
    golds: Sequence[DatasetExample],
    *,
    dataset_name: str = "dataset",
    call_tally: CallTally | None = None,
    config_snapshot: dict | None = None,
) -> RunReport:
    """Grade one run per gold (matched by id) and aggregate bookkeeping.

    With self-consistency outcomes, the feedback histogram counts the first
    path of each question; error kinds aggregate over every path.
    """
    outcomes = [
        r if isinstance(r, QuestionOutcome) else QuestionOutcome.from_run(r) for r in runs
    ]
    by_id = {o.question_id: o for o in outcomes}
    if len(by_id) != len(outcomes):
        raise IdMismatch("duplicate question ids in runs")
    gold_ids = {g.id for g in golds}
    if gold_ids != set(by_id):
        missing = sorted(gold_ids - set(by_id))[:3]
        extra = sorted(set(by_id) - gold_ids)[:3]
        raise IdMismatch(f"run/gold id mismatch (missing {missing}, extra {extra})")

    n_correct = 0
    histogram = Counter({b: 0 for b in HISTOGRAM_BINS})
    error_kinds: Counter[str] = Counter()
    for gold in golds:
        outcome = by_id[gold.id]
        if grade(outcome.final_answer, gold.gold):
            n_correct += 1
        histogram[outcome.paths[0].feedback_count] += 1
        for path in outcome.paths:
            for attempt in path.attempts:
                result = attempt.exec_result
                if result is not None and result.error_kind is not None:
                    error_kinds[result.error_kind.value] += 1

    tally = call_tally if call_tally is not None else CallTally()
    return RunReport(
        dataset_name=dataset_name,
        n_total=len(golds),
        n_correct=n_correct,
        feedback_histogram=dict(histogram),
        error_kind_counts=dict(error_kinds),
        llm_call_tally=tally.as_dict(),
        config_snapshot=config_snapshot or {},
    )


# ---------------------------------------------------------------------------
# Run driving
# ---------------------------------------------------------------------------


class RunLog:
    """Append-only JSONL persistence, one record per completed question."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.write_text("", encoding="utf-8")

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def run_examples(
    examples: Sequence[DatasetExample],
    *,
    client: ChatClient,
    executor,
    config: LoopConfig,
    sc_paths: int = 1,
    workers: int = DEFAULT_WORKERS,
    run_log: RunLog | None = None,
) -> list[QuestionOutcome]:
    """Process questions on a bounded worker pool; results in input order.

    Attempts within a question stay sequential (feedback depends on the
    previous attempt); only whole questions run concurrently.
    """

    def one(example: DatasetExample) -> QuestionOutcome:
        if sc_paths == 1:
            run = run_question(
                example.id, example.question, client=client, executor=executor, config=config
            )
            outcome = QuestionOutcome.from_run(run)
        else:
            final, paths = run_self_consistency(
                example.id,
                example.question,
                client=client,
                executor=executor,
                config=config,
                paths=sc_paths,
            )
            outcome = QuestionOutcome(example.id, tuple(paths), final)
        if run_log is not None:
            run_log.append(outcome_to_dict(outcome))
        return outcome

    if workers <= 1 or len(examples) <= 1:
        return [one(example) for example in examples]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, examples))


# ---------------------------------------------------------------------------
# Serialization (run log round-trips back into QuestionOutcome objects)
# ---------------------------------------------------------------------------


def _answer_to_dict(a: Answer | None) -> dict | None:
    return None if a is None else {"value": a.value, "raw": a.raw}


def _answer_from_dict(d: dict | None) -> Answer | None:
    return None if d is None else Answer(d["value"], d["raw"])


def _exec_to_dict(r: ExecutionResult | None) -> dict | None:
    if r is None:
        return None
    return {
        "status": r.status.value,
        "answer": _answer_to_dict(r.answer),
        "stdout": r.stdout,
        "error_kind": r.error_kind.value if r.error_kind else None,
        "traceback_excerpt": r.traceback_excerpt,
        "wall_time": r.wall_time,
    }


def _exec_from_dict(d: dict | None) -> ExecutionResult | None:
    if d is None:
        return None
    return ExecutionResult(
        status=ExecStatus(d["status"]),
        answer=_answer_from_dict(d["answer"]),
        stdout=d["stdout"],
        error_kind=ErrorKind(d["error_kind"]) if d["error_kind"] else None,
        traceback_excerpt=d["traceback_excerpt"],
        wall_time=d["wall_time"],
    )


def run_to_dict(run: QuestionRun) -> dict:
    return {
        "question_id": run.question_id,
        "final_answer": _answer_to_dict(run.final_answer),
        "pooled_answers": [_answer_to_dict(a) for a in run.pooled_answers],
        "attempts": [
            {
                "attempt_index": a.attempt_index,
                "raw_text": a.trace.raw_text,
                "declared_answer": _answer_to_dict(a.trace.declared_answer),
                "program": a.program.code if a.program else None,
                "exec_result": _exec_to_dict(a.exec_result),
                "consistent": a.consistent,
            }
            for a in run.attempts
        ],
    }


def run_from_dict(d: dict) -> QuestionRun:
    attempts = []
    for a in d["attempts"]:
        trace = parse_trace(a["raw_text"])
        attempts.append(
            AttemptRecord(
                attempt_index=a["attempt_index"],
                trace=trace,
                tuples=tuple(extract_tuples(a["raw_text"])),
                program=VerificationProgram(a["program"]) if a["program"] else None,
                exec_result=_exec_from_dict(a["exec_result"]),
                consistent=a["consistent"],
            )
        )
    return QuestionRun(
        question_id=d["question_id"],
        attempts=tuple(attempts),
        pooled_answers=tuple(_answer_from_dict(a) for a in d["pooled_answers"]),
        final_answer=_answer_from_dict(d["final_answer"]),
    )


def outcome_to_dict(outcome: QuestionOutcome) -> dict:
    return {
        "question_id": outcome.question_id,
        "final_answer": _answer_to_dict(outcome.final_answer),
        "paths": [run_to_dict(r) for r in outcome.paths],
    }


def outcome_from_dict(d: dict) -> QuestionOutcome:
    return QuestionOutcome(
        question_id=d["question_id"],
        paths=tuple(run_from_dict(r) for r in d["paths"]),
        final_answer=_answer_from_dict(d["final_answer"]),
    )


def load_run_log(path: Path | str) -> list[QuestionOutcome]:
    outcomes = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                outcomes.append(outcome_from_dict(json.loads(line)))
    return outcomes
