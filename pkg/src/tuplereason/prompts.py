"""Prompt assembly for the three chat stages: tuple reasoning, program
verification, and the feedback retry.

Few-shot examples live in a directory of text records with [QUESTION],
[STEP1], and [STEP2] sections; the packaged default store holds eight
worked examples built from the first eight GSM8K training questions.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .answers import extract_answer
from .tuples import RelationTuple, extract_tuples, render_tuple

ROLES = ("system", "user", "assistant")

# Default five-shot subset of the eight-shot store (1-based positions).
FIVE_SHOT_POSITIONS = (1, 2, 3, 5, 8)

DEFAULT_STEP1_SYSTEM = (
    "You are a careful math assistant. Solve the word problem step by step. "
    "After each reasoning step, append that step's relation tuple on the same "
    "line: a parenthesized record such as (name of quantity, value) or "
    "(name of quantity, expression = result). Inside expressions use only "
    "+ - * / and refer to earlier quantities by their lowercase names with "
    "spaces replaced by underscores. End with a final line of the form "
    "'The answer is N.' where N is a plain number."
)

DEFAULT_STEP2_SYSTEM = (
    "You are a careful Python programmer. You are given a math word problem "
    "and the relation tuples that summarize its solution steps. Translate the "
    "tuples into a short Python program that computes the answer, keeping one "
    "assignment per tuple where possible. The last line of the program must "
    "print only the final answer."
)

DEFAULT_FEEDBACK_TEMPLATE = (
    "Your previous solution to this question may contain errors.\n"
    "\n"
    "Question: {question}\n"
    "\n"
    "Previous solution:\n"
    "{previous_reasoning}\n"
    "\n"
    "Please redo the solution carefully step by step, writing each step's "
    "relation tuple and ending with 'The answer is N.'"
)


class EmptyTuples(ValueError):
    """Raised when a verification prompt is requested without any tuples."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True)
class FewShotExample:
    """One worked example: a question, its tuple-annotated solution, and the
    verification program written against that solution's tuples."""

    question: str
    step1_solution: str
    step2_program: str

    def __post_init__(self):
        if not extract_tuples(self.step1_solution):
            raise ValueError("step1 solution contains no parseable relation tuple")
        if extract_answer(self.step1_solution) is None:
            raise ValueError("step1 solution declares no numeric answer")


@dataclass(frozen=True)
class PromptConfig:
    shots: tuple[FewShotExample, ...]
    step1_system: str = DEFAULT_STEP1_SYSTEM
    step2_system: str = DEFAULT_STEP2_SYSTEM
    feedback_template: str = DEFAULT_FEEDBACK_TEMPLATE

    def __post_init__(self):
        for placeholder in ("{question}", "{previous_reasoning}"):
            if placeholder not in self.feedback_template:
                raise ValueError(f"feedback template is missing {placeholder}")


def _tuple_block(question: str, tuples: list[RelationTuple] | tuple[RelationTuple, ...]) -> str:
    lines = [f"Question: {question}", "Relation tuples:"]
    lines.extend(render_tuple(t) for t in tuples)
    return "\n".join(lines)


def build_step1_prompt(cfg: PromptConfig, question: str) -> list[ChatMessage]:
    """System message, then one user/assistant pair per shot, then the question."""
    messages = [ChatMessage("system", cfg.step1_system)]
    for shot in cfg.shots:
        messages.append(ChatMessage("user", shot.question))
        messages.append(ChatMessage("assistant", shot.step1_solution))
    messages.append(ChatMessage("user", question))
    return messages


def build_step2_prompt(
    cfg: PromptConfig, question: str, tuples: list[RelationTuple]
) -> list[ChatMessage]:
    """Verification prompt: each user turn carries a question plus its tuples."""
    if not tuples:
        raise EmptyTuples("cannot build a verification prompt without tuples")
    messages = [ChatMessage("system", cfg.step2_system)]
    for shot in cfg.shots:
        shot_tuples = extract_tuples(shot.step1_solution)
        messages.append(ChatMessage("user", _tuple_block(shot.question, shot_tuples)))
        messages.append(ChatMessage("assistant", shot.step2_program))
    messages.append(ChatMessage("user", _tuple_block(question, tuples)))
    return messages


def build_feedback_prompt(
    cfg: PromptConfig, question: str, previous: str
) -> list[ChatMessage]:
    """Step-1 context plus one more user turn embedding the previous attempt."""
    if not previous.strip():
        raise ValueError("previous reasoning must be non-empty")
    messages = build_step1_prompt(cfg, question)
    feedback = cfg.feedback_template.format(
        question=question, previous_reasoning=previous
    )
    messages.append(ChatMessage("user", feedback))
    return messages


# ---------------------------------------------------------------------------
# Shot store
# ---------------------------------------------------------------------------

_SECTIONS = ("QUESTION", "STEP1", "STEP2")


def parse_shot_record(text: str) -> FewShotExample:
    """Parse one shot record with [QUESTION] / [STEP1] / [STEP2] sections."""
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in text.splitlines():
        header = line.strip()
        if header.startswith("[") and header.endswith("]") and header[1:-1] in _SECTIONS:
            current = sections.setdefault(header[1:-1], [])
            continue
        if current is not None:
            current.append(line)
    missing = [name for name in _SECTIONS if name not in sections]
    if missing:
        raise ValueError(f"shot record is missing sections: {', '.join(missing)}")
    question, step1, step2 = ("\n".join(sections[name]).strip() for name in _SECTIONS)
    return FewShotExample(question, step1, step2)


def load_shot_store(path: Path) -> list[FewShotExample]:
    """Load every ``*.txt`` record under ``path``, ordered by filename."""
    records = sorted(p for p in Path(path).iterdir() if p.suffix == ".txt")
    if not records:
        raise ValueError(f"no shot records found in {path}")
    return [parse_shot_record(p.read_text(encoding="utf-8")) for p in records]


def select_shots(
    shots: list[FewShotExample],
    profile: str,
    five_shot_positions: tuple[int, ...] = FIVE_SHOT_POSITIONS,
) -> tuple[FewShotExample, ...]:
    """Pick the shot subset for a profile: ``eight`` (all) or ``five``."""
    if profile == "eight":
        return tuple(shots)
    if profile == "five":
        return tuple(shots[i - 1] for i in five_shot_positions)
    raise ValueError(f"unknown shots profile {profile!r}")


def default_prompt_config(profile: str = "eight") -> PromptConfig:
    """The packaged eight-shot store, optionally narrowed to the five-shot subset."""
    store = resources.files(__package__) / "shots"
    with resources.as_file(store) as path:
        shots = load_shot_store(path)
    return PromptConfig(shots=select_shots(shots, profile))
