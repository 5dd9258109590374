"""Final-answer extraction, normalization, and equality for grading."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

_MARKER_RE = re.compile(r"answer is", re.IGNORECASE)

# One numeric token: optional sign and currency, digits with optional
# 3-digit thousands groups, optional decimals/exponent, optional percent.
_NUMBER_TOKEN_RE = re.compile(
    r"""
    [-+]?
    [$€£]?
    (?:
        \d{1,3}(?:,\d{3})+(?:\.\d+)?
      | \d+(?:\.\d+)?
      | \.\d+
    )
    (?:[eE][-+]?\d+)?
    %?
    """,
    re.VERBOSE,
)

REL_TOL = 1e-6
ABS_TOL = 1e-6


@dataclass(frozen=True)
class Answer:
    """A numeric answer plus the raw token it came from."""

    value: float
    raw: str

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"answer value must be finite, got {self.value!r}")


def _token_to_value(token: str) -> float | None:
    cleaned = token.replace(",", "").replace("%", "")
    cleaned = cleaned.lstrip("+").translate({ord(c): None for c in "$€£"})
    value = float(cleaned)
    # Overflowing exponents ("1e400") are not answers.
    return value if math.isfinite(value) else None


def extract_answer(text: str) -> Answer | None:
    """Pull the declared numeric answer out of free text.

    Prefers the first number after the last "answer is" marker; otherwise
    takes the last number anywhere. Currency symbols, thousands separators,
    percent signs, and trailing periods are stripped. Returns None when the
    text contains no finite number at all.
    """
    marker = None
    for marker in _MARKER_RE.finditer(text):
        pass
    if marker is not None:
        for m in _NUMBER_TOKEN_RE.finditer(text, marker.end()):
            value = _token_to_value(m.group())
            if value is not None:
                return Answer(value, m.group())
    best: Answer | None = None
    for m in _NUMBER_TOKEN_RE.finditer(text):
        value = _token_to_value(m.group())
        if value is not None:
            best = Answer(value, m.group())
    return best


def answers_equal(a: Answer, b: Answer) -> bool:
    """Numeric equality within 1e-6 relative tolerance (1e-6 absolute near zero)."""
    return math.isclose(a.value, b.value, rel_tol=REL_TOL, abs_tol=ABS_TOL)


def grade(predicted: Answer | None, gold: Answer) -> bool:
    """An absent prediction grades false; otherwise compare numerically."""
    if predicted is None:
        return False
    return answers_equal(predicted, gold)
