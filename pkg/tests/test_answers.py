from __future__ import annotations

import random

import pytest

from tuplereason.answers import Answer, answers_equal, extract_answer, grade


@pytest.mark.parametrize(
    "text,value",
    [
        ("So the answer is 72.", 72.0),
        ("The answer is $1,234.50", 1234.5),
        ("The ANSWER IS 7 apples", 7.0),
        ("First guess 3, but the answer is 5. Actually the answer is 9.", 9.0),
        ("prices rose 50% then fell", 50.0),
        ("the total came to 1,000,000 coins", 1000000.0),
        ("Weng earned .5 dollars", 0.5),
        ("it dropped to -4 degrees", -4.0),
        ("answer is 72. Trailing prose 13", 72.0),
        ("no marker, last number wins: 3 then 8", 8.0),
    ],
)
def test_extract_answer_values(text, value):
    answer = extract_answer(text)
    assert answer is not None
    assert answer.value == value


def test_extract_answer_absent():
    assert extract_answer("no numbers at all") is None
    assert extract_answer("") is None


def test_overflowing_tokens_are_skipped():
    assert extract_answer("the answer is 1e400") is None
    # A later finite token still wins over an overflowing one.
    assert extract_answer("the answer is 1e400 or maybe 6").value == 6.0
    assert extract_answer("9e999 happened, then 4").value == 4.0


def test_marker_without_following_number_falls_back_to_last_number():
    assert extract_answer("we had 41 items; the answer is unclear").value == 41.0


def test_trailing_period_not_part_of_number():
    assert extract_answer("the answer is 72.").raw == "72"


def test_extract_answer_idempotent_on_raw():
    rng = random.Random(5)
    texts = [
        "the answer is $1,234.50",
        "value -3.25 stands",
        "roughly 18% remained",
        "count was 1,000",
    ]
    for text in texts:
        first = extract_answer(text)
        again = extract_answer(first.raw)
        assert again is not None and again.value == first.value
    for _ in range(200):
        value = rng.choice([rng.randint(-999, 9999), round(rng.uniform(-100, 100), 3)])
        first = extract_answer(f"the answer is {value}")
        again = extract_answer(first.raw)
        assert again.value == first.value == pytest.approx(float(value))


def test_answer_must_be_finite():
    with pytest.raises(ValueError):
        Answer(float("inf"), "inf")
    with pytest.raises(ValueError):
        Answer(float("nan"), "nan")


def test_answers_equal_examples():
    assert answers_equal(Answer(72, "72"), Answer(72.0, "72.0"))
    assert answers_equal(Answer(24, "24"), Answer(24.0000001, "24.0000001"))
    assert not answers_equal(Answer(24, "24"), Answer(25, "25"))


def test_answers_equal_reflexive_and_symmetric():
    rng = random.Random(11)
    values = [rng.uniform(-1e6, 1e6) for _ in range(300)]
    values += [0.0, 1e-9, -1e-9, 2e6, 2e6 - 2.0, 123.0000001, 123.0]
    answers = [Answer(v, str(v)) for v in values]
    for a in answers:
        assert answers_equal(a, a)
    for _ in range(1000):
        a, b = rng.choice(answers), rng.choice(answers)
        assert answers_equal(a, b) == answers_equal(b, a)


def test_grade():
    gold = Answer(72, "72")
    assert grade(Answer(72.0, "72"), gold)
    assert not grade(None, gold)
    assert grade(extract_answer("18.0"), Answer(18, "18"))
    assert not grade(Answer(71, "71"), gold)
