"""Independent reference implementations used only to cross-check the
package. These deliberately share no code with the implementations they
verify."""

from __future__ import annotations

from fractions import Fraction

from tuplereason.answers import Answer, answers_equal
from tuplereason.tuples import BinOp, Num, Var


def stack_eval(expr, bindings: dict[str, Fraction]) -> Fraction:
    """Brute-force expression interpreter: explicit postorder stack machine."""
    values: list[Fraction] = []
    work: list[tuple[str, object]] = [("visit", expr)]
    while work:
        action, node = work.pop()
        if action == "visit":
            if isinstance(node, BinOp):
                work.append(("apply", node.op))
                work.append(("visit", node.right))
                work.append(("visit", node.left))
            elif isinstance(node, Var):
                values.append(bindings[node.name])
            elif isinstance(node, Num):
                values.append(node.value)
            else:
                raise TypeError(f"unknown node {node!r}")
        else:
            right = values.pop()
            left = values.pop()
            if node == "+":
                values.append(left + right)
            elif node == "-":
                values.append(left - right)
            elif node == "*":
                values.append(left * right)
            elif node == "/":
                if right == 0:
                    raise ZeroDivisionError("stack_eval division by zero")
                values.append(left / right)
            else:
                raise ValueError(f"unknown operator {node!r}")
    assert len(values) == 1
    return values[0]


def counted_mode(pool: list[Answer], class_ids: list[int]) -> Answer | None:
    """Frequency count over generator-known equivalence classes; ties break
    to the class whose first member appears earliest."""
    assert len(pool) == len(class_ids)
    if not pool:
        return None
    counts: dict[int, int] = {}
    first_index: dict[int, int] = {}
    for i, cid in enumerate(class_ids):
        counts[cid] = counts.get(cid, 0) + 1
        first_index.setdefault(cid, i)
    best = max(counts, key=lambda cid: (counts[cid], -first_index[cid]))
    return pool[first_index[best]]


def assert_same_answer(a: Answer | None, b: Answer | None) -> None:
    if a is None or b is None:
        assert a is None and b is None
    else:
        assert answers_equal(a, b), (a, b)
