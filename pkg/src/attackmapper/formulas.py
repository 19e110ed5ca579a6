"""Arithmetic formula evaluation for catalog metric definitions.

Formulas are infix expressions over named measures, e.g. ``(M1 + M2) / M3``.
Supported: binary + - * /, parentheses, nonnegative real literals, and
identifiers. All binary operators are left-associative; * and / bind
tighter than + and -. There is no unary minus.

Evaluation compiles to postfix once (shunting yard) and replays the
postfix program against a measure binding. Operations apply in a fixed
left-to-right order, so repeated evaluation of one formula against equal
bindings is bit-for-bit reproducible.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import BindingError, ParseError, UndefinedMetricError

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/()]))"
)

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


@dataclass(frozen=True)
class Token:
    kind: str  # "number" | "name" | "op"
    text: str
    position: int


def tokenize_formula(formula: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(formula):
        match = _TOKEN_RE.match(formula, pos)
        if match is None:
            rest = formula[pos:]
            stripped = rest.lstrip()
            if not stripped:
                break
            offset = pos + len(rest) - len(stripped)
            raise ParseError(
                f"unexpected character {stripped[0]!r} in formula at offset {offset}",
                detail={"formula": formula},
            )
        kind = match.lastgroup
        assert kind is not None
        tokens.append(Token(kind, match.group(kind), match.start(kind)))
        pos = match.end()
    return tokens


def compile_formula(formula: str) -> tuple[Token, ...]:
    """Translate infix to a postfix token program.

    Raises ParseError on malformed input: empty formulas, adjacent
    operands, dangling operators, or unbalanced parentheses.
    """
    tokens = tokenize_formula(formula)
    if not tokens:
        raise ParseError("formula is empty", detail={"formula": formula})

    output: list[Token] = []
    stack: list[Token] = []
    # expect_operand tracks parser state: True when the next token must
    # start an operand, False when it must be an operator or ')'.
    expect_operand = True
    for token in tokens:
        if token.kind in ("number", "name"):
            if not expect_operand:
                raise ParseError(
                    f"operand {token.text!r} follows an operand at offset {token.position}",
                    detail={"formula": formula},
                )
            output.append(token)
            expect_operand = False
        elif token.text == "(":
            if not expect_operand:
                raise ParseError(
                    f"'(' follows an operand at offset {token.position}",
                    detail={"formula": formula},
                )
            stack.append(token)
        elif token.text == ")":
            if expect_operand:
                raise ParseError(
                    f"')' follows an operator at offset {token.position}",
                    detail={"formula": formula},
                )
            while stack and stack[-1].text != "(":
                output.append(stack.pop())
            if not stack:
                raise ParseError(
                    f"unmatched ')' at offset {token.position}",
                    detail={"formula": formula},
                )
            stack.pop()
        else:
            if expect_operand:
                raise ParseError(
                    f"operator {token.text!r} needs a left operand at offset {token.position}",
                    detail={"formula": formula},
                )
            while (
                stack
                and stack[-1].text != "("
                and _PRECEDENCE[stack[-1].text] >= _PRECEDENCE[token.text]
            ):
                output.append(stack.pop())
            stack.append(token)
            expect_operand = True
    if expect_operand:
        raise ParseError("formula ends with an operator", detail={"formula": formula})
    while stack:
        top = stack.pop()
        if top.text == "(":
            raise ParseError(
                f"unmatched '(' at offset {top.position}", detail={"formula": formula}
            )
        output.append(top)
    return tuple(output)


def formula_identifiers(formula: str) -> list[str]:
    """Identifiers referenced by a formula, in first-appearance order."""
    seen = []
    for token in compile_formula(formula):
        if token.kind == "name" and token.text not in seen:
            seen.append(token.text)
    return seen


def evaluate_postfix(
    program: Sequence[Token], measures: Mapping[str, float], *, formula: str = ""
) -> float:
    stack: list[float] = []
    for token in program:
        if token.kind == "number":
            stack.append(float(token.text))
        elif token.kind == "name":
            if token.text not in measures:
                raise BindingError(
                    f"formula references unbound measure {token.text!r}",
                    detail={"identifier": token.text, "formula": formula},
                )
            stack.append(float(measures[token.text]))
        else:
            right = stack.pop()
            left = stack.pop()
            if token.text == "+":
                stack.append(left + right)
            elif token.text == "-":
                stack.append(left - right)
            elif token.text == "*":
                stack.append(left * right)
            else:
                if right == 0.0:
                    raise UndefinedMetricError(
                        "formula divides by zero",
                        detail={"formula": formula, "position": token.position},
                    )
                stack.append(left / right)
    assert len(stack) == 1
    return stack[0]


def evaluate_formula(formula: str, measures: Mapping[str, float]) -> float:
    """Parse and evaluate in one step. See module docstring for semantics."""
    return evaluate_postfix(compile_formula(formula), measures, formula=formula)
