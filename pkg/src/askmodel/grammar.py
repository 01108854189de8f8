"""The SQL-like operation language: registry, parser, validator, canonical form.

Canonical form: space-separated lowercase clauses joined by infix `and`/`or`,
integers in plain decimal, strings double-quoted. Optional slots with defaults
are filled in at parse time, so a canonical string always spells them out
(e.g. `nlpattribute topk 3`); truly optional slots (a globaltopk class, the
`sentence` flag) are omitted when absent. Token positions in error messages
are 1-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import ParseError

INSTANCE_ACTIONS = frozenset(
    {"likelihood", "nlpattribute", "nlpcfe", "adversarial", "augment", "rationalize", "similar"}
)
CUSTOM_INPUT_ACTIONS = frozenset({"predict", "nlpattribute", "similar"})
FILTER_OPS = frozenset({"filter", "includes", "custominput"})
CONNECTIVES = frozenset({"and", "or"})
VALID_METRICS = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class SlotSpec:
    name: str
    type: str  # one of: id, number, class_names, data_type, metric, include_token, sentence_level, mode
    required: bool
    default: object = None


@dataclass(frozen=True)
class OperationSignature:
    name: str
    category: str
    slots: tuple[SlotSpec, ...] = ()
    supports_custom_input: bool = False

    def required_slots(self) -> tuple[SlotSpec, ...]:
        return tuple(s for s in self.slots if s.required)

    def optional_slots(self) -> tuple[SlotSpec, ...]:
        return tuple(s for s in self.slots if not s.required)


_REGISTRY: tuple[OperationSignature, ...] = (
    # filters
    OperationSignature("filter", "filter", (SlotSpec("id", "id", True),)),
    OperationSignature("includes", "filter", (SlotSpec("include_token", "include_token", True),)),
    OperationSignature("custominput", "filter", (), supports_custom_input=True),
    # prediction
    OperationSignature("predict", "prediction", (), supports_custom_input=True),
    OperationSignature("likelihood", "prediction"),
    OperationSignature("mistakes", "prediction", (SlotSpec("mode", "mode", False, "count"),)),
    OperationSignature("score", "prediction", (SlotSpec("metric", "metric", True),)),
    # data
    OperationSignature("show", "data"),
    OperationSignature("countdata", "data"),
    OperationSignature("label", "data"),
    # meta
    OperationSignature("data", "meta"),
    OperationSignature("model", "meta"),
    # about
    OperationSignature("function", "about"),
    OperationSignature("self", "about"),
    # attribution
    OperationSignature(
        "nlpattribute",
        "attribution",
        (
            SlotSpec("number", "number", False, 3),
            SlotSpec("sentence_level", "sentence_level", False, False),
        ),
        supports_custom_input=True,
    ),
    OperationSignature(
        "globaltopk",
        "attribution",
        (SlotSpec("number", "number", False, 3), SlotSpec("class_names", "class_names", False)),
    ),
    # perturbation
    OperationSignature("nlpcfe", "perturbation", (SlotSpec("number", "number", False, 1),)),
    OperationSignature("adversarial", "perturbation"),
    OperationSignature("augment", "perturbation"),
    # rationalization
    OperationSignature("rationalize", "rationalization"),
    # nlu
    OperationSignature("keywords", "nlu", (SlotSpec("number", "number", False, 3),)),
    OperationSignature("similar", "nlu", (SlotSpec("number", "number", False, 1),), supports_custom_input=True),
    # logic connectives
    OperationSignature("and", "logic"),
    OperationSignature("or", "logic"),
)

_BY_NAME = {sig.name: sig for sig in _REGISTRY}


def registry() -> tuple[OperationSignature, ...]:
    return _REGISTRY


def signature(name: str) -> OperationSignature:
    try:
        return _BY_NAME[name]
    except KeyError:
        raise ParseError(f"unknown operation '{name}'") from None


# --- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Arg:
    kind: str  # "kw" | "int" | "str"
    value: object

    def render(self) -> str:
        if self.kind == "int":
            return str(self.value)
        if self.kind == "str":
            return f'"{self.value}"'
        return str(self.value)


@dataclass(frozen=True)
class Clause:
    op_name: str
    args: tuple[Arg, ...] = ()

    def is_filter(self) -> bool:
        return self.op_name in FILTER_OPS

    def keyword(self, index: int) -> Optional[str]:
        if index < len(self.args) and self.args[index].kind == "kw":
            return str(self.args[index].value)
        return None

    def render(self) -> str:
        return " ".join([self.op_name] + [a.render() for a in self.args])


@dataclass(frozen=True)
class ParseTree:
    clauses: tuple[Clause, ...]
    connectives: tuple[str, ...] = ()

    def action(self) -> Optional[Clause]:
        for clause in self.clauses:
            if not clause.is_filter():
                return clause
        return None

    def filters(self) -> tuple[Clause, ...]:
        return tuple(c for c in self.clauses if c.is_filter())

    def has_custom_input(self) -> bool:
        return any(c.op_name == "custominput" for c in self.clauses)


# --- lexer -------------------------------------------------------------------


@dataclass(frozen=True)
class _Token:
    text: str
    position: int  # 1-based
    is_string: bool = False


def _lex(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    position = 1
    n = len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        if ch == '"':
            end = source.find('"', i + 1)
            if end < 0:
                raise ParseError(f"unterminated string at token {position}", position)
            tokens.append(_Token(source[i + 1 : end], position, is_string=True))
            i = end + 1
        else:
            j = i
            while j < n and not source[j].isspace() and source[j] != '"':
                j += 1
            tokens.append(_Token(source[i:j], position))
            i = j
        position += 1
    return tokens


def _parse_int(token: _Token, slot: str) -> int:
    text = token.text
    negative = text.startswith("-")
    digits = text[1:] if negative else text
    if not digits.isdigit():
        raise ParseError(
            f"expected integer for '{slot}' but got '{token.text}' at token {token.position}",
            token.position,
        )
    value = int(digits)
    return -value if negative else value


# --- clause parsing ------------------------------------------------------------


def _parse_clause(tokens: list[_Token]) -> Clause:
    head = tokens[0]
    name = head.text.lower()
    if name not in _BY_NAME:
        raise ParseError(f"unknown operation '{head.text}' at token {head.position}", head.position)
    if name in CONNECTIVES:
        raise ParseError(
            f"connective '{name}' at token {head.position} must join two clauses", head.position
        )
    rest = tokens[1:]
    parser = _CLAUSE_PARSERS.get(name, _parse_no_args)
    return parser(name, head, rest)


def _reject_extra(name: str, rest: list[_Token]) -> None:
    if rest:
        tok = rest[0]
        raise ParseError(
            f"unexpected argument '{tok.text}' for '{name}' at token {tok.position}", tok.position
        )


def _parse_no_args(name: str, head: _Token, rest: list[_Token]) -> Clause:
    _reject_extra(name, rest)
    return Clause(name)


def _parse_filter(name: str, head: _Token, rest: list[_Token]) -> Clause:
    if not rest or rest[0].text.lower() != "id":
        position = rest[0].position if rest else head.position
        raise ParseError(f"'filter' expects 'id <n>' at token {position}", position)
    if len(rest) < 2:
        raise ParseError(f"missing id value after token {rest[0].position}", rest[0].position)
    value = _parse_int(rest[1], "id")
    if value < 0:
        raise ParseError(
            f"'id' must be non-negative, got {value} at token {rest[1].position}", rest[1].position
        )
    _reject_extra(name, rest[2:])
    return Clause(name, (Arg("kw", "id"), Arg("int", value)))


def _parse_includes(name: str, head: _Token, rest: list[_Token]) -> Clause:
    if not rest or not rest[0].is_string:
        position = rest[0].position if rest else head.position
        raise ParseError(f"'includes' expects a quoted token at token {position}", position)
    _reject_extra(name, rest[1:])
    return Clause(name, (Arg("str", rest[0].text),))


def _parse_choice(options: tuple[str, ...], default: Optional[str]):
    def parse(name: str, head: _Token, rest: list[_Token]) -> Clause:
        if not rest:
            if default is None:
                raise ParseError(
                    f"missing required argument for '{name}' at token {head.position}; "
                    f"expected one of: {', '.join(options)}",
                    head.position,
                )
            return Clause(name, (Arg("kw", default),))
        choice = rest[0].text.lower()
        if choice not in options:
            raise ParseError(
                f"invalid argument '{rest[0].text}' for '{name}' at token {rest[0].position}; "
                f"expected one of: {', '.join(options)}",
                rest[0].position,
            )
        _reject_extra(name, rest[1:])
        return Clause(name, (Arg("kw", choice),))

    return parse


def _parse_count(name: str, head: _Token, rest: list[_Token], default: int) -> Clause:
    if not rest:
        return Clause(name, (Arg("int", default),))
    value = _parse_int(rest[0], "number")
    if value < 1:
        raise ParseError(
            f"'number' must be at least 1, got {value} at token {rest[0].position}",
            rest[0].position,
        )
    _reject_extra(name, rest[1:])
    return Clause(name, (Arg("int", value),))


def _parse_nlpcfe(name: str, head: _Token, rest: list[_Token]) -> Clause:
    return _parse_count(name, head, rest, default=1)


def _parse_keywords(name: str, head: _Token, rest: list[_Token]) -> Clause:
    return _parse_count(name, head, rest, default=3)


def _parse_similar(name: str, head: _Token, rest: list[_Token]) -> Clause:
    return _parse_count(name, head, rest, default=1)


def _parse_nlpattribute(name: str, head: _Token, rest: list[_Token]) -> Clause:
    args: list[Arg] = []
    i = 0
    if i < len(rest) and not rest[i].is_string and rest[i].text.lower() == "all":
        args.append(Arg("kw", "all"))
        i += 1
    elif i < len(rest) and not rest[i].is_string and rest[i].text.lower() == "topk":
        if i + 1 >= len(rest):
            raise ParseError(
                f"missing integer after 'topk' at token {rest[i].position}", rest[i].position
            )
        value = _parse_int(rest[i + 1], "topk")
        if value < 1:
            raise ParseError(
                f"'topk' must be at least 1, got {value} at token {rest[i + 1].position}",
                rest[i + 1].position,
            )
        args.extend([Arg("kw", "topk"), Arg("int", value)])
        i += 2
    else:
        args.extend([Arg("kw", "topk"), Arg("int", 3)])
    if i < len(rest) and not rest[i].is_string and rest[i].text.lower() == "sentence":
        args.append(Arg("kw", "sentence"))
        i += 1
    _reject_extra(name, rest[i:])
    return Clause(name, tuple(args))


def _parse_globaltopk(name: str, head: _Token, rest: list[_Token]) -> Clause:
    args: list[Arg] = []
    i = 0
    if i < len(rest) and not rest[i].is_string:
        value = _parse_int(rest[i], "number")
        if value < 1:
            raise ParseError(
                f"'number' must be at least 1, got {value} at token {rest[i].position}",
                rest[i].position,
            )
        args.append(Arg("int", value))
        i += 1
    else:
        args.append(Arg("int", 3))
    if i < len(rest) and rest[i].is_string:
        args.append(Arg("str", rest[i].text))
        i += 1
    _reject_extra(name, rest[i:])
    return Clause(name, tuple(args))


_CLAUSE_PARSERS = {
    "filter": _parse_filter,
    "includes": _parse_includes,
    "mistakes": _parse_choice(("count", "sample"), default="count"),
    "score": _parse_choice(VALID_METRICS, default=None),
    "nlpattribute": _parse_nlpattribute,
    "globaltopk": _parse_globaltopk,
    "nlpcfe": _parse_nlpcfe,
    "keywords": _parse_keywords,
    "similar": _parse_similar,
}


# --- tree parsing and validation -------------------------------------------------


def parse_string(source: str) -> ParseTree:
    tokens = _lex(source)
    if not tokens:
        raise ParseError("empty parse", 1)
    groups: list[list[_Token]] = [[]]
    connective_tokens: list[_Token] = []
    for token in tokens:
        lowered = token.text.lower()
        if not token.is_string and lowered in CONNECTIVES:
            if not groups[-1]:
                raise ParseError(
                    f"connective '{lowered}' at token {token.position} must join two clauses",
                    token.position,
                )
            connective_tokens.append(token)
            groups.append([])
        else:
            groups[-1].append(token)
    if not groups[-1]:
        last = connective_tokens[-1]
        raise ParseError(
            f"connective '{last.text.lower()}' at token {last.position} must join two clauses",
            last.position,
        )
    clauses = tuple(_parse_clause(group) for group in groups)
    connectives = tuple(t.text.lower() for t in connective_tokens)
    _validate(clauses, connectives, groups, connective_tokens)
    return ParseTree(clauses=clauses, connectives=connectives)


def _validate(
    clauses: tuple[Clause, ...],
    connectives: tuple[str, ...],
    groups: list[list[_Token]],
    connective_tokens: list[_Token],
) -> None:
    action_seen: Optional[int] = None
    for index, clause in enumerate(clauses):
        position = groups[index][0].position
        if clause.is_filter():
            if action_seen is not None:
                raise ParseError(f"action clause must be last (token {position})", position)
            continue
        if action_seen is not None:
            raise ParseError(
                f"only one action clause allowed; second action '{clause.op_name}' "
                f"at token {position}",
                position,
            )
        action_seen = index
    for conn_index, connective in enumerate(connectives):
        if connective == "or":
            left, right = clauses[conn_index], clauses[conn_index + 1]
            if not (left.is_filter() and right.is_filter()):
                token = connective_tokens[conn_index]
                raise ParseError(
                    f"'or' may only join filter clauses (token {token.position})", token.position
                )

    has_custom = any(c.op_name == "custominput" for c in clauses)
    if has_custom:
        others = [c for c in clauses if c.is_filter() and c.op_name != "custominput"]
        if others or sum(1 for c in clauses if c.op_name == "custominput") > 1:
            position = groups[0][0].position
            raise ParseError(
                f"'custominput' cannot be combined with other filters (token {position})", position
            )

    action_clause = next((c for c in clauses if not c.is_filter()), None)
    if action_clause is None:
        return
    action_position = groups[clauses.index(action_clause)][0].position
    if has_custom and action_clause.op_name not in CUSTOM_INPUT_ACTIONS:
        raise ParseError(
            f"'{action_clause.op_name}' does not support custom inputs; supported: "
            f"{', '.join(sorted(CUSTOM_INPUT_ACTIONS))} (token {action_position})",
            action_position,
        )
    if action_clause.op_name in INSTANCE_ACTIONS and not has_custom:
        has_id_filter = any(c.op_name == "filter" for c in clauses)
        if not has_id_filter or "or" in connectives:
            raise ParseError(
                f"'{action_clause.op_name}' requires a single instance; start with "
                f"'filter id <n>' or provide a custom input (token {action_position})",
                action_position,
            )


def canonicalize(tree: ParseTree) -> str:
    parts = [tree.clauses[0].render()]
    for connective, clause in zip(tree.connectives, tree.clauses[1:]):
        parts.append(connective)
        parts.append(clause.render())
    return " ".join(parts)


def try_parse(source: str) -> tuple[Optional[ParseTree], Optional[ParseError]]:
    try:
        return parse_string(source), None
    except ParseError as exc:
        return None, exc
