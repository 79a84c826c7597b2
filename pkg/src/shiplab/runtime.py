"""Declarative rule runtime: typed state, computed properties, guarded actions.

Every layer of the agent expresses its decision logic in a tiny line-oriented
rule language instead of host code.  The runtime is deliberately not a
programming language: there are no loops, no recursion, no user functions, and
no way for an expression to touch anything outside the state record it is
evaluated against.  A program is a set of named computed properties (pure
expressions over state fields and other computed names, acyclic by
construction) plus guarded actions whose only effect is a bounded list of
field patches applied atomically.  Quantities the rules cannot derive
themselves, such as posterior entropy or preview scores, are injected into the
state record by the host before evaluation; the rules never call back out.

Grammar, one definition per logical line::

    scope planning                          # tags following defs with a layer
    computed name = expression
    action name available when expression:
        patch field <- expression

Indented lines that do not start with ``patch`` continue the previous logical
line.  ``#`` starts a comment outside string literals.  Expressions support
``or``, ``and``, ``not``, comparisons, ``+ - * /``, unary minus, ``min``/
``max`` calls, parentheses, and literals (numbers, double-quoted strings,
``true``/``false``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

LAYER_SCOPES = ("belief", "planning", "reflection", "revision")

VALUE_TYPES = ("bool", "int", "real", "string", "cell", "real-map")

_INT_LIMIT = 2**63


class RuleSyntaxError(Exception):
    """A program line does not match the grammar."""

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownReference(Exception):
    """An expression or patch names a field that does not exist."""

    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name


class CyclicDependency(Exception):
    """Computed properties form a reference cycle."""

    def __init__(self, cycle: list[str]) -> None:
        super().__init__(" -> ".join(cycle))
        self.cycle = cycle


class TypeMismatch(Exception):
    """A program is ill-typed against the declared field schema."""


class RuntimeTypeError(Exception):
    """Evaluation hit an ill-typed or non-total operation."""


class ActionUnavailable(Exception):
    """An action was applied while its precondition is false."""


class StateRecord:
    """Immutable named-field record; all mutation goes through patches.

    The field set is fixed at construction.  Container values (cell tuples,
    parameter maps) are copied in and out so records behave as values: no
    caller can alias the internals of a record it did not build.
    """

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[str, Any]) -> None:
        self._values = {name: _copy_value(v) for name, v in values.items()}

    def __getitem__(self, name: str) -> Any:
        try:
            return _copy_value(self._values[name])
        except KeyError:
            raise UnknownReference(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StateRecord):
            return NotImplemented
        return self._values == other._values

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in self._values.items())
        return f"StateRecord({inner})"

    def fields(self) -> tuple[str, ...]:
        return tuple(self._values)

    def as_dict(self) -> dict[str, Any]:
        return {name: _copy_value(v) for name, v in self._values.items()}

    def patched(self, updates: Mapping[str, Any]) -> "StateRecord":
        """Return a new record with ``updates`` applied; field set unchanged."""
        for name in updates:
            if name not in self._values:
                raise UnknownReference(name)
        merged = dict(self._values)
        merged.update(updates)
        return StateRecord(merged)


def _copy_value(value: Any) -> Any:
    if isinstance(value, dict):
        return dict(value)
    return value


@dataclass(frozen=True)
class ComputedDef:
    name: str
    expr: tuple
    scope: str
    line: int


@dataclass(frozen=True)
class PatchDef:
    target: str
    expr: tuple
    line: int


@dataclass(frozen=True)
class ActionDef:
    name: str
    precondition: tuple
    patches: tuple[PatchDef, ...]
    scope: str
    line: int


@dataclass(frozen=True)
class TraceEvent:
    """Record of one applied action: name plus (path, old, new) per patch."""

    kind: str
    action: str
    patches: tuple[tuple[str, Any, Any], ...]


@dataclass(frozen=True)
class Program:
    """A loaded rule program: computed defs and actions in declaration order."""

    computed: dict[str, ComputedDef]
    actions: dict[str, ActionDef]
    schema: dict[str, str] | None

    def computed_names(self) -> tuple[str, ...]:
        return tuple(self.computed)

    def action_names(self) -> tuple[str, ...]:
        return tuple(self.actions)

    def scope_of(self, name: str) -> str:
        if name in self.computed:
            return self.computed[name].scope
        if name in self.actions:
            return self.actions[name].scope
        raise UnknownReference(name)


# ---------------------------------------------------------------------------
# tokenizing and expression parsing


_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
    | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<str>"[^"\n]*")
    | (?P<op><=|>=|==|!=|[-+*/(),<>])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"and", "or", "not", "min", "max", "true", "false"}

_COMPARISONS = ("==", "!=", "<=", ">=", "<", ">")


def _tokenize(text: str, line: int) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line)
        pos = match.end()
        kind = match.lastgroup
        if kind == "ws":
            continue
        tokens.append((kind, match.group()))
    return tokens


class _ExprParser:
    """Recursive-descent parser; precedence or < and < not < cmp < add < mul."""

    def __init__(self, tokens: list[tuple[str, str]], line: int) -> None:
        self.tokens = tokens
        self.pos = 0
        self.line = line

    def parse(self) -> tuple:
        expr = self._or()
        if self.pos != len(self.tokens):
            raise RuleSyntaxError(
                f"unexpected token {self.tokens[self.pos][1]!r}", self.line
            )
        return expr

    def _peek(self) -> tuple[str, str] | None:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        return None

    def _take(self) -> tuple[str, str]:
        tok = self._peek()
        if tok is None:
            raise RuleSyntaxError("unexpected end of expression", self.line)
        self.pos += 1
        return tok

    def _accept(self, value: str) -> bool:
        tok = self._peek()
        if tok is not None and tok[1] == value:
            self.pos += 1
            return True
        return False

    def _expect(self, value: str) -> None:
        if not self._accept(value):
            found = self._peek()[1] if self._peek() else "end of line"
            raise RuleSyntaxError(f"expected {value!r}, found {found!r}", self.line)

    def _or(self) -> tuple:
        expr = self._and()
        while self._accept("or"):
            expr = ("or", expr, self._and())
        return expr

    def _and(self) -> tuple:
        expr = self._not()
        while self._accept("and"):
            expr = ("and", expr, self._not())
        return expr

    def _not(self) -> tuple:
        if self._accept("not"):
            return ("not", self._not())
        return self._comparison()

    def _comparison(self) -> tuple:
        expr = self._additive()
        tok = self._peek()
        if tok is not None and tok[1] in _COMPARISONS:
            op = self._take()[1]
            expr = ("cmp", op, expr, self._additive())
            tok = self._peek()
            if tok is not None and tok[1] in _COMPARISONS:
                raise RuleSyntaxError("chained comparisons are not allowed", self.line)
        return expr

    def _additive(self) -> tuple:
        expr = self._multiplicative()
        while True:
            tok = self._peek()
            if tok is None or tok[1] not in ("+", "-"):
                return expr
            op = self._take()[1]
            expr = ("arith", op, expr, self._multiplicative())

    def _multiplicative(self) -> tuple:
        expr = self._unary()
        while True:
            tok = self._peek()
            if tok is None or tok[1] not in ("*", "/"):
                return expr
            op = self._take()[1]
            right = self._unary()
            if (op == "/" and right[0] == "lit"
                    and right[2] in ("int", "real") and right[1] == 0):
                raise RuleSyntaxError("division by constant zero", self.line)
            expr = ("arith", op, expr, right)

    def _unary(self) -> tuple:
        if self._accept("-"):
            return ("neg", self._unary())
        return self._atom()

    def _atom(self) -> tuple:
        kind, value = self._take()
        if kind == "num":
            if any(c in value for c in ".eE"):
                return ("lit", float(value), "real")
            return ("lit", int(value), "int")
        if kind == "str":
            return ("lit", value[1:-1], "string")
        if kind == "name":
            if value == "true":
                return ("lit", True, "bool")
            if value == "false":
                return ("lit", False, "bool")
            if value in ("min", "max"):
                self._expect("(")
                args = [self._or()]
                while self._accept(","):
                    args.append(self._or())
                self._expect(")")
                return ("call", value, tuple(args))
            if value in _KEYWORDS:
                raise RuleSyntaxError(f"unexpected keyword {value!r}", self.line)
            return ("ref", value)
        if value == "(":
            expr = self._or()
            self._expect(")")
            return expr
        raise RuleSyntaxError(f"unexpected token {value!r}", self.line)


# ---------------------------------------------------------------------------
# program parsing


_SCOPE_RE = re.compile(r"^scope\s+([A-Za-z_][A-Za-z0-9_]*)\s*$")
_COMPUTED_RE = re.compile(r"^computed\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+)$")
_ACTION_RE = re.compile(
    r"^action\s+([A-Za-z_][A-Za-z0-9_]*)\s+available\s+when\s+(.+):\s*$"
)
_PATCH_RE = re.compile(r"^patch\s+([A-Za-z_][A-Za-z0-9_]*)\s*<-\s*(.+)$")


def _strip_comment(line: str) -> str:
    in_string = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_string = not in_string
        elif ch == "#" and not in_string:
            return line[:i]
    return line


def _logical_lines(text: str) -> list[tuple[str, bool, int]]:
    """Fold continuations; yield (content, is_patch, first_physical_line)."""
    logical: list[tuple[str, bool, int]] = []
    in_action = False
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(raw).rstrip()
        if not stripped.strip():
            continue
        indented = stripped[0] in " \t"
        content = stripped.strip()
        if indented and content.startswith("patch ") and in_action:
            logical.append((content, True, number))
            continue
        if indented:
            if not logical:
                raise RuleSyntaxError("continuation line before any definition", number)
            prev, prev_patch, prev_no = logical[-1]
            logical[-1] = (prev + " " + content, prev_patch, prev_no)
            continue
        if content.startswith("patch "):
            raise RuleSyntaxError("patch outside an action block", number)
        logical.append((content, False, number))
        in_action = content.startswith("action ")
    return logical


def parse_program(
    text: str,
    schema: Mapping[str, str] | None = None,
    default_scope: str = "reflection",
) -> Program:
    """Load a rule program, resolving references and verifying acyclicity.

    When ``schema`` is given (field name to value type, types drawn from
    ``VALUE_TYPES``) every reference must resolve to a declared field or a
    computed name, patch targets must be declared fields, and expressions are
    type-checked at load.  Without a schema, names that are not computed are
    assumed to be state fields and checking happens at evaluation time.
    """
    if schema is not None:
        for field_name, type_name in schema.items():
            if type_name not in VALUE_TYPES:
                raise TypeMismatch(
                    f"unknown type {type_name!r} for field {field_name!r}"
                )
    if default_scope not in LAYER_SCOPES:
        raise ValueError(f"unknown scope {default_scope!r}")

    computed: dict[str, ComputedDef] = {}
    actions: dict[str, ActionDef] = {}
    current_scope = default_scope
    current_action: ActionDef | None = None

    def flush_action() -> None:
        nonlocal current_action
        if current_action is not None:
            actions[current_action.name] = current_action
            current_action = None

    for content, is_patch, line in _logical_lines(text):
        if is_patch:
            match = _PATCH_RE.match(content)
            if match is None:
                raise RuleSyntaxError("malformed patch line", line)
            target, expr_text = match.groups()
            expr = _ExprParser(_tokenize(expr_text, line), line).parse()
            assert current_action is not None
            patch = PatchDef(target=target, expr=expr, line=line)
            current_action = ActionDef(
                name=current_action.name,
                precondition=current_action.precondition,
                patches=current_action.patches + (patch,),
                scope=current_action.scope,
                line=current_action.line,
            )
            continue
        flush_action()
        match = _SCOPE_RE.match(content)
        if match is not None:
            scope = match.group(1)
            if scope not in LAYER_SCOPES:
                raise RuleSyntaxError(f"unknown scope {scope!r}", line)
            current_scope = scope
            continue
        match = _COMPUTED_RE.match(content)
        if match is not None:
            name, expr_text = match.groups()
            if name in computed:
                raise RuleSyntaxError(f"duplicate computed name {name!r}", line)
            expr = _ExprParser(_tokenize(expr_text, line), line).parse()
            computed[name] = ComputedDef(
                name=name, expr=expr, scope=current_scope, line=line
            )
            continue
        match = _ACTION_RE.match(content)
        if match is not None:
            name, cond_text = match.groups()
            if name in actions:
                raise RuleSyntaxError(f"duplicate action name {name!r}", line)
            cond = _ExprParser(_tokenize(cond_text, line), line).parse()
            current_action = ActionDef(
                name=name,
                precondition=cond,
                patches=(),
                scope=current_scope,
                line=line,
            )
            continue
        raise RuleSyntaxError(f"unrecognized line {content!r}", line)
    flush_action()

    program = Program(computed=computed, actions=actions, schema=dict(schema) if schema else None)
    order = _check_dependencies(program)
    if schema is not None:
        _check_types(program, dict(schema), order)
    return program


def load_program_file(path: Any, schema: Mapping[str, str] | None = None,
                      default_scope: str = "reflection") -> Program:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_program(handle.read(), schema=schema, default_scope=default_scope)


def _references(expr: tuple) -> Iterable[str]:
    head = expr[0]
    if head == "ref":
        yield expr[1]
    elif head == "lit":
        return
    elif head in ("not", "neg"):
        yield from _references(expr[1])
    elif head in ("and", "or"):
        yield from _references(expr[1])
        yield from _references(expr[2])
    elif head == "cmp" or head == "arith":
        yield from _references(expr[2])
        yield from _references(expr[3])
    elif head == "call":
        for arg in expr[2]:
            yield from _references(arg)


def _check_dependencies(program: Program) -> list[str]:
    """Resolve references, reject computed cycles; return dependency order."""
    schema = program.schema

    def check_refs(expr: tuple, context: str) -> None:
        for name in _references(expr):
            if name in program.computed:
                continue
            if schema is not None and name not in schema:
                raise UnknownReference(name)

    state = {name: 0 for name in program.computed}  # 0 new, 1 active, 2 done
    stack: list[str] = []
    order: list[str] = []

    def visit(name: str) -> None:
        if state[name] == 2:
            return
        if state[name] == 1:
            cycle = stack[stack.index(name):] + [name]
            raise CyclicDependency(cycle)
        state[name] = 1
        stack.append(name)
        for dep in _references(program.computed[name].expr):
            if dep in program.computed:
                visit(dep)
        stack.pop()
        state[name] = 2
        order.append(name)

    for name, definition in program.computed.items():
        check_refs(definition.expr, name)
        visit(name)
    for action in program.actions.values():
        check_refs(action.precondition, action.name)
        for patch in action.patches:
            if patch.target in program.computed:
                raise RuleSyntaxError(
                    f"cannot patch computed property {patch.target!r}", patch.line
                )
            if schema is not None and patch.target not in schema:
                raise UnknownReference(patch.target)
            check_refs(patch.expr, action.name)
    return order


# ---------------------------------------------------------------------------
# static type checking (schema present)


def _infer_type(expr: tuple, env: Mapping[str, str]) -> str:
    head = expr[0]
    if head == "lit":
        return expr[2]
    if head == "ref":
        return env[expr[1]]
    if head == "not":
        if _infer_type(expr[1], env) != "bool":
            raise TypeMismatch("'not' needs a bool operand")
        return "bool"
    if head in ("and", "or"):
        left = _infer_type(expr[1], env)
        right = _infer_type(expr[2], env)
        if left != "bool" or right != "bool":
            raise TypeMismatch(f"{head!r} needs bool operands")
        return "bool"
    if head == "cmp":
        op = expr[1]
        left = _infer_type(expr[2], env)
        right = _infer_type(expr[3], env)
        numeric = {"int", "real"}
        if op in ("==", "!="):
            if left != right and not (left in numeric and right in numeric):
                raise TypeMismatch(f"cannot compare {left} with {right}")
        else:
            if left not in numeric or right not in numeric:
                raise TypeMismatch(f"ordering needs numbers, got {left} and {right}")
        return "bool"
    if head == "arith":
        op = expr[1]
        left = _infer_type(expr[2], env)
        right = _infer_type(expr[3], env)
        if left not in ("int", "real") or right not in ("int", "real"):
            raise TypeMismatch(f"arithmetic needs numbers, got {left} and {right}")
        if op == "/" or "real" in (left, right):
            return "real"
        return "int"
    if head == "neg":
        inner = _infer_type(expr[1], env)
        if inner not in ("int", "real"):
            raise TypeMismatch(f"negation needs a number, got {inner}")
        return inner
    if head == "call":
        types = [_infer_type(arg, env) for arg in expr[2]]
        if any(t not in ("int", "real") for t in types):
            raise TypeMismatch(f"{expr[1]} needs numeric arguments")
        return "real" if "real" in types else "int"
    raise AssertionError(f"unhandled expression head {head!r}")


def _check_types(program: Program, schema: dict[str, str], order: list[str]) -> None:
    env = dict(schema)
    for name in program.computed:
        if name in schema:
            raise TypeMismatch(f"computed {name!r} shadows a state field")
    for name in order:
        env[name] = _infer_type(program.computed[name].expr, env)
    for action in program.actions.values():
        if _infer_type(action.precondition, env) != "bool":
            raise TypeMismatch(f"precondition of {action.name!r} must be bool")
        for patch in action.patches:
            value_type = _infer_type(patch.expr, env)
            field_type = schema[patch.target]
            widens = field_type == "real" and value_type == "int"
            if value_type != field_type and not widens:
                raise TypeMismatch(
                    f"patch {patch.target!r} assigns {value_type} to {field_type}"
                )


# ---------------------------------------------------------------------------
# evaluation


def _is_number(value: Any) -> bool:
    return type(value) in (int, float)


def _value_kind(value: Any) -> str:
    if type(value) is bool:
        return "bool"
    if type(value) is int:
        return "int"
    if type(value) is float:
        return "real"
    if type(value) is str:
        return "string"
    if type(value) is tuple:
        return "cell"
    if type(value) is dict:
        return "real-map"
    raise RuntimeTypeError(f"unsupported value {value!r}")


def _eval(expr: tuple, program: Program, state: StateRecord,
          memo: dict[str, Any]) -> Any:
    head = expr[0]
    if head == "lit":
        return expr[1]
    if head == "ref":
        name = expr[1]
        if name in program.computed:
            if name not in memo:
                memo[name] = _eval(program.computed[name].expr, program, state, memo)
            return memo[name]
        return state[name]
    if head == "not":
        value = _eval(expr[1], program, state, memo)
        if type(value) is not bool:
            raise RuntimeTypeError("'not' applied to a non-bool")
        return not value
    if head == "and":
        left = _eval(expr[1], program, state, memo)
        if type(left) is not bool:
            raise RuntimeTypeError("'and' applied to a non-bool")
        if not left:
            return False
        right = _eval(expr[2], program, state, memo)
        if type(right) is not bool:
            raise RuntimeTypeError("'and' applied to a non-bool")
        return right
    if head == "or":
        left = _eval(expr[1], program, state, memo)
        if type(left) is not bool:
            raise RuntimeTypeError("'or' applied to a non-bool")
        if left:
            return True
        right = _eval(expr[2], program, state, memo)
        if type(right) is not bool:
            raise RuntimeTypeError("'or' applied to a non-bool")
        return right
    if head == "cmp":
        op = expr[1]
        left = _eval(expr[2], program, state, memo)
        right = _eval(expr[3], program, state, memo)
        if op in ("==", "!="):
            same_kind = _value_kind(left) == _value_kind(right)
            both_numeric = _is_number(left) and _is_number(right)
            if not (same_kind or both_numeric):
                raise RuntimeTypeError(
                    f"cannot compare {_value_kind(left)} with {_value_kind(right)}"
                )
            return (left == right) if op == "==" else (left != right)
        if not (_is_number(left) and _is_number(right)):
            raise RuntimeTypeError("ordering comparison on non-numbers")
        if op == "<":
            return left < right
        if op == "<=":
            return left <= right
        if op == ">":
            return left > right
        return left >= right
    if head == "arith":
        op = expr[1]
        left = _eval(expr[2], program, state, memo)
        right = _eval(expr[3], program, state, memo)
        if not (_is_number(left) and _is_number(right)):
            raise RuntimeTypeError("arithmetic on non-numbers")
        if op == "+":
            result = left + right
        elif op == "-":
            result = left - right
        elif op == "*":
            result = left * right
        else:
            if right == 0:
                raise RuntimeTypeError("division by zero")
            result = left / right
        if type(result) is int and abs(result) >= _INT_LIMIT:
            raise RuntimeTypeError("integer overflow")
        return result
    if head == "neg":
        value = _eval(expr[1], program, state, memo)
        if not _is_number(value):
            raise RuntimeTypeError("negation of a non-number")
        result = -value
        if type(result) is int and abs(result) >= _INT_LIMIT:
            raise RuntimeTypeError("integer overflow")
        return result
    if head == "call":
        values = [_eval(arg, program, state, memo) for arg in expr[2]]
        if not all(_is_number(v) for v in values):
            raise RuntimeTypeError(f"{expr[1]} applied to non-numbers")
        return min(values) if expr[1] == "min" else max(values)
    raise AssertionError(f"unhandled expression head {head!r}")


def eval_computed(program: Program, state: StateRecord, name: str) -> Any:
    """Evaluate one computed property; pure, with no effect on ``state``."""
    if name not in program.computed:
        raise UnknownReference(name)
    return _eval(program.computed[name].expr, program, state, {})


def computed_snapshot(
    program: Program, state: StateRecord, scope: str | None = None
) -> dict[str, Any]:
    """Evaluate every computed property (optionally one scope), in order."""
    memo: dict[str, Any] = {}
    out: dict[str, Any] = {}
    for name, definition in program.computed.items():
        if scope is not None and definition.scope != scope:
            continue
        if name not in memo:
            memo[name] = _eval(definition.expr, program, state, memo)
        out[name] = memo[name]
    return out


def available_actions(program: Program, state: StateRecord) -> list[str]:
    """Names of actions whose precondition holds, in declaration order."""
    names = []
    for name, action in program.actions.items():
        value = _eval(action.precondition, program, state, {})
        if type(value) is not bool:
            raise RuntimeTypeError(f"precondition of {name!r} is not a bool")
        if value:
            names.append(name)
    return names


def apply_action(
    program: Program,
    state: StateRecord,
    name: str,
    rng: Any = None,
) -> tuple[StateRecord, TraceEvent]:
    """Apply one action's patches atomically against the pre-state.

    Every patch right-hand side reads the record as it was before the action;
    either all patches land or none do.  ``rng`` is accepted for signature
    stability but no expression form consumes randomness.
    """
    if name not in program.actions:
        raise UnknownReference(name)
    action = program.actions[name]
    gate = _eval(action.precondition, program, state, {})
    if type(gate) is not bool:
        raise RuntimeTypeError(f"precondition of {name!r} is not a bool")
    if not gate:
        raise ActionUnavailable(name)
    updates: dict[str, Any] = {}
    records: list[tuple[str, Any, Any]] = []
    for patch in action.patches:
        value = _eval(patch.expr, program, state, {})
        old = state[patch.target]
        old_kind = _value_kind(old)
        new_kind = _value_kind(value)
        if old_kind == "real" and new_kind == "int":
            value = float(value)
            new_kind = "real"
        if new_kind != old_kind:
            raise RuntimeTypeError(
                f"patch {patch.target!r} assigns {new_kind} to {old_kind}"
            )
        updates[patch.target] = value
        records.append((patch.target, old, value))
    new_state = state.patched(updates)
    event = TraceEvent(kind="action", action=name, patches=tuple(records))
    return new_state, event
