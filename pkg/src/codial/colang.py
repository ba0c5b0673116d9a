"""Guardrail code rendering and a syntax checker for the emitted subset.

The emitted language is a small indentation-based dialect: ``import``,
``flow``, ``while``, ``if``/``else``, ``activate``, ``bot say``, ``user
said``, variable assignment (including the generative ``$x = ... "prompt"``
form and ``await SomeAction(...)`` calls), plus comments.  Emission is
deterministic: the same program always renders to the same text.

Every flow node appears as a ``# node <id>`` comment above its block; a
node reached along several paths is rendered once per path, and a cycle
back-edge renders as a comment instead of recursing.
"""

from __future__ import annotations

import re

from .ir import And, GuardrailProgram, IsFalse, IsNull, Nld, Or, Predicate

INDENT = "  "


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def action_class_name(function: str) -> str:
    return "".join(part.capitalize() for part in function.split("_")) + "Action"


_PLACEHOLDER = re.compile(r"\[([A-Za-z0-9_]+)\]")


def _interpolate(template: str, program: GuardrailProgram) -> str:
    """``[name]`` placeholders become ``{$var}`` interpolations."""
    slots = set(program.slot_names())
    returns_map = {}
    for d in program.nap:
        if d.action.kind == "external_action" and d.action.returns:
            returns_map[d.action.returns] = f"action_{d.node_id}"

    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name in slots:
            return f"{{${name}}}"
        if name in returns_map:
            return f"{{${returns_map[name]}}}"
        return match.group(0)

    return _PLACEHOLDER.sub(sub, template)


class _NldHoist:
    """Natural-language guard terms become `$nld_k = ... "text"` assignments
    emitted just before the `if` that uses them."""

    def __init__(self):
        self.counter = 0
        self.pending: list[tuple[str, str]] = []

    def hoist(self, text: str) -> str:
        self.counter += 1
        var = f"nld_{self.counter}"
        self.pending.append((var, text))
        return f"${var}"

    def flush(self, lines: list[str], depth: int) -> None:
        for var, text in self.pending:
            lines.append(f'{INDENT * depth}${var} = ... "{_escape(text)}"')
        self.pending.clear()


def _guard_expr(pred: Predicate, hoist: _NldHoist, top: bool = True) -> str:
    if isinstance(pred, IsNull):
        return f"${pred.var} == None"
    if isinstance(pred, IsFalse):
        return f"${pred.var} == False"
    if isinstance(pred, And):
        inner = " and ".join(_guard_expr(t, hoist, top=False) for t in pred.terms)
        return inner if top else f"({inner})"
    if isinstance(pred, Or):
        inner = " or ".join(_guard_expr(t, hoist, top=False) for t in pred.terms)
        return inner if top else f"({inner})"
    if isinstance(pred, Nld):
        return hoist.hoist(pred.text)
    raise TypeError(f"not a predicate: {pred!r}")


def _ask_line(slots: list[str]) -> str:
    names = [f"the {s.replace('_', ' ')}" for s in slots]
    if len(names) == 1:
        listed = names[0]
    elif len(names) == 2:
        listed = f"{names[0]} and {names[1]}"
    else:
        listed = ", ".join(names[:-1]) + f", and {names[-1]}"
    return f"Could you tell me {listed}?"


def _emit_node(program: GuardrailProgram, node_id: str, depth: int,
               lines: list[str], path: set[str], hoist: _NldHoist,
               cond_counter: list[int], seen: set[str]) -> None:
    pad = INDENT * depth
    if node_id in path:
        lines.append(f"{pad}# revisit node {node_id} (cycle)")
        return
    path = path | {node_id}
    seen.add(node_id)
    decision = program.decision(node_id)
    action = decision.action
    lines.append(f"{pad}# node {node_id}")

    expr = _guard_expr(decision.guard, hoist)
    hoist.flush(lines, depth)
    lines.append(f"{pad}if {expr}")

    body = INDENT * (depth + 1)
    if action.kind == "request":
        lines.append(f'{body}bot say "{_escape(_ask_line(action.slots))}"')
    elif action.kind == "external_action":
        args = ", ".join(f"{arg}=${var}" for arg, var in action.params.items())
        lines.append(f"{body}$action_{node_id} = await "
                     f"{action_class_name(action.function)}({args})")
        say = action.ack_template or "Done."
        lines.append(f'{body}bot say "{_escape(_interpolate(say, program))}"')
    else:
        say = _interpolate(action.template or "", program)
        if action.confirm_question:
            say = f"{say} {action.confirm_question}"
        lines.append(f'{body}bot say "{_escape(say)}"')
        lines.append(f"{body}$inform_{node_id} = True")

    branches = decision.branches
    if not branches:
        return
    lines.append(f"{pad}else")
    depth += 1
    for branch in branches:
        pad = INDENT * depth
        if branch.condition is None:
            _emit_node(program, branch.target, depth, lines, path, hoist,
                       cond_counter, seen)
        else:
            cond_counter[0] += 1
            var = f"cond_{cond_counter[0]}"
            lines.append(f'{pad}${var} = ... "{_escape(branch.condition)}"')
            lines.append(f"{pad}if ${var}")
            _emit_node(program, branch.target, depth + 1, lines, path, hoist,
                       cond_counter, seen)
            if branch is not branches[-1]:
                lines.append(f"{pad}else")
                depth += 1


def emit_colang(program: GuardrailProgram) -> str:
    lines: list[str] = ["import core", "import llm", ""]

    for intent in program.intents:
        lines.append(f"flow handle_{intent.name}")
        if intent.trigger_examples:
            said = " or ".join(f'user said "{_escape(t)}"'
                               for t in intent.trigger_examples)
        else:
            said = "user said something"
        lines.append(f"{INDENT}{said}")
        lines.append(f'{INDENT}bot say "{_escape(intent.response_template)}"')
        lines.append("")

    for entry in program.fallback.entries:
        lines.append(f"flow fallback_{entry.name}")
        lines.append(f'{INDENT}bot say "{_escape(entry.response_template)}"')
        lines.append("")

    lines.append("flow main")
    for intent in program.intents:
        lines.append(f"{INDENT}activate handle_{intent.name}")
    for var, value in program.init.items():
        literal = "None" if value is None else "False"
        lines.append(f"{INDENT}${var} = {literal}")
    lines.append(f"{INDENT}while True")
    loop = INDENT * 2
    lines.append(f"{loop}user said something")
    for entry in program.dst:
        lines.append(f'{loop}${entry.slot} = ... "{_escape(entry.instruction)}"')

    hoist = _NldHoist()
    cond_counter = [0]
    seen: set[str] = set()
    if program.nap:
        _emit_node(program, program.graph.start_node, 2, lines, set(), hoist,
                   cond_counter, seen)

    for decision in program.nap:
        if decision.node_id not in seen:
            lines.append(f"{loop}# node {decision.node_id} (unreachable)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Syntax checker
# ---------------------------------------------------------------------------

_STATEMENTS = [
    re.compile(r"^import [a-z_][a-z0-9_.]*$"),
    re.compile(r"^flow [A-Za-z_][A-Za-z0-9_]*$"),
    re.compile(r"^while .+$"),
    re.compile(r"^if .+$"),
    re.compile(r"^else$"),
    re.compile(r"^activate [A-Za-z_][A-Za-z0-9_]*$"),
    re.compile(r'^bot say ".*"$'),
    re.compile(r"^user said something$"),
    re.compile(r'^user said ".+"( or user said ".+")*$'),
    re.compile(r"^\$[A-Za-z_][A-Za-z0-9_]* = .+$"),
    re.compile(r"^await [A-Za-z_][A-Za-z0-9_]*\(.*\)$"),
]

_HEADERS = ("flow ", "if ", "else", "while ")


def _unescaped_quote_count(line: str) -> int:
    count = 0
    i = 0
    while i < len(line):
        if line[i] == "\\":
            i += 2
            continue
        if line[i] == '"':
            count += 1
        i += 1
    return count


def check_colang(text: str) -> list[str]:
    """Structural errors in the emitted subset; an empty list means valid."""
    errors: list[str] = []
    # (indent level, opened-by-header kind); the virtual root is level -1
    stack: list[tuple[int, str]] = [(-1, "root")]
    previous_header: tuple[int, str] | None = None  # (level, kind) awaiting a body
    last_if_level: dict[int, bool] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if "\t" in raw:
            errors.append(f"line {lineno}: tabs are not allowed")
            continue
        stripped = raw.strip()
        if not stripped:
            continue
        indent = len(raw) - len(raw.lstrip(" "))
        if indent % 2:
            errors.append(f"line {lineno}: indentation must use two-space steps")
            continue
        level = indent // 2

        is_comment = stripped.startswith("#")

        if previous_header is not None:
            header_level, kind = previous_header
            if level <= header_level:
                errors.append(
                    f"line {lineno}: empty '{kind.strip()}' block above")
            previous_header = None

        top_level = stack[-1][0]
        if level > top_level + 1:
            errors.append(f"line {lineno}: indented too deep")
            continue
        while stack and level <= stack[-1][0]:
            popped_level = stack.pop()[0]
            if popped_level != level:
                last_if_level.pop(popped_level, None)
        if level != stack[-1][0] + 1:
            errors.append(f"line {lineno}: inconsistent indentation")
            continue

        if is_comment:
            # Comments count as block content but never open blocks.
            continue

        if stripped == "end" or stripped.startswith("end "):
            errors.append(f"line {lineno}: 'end' is not part of this dialect")
            continue

        if _unescaped_quote_count(stripped) % 2:
            errors.append(f"line {lineno}: unbalanced quotes")
            continue

        if not any(p.match(stripped) for p in _STATEMENTS):
            errors.append(f"line {lineno}: unknown statement {stripped!r}")
            continue

        if stripped.startswith("flow ") and level != 0:
            errors.append(f"line {lineno}: 'flow' must be at top level")
            continue
        if not stripped.startswith(("import ", "flow ", "#")) and level == 0:
            errors.append(f"line {lineno}: statements must live inside a flow")
            continue

        if stripped == "else":
            if not last_if_level.get(level):
                errors.append(f"line {lineno}: 'else' without a matching 'if'")
                continue
            last_if_level[level] = False
            stack.append((level, "else"))
            previous_header = (level, "else")
            continue

        # Only an `if` block may be followed by `else` at the same level.
        last_if_level[level] = stripped.startswith("if ")

        header = next((h for h in _HEADERS if stripped.startswith(h)
                       or stripped == h.strip()), None)
        if header is not None:
            stack.append((level, header))
            previous_header = (level, header)

    if previous_header is not None:
        errors.append(f"line {len(text.splitlines())}: "
                      f"empty '{previous_header[1].strip()}' block above")
    return errors
