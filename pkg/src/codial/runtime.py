"""Turn executor for compiled guardrail programs.

One call to :func:`run_turn` processes one user utterance and returns a new
conversation state (the input state is never mutated) plus the agent reply
and a structured trace.  The fixed order of work inside a turn:

1. append the user utterance to the history;
2. global-intent detection — a hit answers immediately, with no slot
   tracking or policy evaluation at all;
3. capture pending confirmation answers into ``answered_*`` helpers;
4. slot tracking: one backend query per tracked slot (optionally skipping
   already-filled slots); a changed slot resets the helpers it invalidates;
5. policy walk from the start node: the first node whose guard holds is
   predicted and executed; branch conditions are resolved by the backend;
6. if the walk predicts nothing, a generative fallback picks an action from
   the program's inventory (an unknown pick degrades to the default
   fallback action).
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

from .backend import BackendRequest, detect_intent
from .chief import canonical_json
from .errors import CodialError, ExternalActionError, UnknownFunction, UnmappedAction
from .ir import GuardrailProgram, NodeAction, eval_predicate, render_predicate

CONTEXT_LINE = "Right now, it is Tuesday, 12 PM."

NULL_WORDS = ("null", "none", "nil", "n/a")


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

@dataclass
class ConversationState:
    variables: dict[str, object] = field(default_factory=dict)
    history: list[dict[str, str]] = field(default_factory=list)

    def copy(self) -> "ConversationState":
        return ConversationState(
            variables=dict(self.variables),
            history=[dict(m) for m in self.history],
        )


@dataclass
class RuntimeOptions:
    # When set, slots that already hold a value are not re-queried.  The
    # default re-queries everything each turn so corrections are picked up.
    skip_filled_slots: bool = False


@dataclass
class TurnResult:
    state: ConversationState
    utterance: str
    action: str | None
    source: str  # intent | nap | fallback
    trace: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "utterance": self.utterance,
            "action": self.action,
            "source": self.source,
            "state": {
                "variables": dict(self.state.variables),
                "history": [dict(m) for m in self.state.history],
            },
            "trace": list(self.trace),
        }


def initial_state(program: GuardrailProgram) -> ConversationState:
    return ConversationState(variables=dict(program.init), history=[])


# ---------------------------------------------------------------------------
# Text helpers
# ---------------------------------------------------------------------------

def render_history(history: list[dict[str, str]]) -> str:
    return "\n".join(f"{m['role']}: {m['content']}" for m in history)


def postprocess_value(text: str):
    """Interpret a raw completion as a slot value.

    One matching pair of surrounding quotes is stripped, then null words,
    booleans, and numbers are interpreted literally; everything else stays
    text.  An empty answer counts as null.
    """
    s = text.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        s = s[1:-1].strip()
    low = s.lower()
    if not s or low in NULL_WORDS:
        return None
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def parse_boolean(text: str) -> bool:
    return text.strip().strip("\"'").lower() in ("yes", "true")


def normalize_answer(text: str) -> str:
    s = text.strip().strip("\"'").lower()
    return s if s in ("yes", "no") else "other"


def describe_slot(name: str) -> str:
    return name.replace("_", " ")


def ask_utterance(slot_names: list[str]) -> str:
    names = [f"the {describe_slot(s)}" for s in slot_names]
    if len(names) == 1:
        listed = names[0]
    elif len(names) == 2:
        listed = f"{names[0]} and {names[1]}"
    else:
        listed = ", ".join(names[:-1]) + f", and {names[-1]}"
    return f"Could you tell me {listed}?"


_PLACEHOLDER = re.compile(r"\[([A-Za-z0-9_]+)\]")


def _format_value(value) -> str:
    if value is True:
        return "yes"
    if value is False:
        return "no"
    return str(value)


def render_template(text: str, program: GuardrailProgram, variables: dict) -> str:
    """Fill ``[name]`` placeholders from slots or external-action results.

    A node's ``returns`` name aliases its ``action_<id>`` helper, so inform
    templates can reference results naturally.  Unresolvable placeholders
    are left verbatim.
    """
    returns_map = {}
    for d in program.nap:
        if d.action.kind == "external_action" and d.action.returns:
            returns_map[d.action.returns] = f"action_{d.node_id}"

    def sub(match: re.Match) -> str:
        name = match.group(1)
        if variables.get(name) is not None:
            return _format_value(variables[name])
        alias = returns_map.get(name)
        if alias is not None and variables.get(alias) is not None:
            return _format_value(variables[alias])
        return match.group(0)

    return _PLACEHOLDER.sub(sub, text)


# ---------------------------------------------------------------------------
# Prompt builders
# ---------------------------------------------------------------------------

def dst_messages(instruction: str, history: list[dict[str, str]]) -> list[dict[str, str]]:
    return [
        {"role": "system", "content": instruction + "\n\n" + CONTEXT_LINE},
        {"role": "user", "content": render_history(history)},
    ]


def nld_messages(condition: str, history: list[dict[str, str]]) -> list[dict[str, str]]:
    system = (
        "Decide whether the following condition currently holds in the "
        'conversation. Respond with "yes" or "no" only.\n\n'
        f"Condition: {condition}"
    )
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": render_history(history)},
    ]


def answered_messages(question: str, history: list[dict[str, str]]) -> list[dict[str, str]]:
    system = (
        f'The agent asked: "{question}" Decide how the user answered. '
        'Respond with "yes", "no", or "other" only.'
    )
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": render_history(history)},
    ]


def _describe_decision(d) -> str:
    a = d.action
    if a.kind == "request":
        return "ask the user for " + ", ".join(f"the {describe_slot(s)}" for s in a.slots)
    if a.kind == "external_action":
        return f"run {a.function}"
    return f"say: {a.template}"


def fallback_messages(program: GuardrailProgram, variables: dict,
                      history: list[dict[str, str]]) -> list[dict[str, str]]:
    lines = [f"- {e.name}: {e.response_template}" for e in program.fallback.entries]
    lines += [f"- {d.node_id}: {_describe_decision(d)}" for d in program.nap]
    system = (
        "The dialogue flow prescribes no next step. Choose the most "
        "appropriate action for the agent from this inventory and respond "
        "with its name only:\n" + "\n".join(lines)
    )
    state_line = "Current state: " + json.dumps(variables, ensure_ascii=False, default=str)
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": render_history(history) + "\n\n" + state_line},
    ]


# ---------------------------------------------------------------------------
# External actions
# ---------------------------------------------------------------------------

def digest_stub(function: str, prefix: str):
    """Deterministic stand-in for a real integration: a short digest of the
    call, so repeated runs and fixtures agree on the 'result'."""

    def run(params: dict) -> str:
        payload = canonical_json({"function": function, "params": params})
        digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()[:6].upper()
        return f"{prefix}-{digest}"

    run.__name__ = function
    return run


def default_registry() -> dict:
    return {
        "book_taxi": digest_stub("book_taxi", "REF"),
        "reset_password": digest_stub("reset_password", "TCK"),
    }


def run_external_action(action: NodeAction, variables: dict, registry: dict):
    fn = registry.get(action.function)
    if fn is None:
        raise UnknownFunction(f"no implementation registered for '{action.function}'")
    params = {arg: variables.get(var) for arg, var in action.params.items()}
    try:
        return fn(params)
    except CodialError:
        raise
    except Exception as exc:
        raise ExternalActionError(f"{action.function} failed: {exc}") from exc


# ---------------------------------------------------------------------------
# Turn loop
# ---------------------------------------------------------------------------

def run_turn(program: GuardrailProgram, state: ConversationState, utterance: str,
             backend, registry: dict | None = None,
             options: RuntimeOptions | None = None) -> TurnResult:
    options = options or RuntimeOptions()
    registry = default_registry() if registry is None else registry
    new = state.copy()
    trace: list[dict] = []
    new.history.append({"role": "user", "content": utterance})

    intent = detect_intent(program, utterance, backend)
    trace.append({"type": "intent", "name": intent.name if intent else None})
    if intent is not None:
        reply = render_template(intent.response_template, program, new.variables)
        new.history.append({"role": "agent", "content": reply})
        return TurnResult(new, reply, intent.name, "intent", trace)

    _capture_answers(program, new, backend, trace)
    _track_slots(program, new, backend, options, trace)

    def nld(condition: str) -> bool:
        raw = backend.complete(BackendRequest(
            "boolean_nld", nld_messages(condition, new.history)))
        value = parse_boolean(raw)
        trace.append({"type": "nld", "condition": condition, "value": value})
        return value

    predicted = _walk(program, new.variables, nld, trace)
    trace.append({"type": "predicted", "node": predicted})

    if predicted is not None:
        reply = _execute_node(program, predicted, new.variables, registry, trace)
        new.history.append({"role": "agent", "content": reply})
        return TurnResult(new, reply, predicted, "nap", trace)

    return _fallback(program, new, backend, registry, trace)


def _capture_answers(program, state: ConversationState, backend, trace) -> None:
    for rule in program.helpers:
        if rule.kind != "answered":
            continue
        shown = state.variables.get(f"inform_{rule.node_id}") is True
        if not shown or state.variables.get(rule.var) is not False:
            continue
        question = program.decision(rule.node_id).action.confirm_question or ""
        raw = backend.complete(BackendRequest(
            "value_from_instruction", answered_messages(question, state.history)))
        value = normalize_answer(raw)
        state.variables[rule.var] = value
        trace.append({"type": "answered", "var": rule.var, "value": value})


def _track_slots(program, state: ConversationState, backend,
                 options: RuntimeOptions, trace) -> None:
    helper_kind = {h.var: h.kind for h in program.helpers}
    for entry in program.dst:
        old = state.variables.get(entry.slot)
        if options.skip_filled_slots and old is not None:
            continue
        raw = backend.complete(BackendRequest(
            "value_from_instruction", dst_messages(entry.instruction, state.history)))
        value = postprocess_value(raw)
        changed = value != old
        invalidated: list[str] = []
        if changed:
            state.variables[entry.slot] = value
            for var in entry.invalidates:
                state.variables[var] = None if helper_kind.get(var) == "action" else False
            invalidated = list(entry.invalidates)
        trace.append({"type": "dst", "slot": entry.slot, "value": value,
                      "changed": changed, "invalidated": invalidated})


def _walk(program, variables: dict, nld, trace) -> str | None:
    visited: set[str] = set()

    def walk(node_id: str) -> str | None:
        if node_id in visited:
            return None
        visited.add(node_id)
        decision = program.decision(node_id)
        holds = eval_predicate(decision.guard, variables, nld)
        trace.append({"type": "guard", "node": node_id,
                      "predicate": render_predicate(decision.guard), "value": holds})
        if holds:
            return node_id
        for branch in decision.branches:
            if branch.condition is None:
                return walk(branch.target)
            if nld(branch.condition):
                # Commit: a matching branch is followed without backtracking.
                trace.append({"type": "branch", "source": node_id,
                              "target": branch.target, "condition": branch.condition})
                return walk(branch.target)
        return None

    return walk(program.graph.start_node)


def _execute_node(program, node_id: str, variables: dict, registry: dict, trace) -> str:
    action = program.decision(node_id).action
    if action.kind == "request":
        missing = [s for s in action.slots if variables.get(s) is None]
        return ask_utterance(missing or action.slots)
    if action.kind == "external_action":
        result = run_external_action(action, variables, registry)
        variables[f"action_{node_id}"] = result
        trace.append({"type": "helper", "var": f"action_{node_id}", "value": result})
        if action.ack_template:
            return render_template(action.ack_template, program, variables)
        return "Done."
    reply = render_template(action.template or "", program, variables)
    if action.confirm_question:
        reply = f"{reply} {action.confirm_question}"
    variables[f"inform_{node_id}"] = True
    trace.append({"type": "helper", "var": f"inform_{node_id}", "value": True})
    return reply


def _fallback(program, state: ConversationState, backend, registry: dict,
              trace) -> TurnResult:
    raw = backend.complete(BackendRequest(
        "fallback_choice",
        fallback_messages(program, state.variables, state.history)))
    choice = raw.strip().strip("\"'")
    by_node = {d.node_id: d for d in program.nap}
    by_node_lower = {k.lower(): k for k in by_node}
    entries = {e.name: e for e in program.fallback.entries}
    entries_lower = {k.lower(): k for k in entries}

    node_id = choice if choice in by_node else by_node_lower.get(choice.lower())
    if node_id is not None:
        trace.append({"type": "fallback", "choice": node_id})
        reply = _execute_node(program, node_id, state.variables, registry, trace)
        state.history.append({"role": "agent", "content": reply})
        return TurnResult(state, reply, node_id, "fallback", trace)

    name = choice if choice in entries else entries_lower.get(choice.lower())
    if name is None:
        default = program.fallback.default_action
        if default not in entries:
            raise UnmappedAction(
                f"fallback chose {choice!r} and no '{default}' action exists")
        trace.append({"type": "fallback", "choice": choice, "resolved": default})
        name = default
    else:
        trace.append({"type": "fallback", "choice": name})
    entry = entries[name]
    reply = render_template(entry.response_template, program, state.variables)
    state.history.append({"role": "agent", "content": reply})
    return TurnResult(state, reply, name, "fallback", trace)
