"""Guardrail-program intermediate representation.

A compiled program has six parts: the initial variable assignment, the
slot-tracking table, the intent table, the next-action policy (one decision
node per flow node, in document order), the helper-update rules, and the
fallback policy.  The source graph travels with the program, together with
a content hash, so a program is self-contained and auditable.

State variables come in two families:

* slot variables, named after the slot, initialized to ``null``;
* helper variables per node: ``action_<id>`` (result of an external action,
  ``null`` until executed), ``inform_<id>`` (``false`` until the message was
  shown), and ``answered_<id>`` (``false`` until the node's confirmation
  question was answered with ``"yes"``/``"no"``/``"other"``; only present
  for inform nodes that carry a confirmation question).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .chief import ChiefGraph, graph_from_dict, graph_to_dict
from .errors import MalformedDocument, SchemaViolation

PROGRAM_VERSION = 1


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

class Predicate:
    """Base for guard predicates; concrete variants are frozen dataclasses."""


@dataclass(frozen=True)
class IsNull(Predicate):
    var: str


@dataclass(frozen=True)
class IsFalse(Predicate):
    var: str


@dataclass(frozen=True)
class And(Predicate):
    terms: tuple[Predicate, ...]


@dataclass(frozen=True)
class Or(Predicate):
    terms: tuple[Predicate, ...]


@dataclass(frozen=True)
class Nld(Predicate):
    """Opaque natural-language condition, resolved by the backend at runtime."""

    text: str


def eval_predicate(pred: Predicate, state: dict, nld) -> bool:
    """Evaluate against a state mapping; ``nld(text) -> bool`` resolves
    natural-language terms."""
    if isinstance(pred, IsNull):
        return state.get(pred.var) is None
    if isinstance(pred, IsFalse):
        return state.get(pred.var) is False
    if isinstance(pred, And):
        return all(eval_predicate(t, state, nld) for t in pred.terms)
    if isinstance(pred, Or):
        return any(eval_predicate(t, state, nld) for t in pred.terms)
    if isinstance(pred, Nld):
        return bool(nld(pred.text))
    raise TypeError(f"not a predicate: {pred!r}")


def is_machine_predicate(pred: Predicate) -> bool:
    """True when evaluation never needs the backend."""
    if isinstance(pred, (IsNull, IsFalse)):
        return True
    if isinstance(pred, (And, Or)):
        return all(is_machine_predicate(t) for t in pred.terms)
    return False


def render_predicate(pred: Predicate) -> str:
    if isinstance(pred, IsNull):
        return f"{pred.var} == null"
    if isinstance(pred, IsFalse):
        return f"{pred.var} == false"
    if isinstance(pred, And):
        return "(" + " and ".join(render_predicate(t) for t in pred.terms) + ")"
    if isinstance(pred, Or):
        return "(" + " or ".join(render_predicate(t) for t in pred.terms) + ")"
    if isinstance(pred, Nld):
        return f'nld("{pred.text}")'
    raise TypeError(f"not a predicate: {pred!r}")


def predicate_to_dict(pred: Predicate) -> dict:
    if isinstance(pred, IsNull):
        return {"op": "is_null", "var": pred.var}
    if isinstance(pred, IsFalse):
        return {"op": "is_false", "var": pred.var}
    if isinstance(pred, And):
        return {"op": "and", "terms": [predicate_to_dict(t) for t in pred.terms]}
    if isinstance(pred, Or):
        return {"op": "or", "terms": [predicate_to_dict(t) for t in pred.terms]}
    if isinstance(pred, Nld):
        return {"op": "nld", "text": pred.text}
    raise TypeError(f"not a predicate: {pred!r}")


def predicate_from_dict(data, path: str = "guard") -> Predicate:
    if not isinstance(data, dict) or "op" not in data:
        raise SchemaViolation(path, "expected a predicate object with an 'op' field")
    op = data["op"]
    if op == "is_null":
        return IsNull(data["var"])
    if op == "is_false":
        return IsFalse(data["var"])
    if op == "and":
        return And(tuple(predicate_from_dict(t, f"{path}.terms[{i}]")
                         for i, t in enumerate(data.get("terms", []))))
    if op == "or":
        return Or(tuple(predicate_from_dict(t, f"{path}.terms[{i}]")
                        for i, t in enumerate(data.get("terms", []))))
    if op == "nld":
        return Nld(data["text"])
    raise SchemaViolation(f"{path}.op", f"unknown predicate op '{op}'")


# ---------------------------------------------------------------------------
# Program tables
# ---------------------------------------------------------------------------

@dataclass
class DstEntry:
    slot: str
    value_type: str
    node_id: str  # request node that owns the slot
    instruction: str
    invalidates: list[str] = field(default_factory=list)


@dataclass
class IntentEntry:
    name: str
    response_template: str
    trigger_examples: list[str] = field(default_factory=list)


@dataclass
class Branch:
    target: str
    condition: str | None = None  # None marks the default branch


@dataclass
class NodeAction:
    """What the agent does when the decision node is predicted."""

    kind: str  # request | external_action | inform
    slots: list[str] = field(default_factory=list)
    function: str | None = None
    params: dict[str, str] = field(default_factory=dict)
    returns: str | None = None
    ack_template: str | None = None
    template: str | None = None
    confirm_question: str | None = None


@dataclass
class DecisionNode:
    node_id: str
    guard: Predicate
    action: NodeAction
    branches: list[Branch] = field(default_factory=list)


@dataclass
class HelperRule:
    var: str
    node_id: str
    kind: str  # action | inform | answered


@dataclass
class FallbackEntry:
    name: str
    response_template: str


@dataclass
class FallbackPolicy:
    entries: list[FallbackEntry] = field(default_factory=list)
    default_action: str = "out_of_scope"


@dataclass
class GuardrailProgram:
    source_graph_hash: str
    graph: ChiefGraph
    init: dict[str, object]  # var -> None | False
    dst: list[DstEntry]
    intents: list[IntentEntry]
    nap: list[DecisionNode]
    helpers: list[HelperRule]
    fallback: FallbackPolicy

    def decision(self, node_id: str) -> DecisionNode:
        for d in self.nap:
            if d.node_id == node_id:
                return d
        raise KeyError(node_id)

    def helper_vars(self, node_id: str) -> list[str]:
        return [h.var for h in self.helpers if h.node_id == node_id]

    def slot_names(self) -> list[str]:
        return [e.slot for e in self.dst]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def program_to_dict(program: GuardrailProgram) -> dict:
    return {
        "version": PROGRAM_VERSION,
        "source_graph_hash": program.source_graph_hash,
        "graph": graph_to_dict(program.graph),
        "init": dict(program.init),
        "dst": [
            {
                "slot": e.slot,
                "value_type": e.value_type,
                "node": e.node_id,
                "instruction": e.instruction,
                "invalidates": list(e.invalidates),
            }
            for e in program.dst
        ],
        "intents": [
            {
                "name": i.name,
                "response_template": i.response_template,
                "trigger_examples": list(i.trigger_examples),
            }
            for i in program.intents
        ],
        "nap": [
            {
                "node": d.node_id,
                "guard": predicate_to_dict(d.guard),
                "action": _action_to_dict(d.action),
                "branches": [
                    {"target": b.target, "condition": b.condition} for b in d.branches
                ],
            }
            for d in program.nap
        ],
        "helpers": [
            {"var": h.var, "node": h.node_id, "kind": h.kind} for h in program.helpers
        ],
        "fallback": {
            "entries": [
                {"name": f.name, "response_template": f.response_template}
                for f in program.fallback.entries
            ],
            "default": program.fallback.default_action,
        },
    }


def _action_to_dict(a: NodeAction) -> dict:
    out: dict = {"kind": a.kind}
    if a.kind == "request":
        out["slots"] = list(a.slots)
    elif a.kind == "external_action":
        out["function"] = a.function
        out["params"] = dict(a.params)
        if a.returns is not None:
            out["returns"] = a.returns
        if a.ack_template is not None:
            out["ack_template"] = a.ack_template
    elif a.kind == "inform":
        out["template"] = a.template
        if a.confirm_question is not None:
            out["confirm_question"] = a.confirm_question
    return out


def _action_from_dict(data: dict, path: str) -> NodeAction:
    kind = data.get("kind")
    if kind not in ("request", "external_action", "inform"):
        raise SchemaViolation(f"{path}.kind", f"unknown action kind '{kind}'")
    return NodeAction(
        kind=kind,
        slots=list(data.get("slots", [])),
        function=data.get("function"),
        params=dict(data.get("params", {})),
        returns=data.get("returns"),
        ack_template=data.get("ack_template"),
        template=data.get("template"),
        confirm_question=data.get("confirm_question"),
    )


def program_from_dict(data: dict) -> GuardrailProgram:
    if not isinstance(data, dict):
        raise SchemaViolation("$", "expected a program object")
    for key in ("source_graph_hash", "graph", "init", "dst", "intents",
                "nap", "helpers", "fallback"):
        if key not in data:
            raise SchemaViolation(key, "missing required field")
    init: dict[str, object] = {}
    for var, value in data["init"].items():
        if value is not None and value is not False:
            raise SchemaViolation(f"init.{var}", "initial values are null or false")
        init[var] = value
    return GuardrailProgram(
        source_graph_hash=data["source_graph_hash"],
        graph=graph_from_dict(data["graph"]),
        init=init,
        dst=[
            DstEntry(
                slot=e["slot"],
                value_type=e.get("value_type", "text"),
                node_id=e["node"],
                instruction=e["instruction"],
                invalidates=list(e.get("invalidates", [])),
            )
            for e in data["dst"]
        ],
        intents=[
            IntentEntry(
                name=i["name"],
                response_template=i["response_template"],
                trigger_examples=list(i.get("trigger_examples", [])),
            )
            for i in data["intents"]
        ],
        nap=[
            DecisionNode(
                node_id=d["node"],
                guard=predicate_from_dict(d["guard"], f"nap[{i}].guard"),
                action=_action_from_dict(d["action"], f"nap[{i}].action"),
                branches=[
                    Branch(target=b["target"], condition=b.get("condition"))
                    for b in d.get("branches", [])
                ],
            )
            for i, d in enumerate(data["nap"])
        ],
        helpers=[
            HelperRule(var=h["var"], node_id=h["node"], kind=h["kind"])
            for h in data["helpers"]
        ],
        fallback=FallbackPolicy(
            entries=[
                FallbackEntry(name=f["name"], response_template=f["response_template"])
                for f in data["fallback"].get("entries", [])
            ],
            default_action=data["fallback"].get("default", "out_of_scope"),
        ),
    )


def serialize_program(program: GuardrailProgram) -> str:
    return json.dumps(program_to_dict(program), indent=2, ensure_ascii=False) + "\n"


def parse_program(text: str) -> GuardrailProgram:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc
    return program_from_dict(data)
