"""Dialogue-flow graph model: JSON parsing, validation, and reachability.

A flow is a heterogeneous directed graph. Nodes are typed (request /
external_action / inform), edges may carry a natural-language condition,
and the flow can additionally declare global actions (triggerable at any
point) and fallback actions (used when nothing else applies).

The JSON encoding is pinned here:

    {
      "start_node": "n1",            # optional, defaults to first node
      "nodes": [
        {"id": "n1", "type": "request",
         "slots": [{"name": "departure", "value_type": "text",
                    "examples": ["Downtown"], "rule": "..."}]},
        {"id": "n2", "type": "external_action", "function": "book_taxi",
         "params": {"departure": "departure"}, "returns": "ref_no",
         "ack_template": "Booking your taxi now."},
        {"id": "n3", "type": "inform",
         "template": "Your taxi is booked with reference number [ref_no]",
         "confirm_question": "Do you confirm?"}
      ],
      "edges": [{"source": "n1", "target": "n2", "condition": "..."}],
      "global_actions": [{"name": "hello", "response_template": "...",
                          "trigger_examples": ["hello", "hi"]}],
      "fallback_actions": [{"name": "goodbye", "response_template": "..."}]
    }

Unknown keys are preserved on round-trip but carry no semantics.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

from .errors import MalformedDocument, SchemaViolation, UnknownNode

VALUE_TYPES = ("text", "categorical", "number", "boolean", "datetime")
NODE_KINDS = ("request", "external_action", "inform")


@dataclass
class Slot:
    name: str
    value_type: str = "text"
    examples: list[str] = field(default_factory=list)
    rule: str | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class Node:
    """A typed flow node; the payload fields used depend on ``kind``."""

    id: str
    kind: str
    # request payload
    slots: list[Slot] = field(default_factory=list)
    # external_action payload
    function: str | None = None
    params: dict[str, str] = field(default_factory=dict)
    returns: str | None = None
    ack_template: str | None = None
    # inform payload
    template: str | None = None
    confirm_question: str | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class Edge:
    source: str
    target: str
    condition: str | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class GlobalAction:
    name: str
    response_template: str
    trigger_examples: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


@dataclass
class FallbackAction:
    name: str
    response_template: str
    extra: dict = field(default_factory=dict)


@dataclass
class ChiefGraph:
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    global_actions: list[GlobalAction] = field(default_factory=list)
    fallback_actions: list[FallbackAction] = field(default_factory=list)
    start_node: str | None = None
    extra: dict = field(default_factory=dict)

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise UnknownNode(node_id)

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def out_edges(self, node_id: str) -> list[Edge]:
        return [e for e in self.edges if e.source == node_id]


@dataclass
class Diagnostic:
    severity: str  # "error" | "warning"
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.severity}: {self.message}"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_NODE_KNOWN_KEYS = {
    "id", "type", "slots", "function", "params", "returns", "ack_template",
    "template", "confirm_question",
}
_SLOT_KNOWN_KEYS = {"name", "value_type", "examples", "rule"}
_EDGE_KNOWN_KEYS = {"source", "target", "condition"}
_GLOBAL_KNOWN_KEYS = {"name", "response_template", "trigger_examples"}
_FALLBACK_KNOWN_KEYS = {"name", "response_template"}
_TOP_KNOWN_KEYS = {"nodes", "edges", "global_actions", "fallback_actions", "start_node"}


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise SchemaViolation(path, f"missing required field '{key}'")
    return obj[key]


def _expect_str(value, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaViolation(path, f"expected a string, got {type(value).__name__}")
    return value


def _expect_list(value, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaViolation(path, f"expected a list, got {type(value).__name__}")
    return value


def _expect_dict(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaViolation(path, f"expected an object, got {type(value).__name__}")
    return value


def _parse_slot(obj, path: str) -> Slot:
    obj = _expect_dict(obj, path)
    name = _expect_str(_require(obj, "name", path), f"{path}.name")
    value_type = obj.get("value_type", "text")
    if value_type not in VALUE_TYPES:
        raise SchemaViolation(f"{path}.value_type", f"unknown value type '{value_type}'")
    examples = [
        _expect_str(x, f"{path}.examples[{i}]")
        for i, x in enumerate(_expect_list(obj.get("examples", []), f"{path}.examples"))
    ]
    rule = obj.get("rule")
    if rule is not None:
        rule = _expect_str(rule, f"{path}.rule")
    extra = {k: copy.deepcopy(v) for k, v in obj.items() if k not in _SLOT_KNOWN_KEYS}
    return Slot(name=name, value_type=value_type, examples=examples, rule=rule, extra=extra)


def _parse_node(obj, path: str) -> Node:
    obj = _expect_dict(obj, path)
    node_id = _expect_str(_require(obj, "id", path), f"{path}.id")
    kind = _expect_str(_require(obj, "type", path), f"{path}.type")
    if kind not in NODE_KINDS:
        raise SchemaViolation(f"{path}.type", f"unknown node type '{kind}'")
    node = Node(id=node_id, kind=kind)
    if kind == "request":
        slots = _expect_list(_require(obj, "slots", path), f"{path}.slots")
        node.slots = [_parse_slot(s, f"{path}.slots[{i}]") for i, s in enumerate(slots)]
    elif kind == "external_action":
        node.function = _expect_str(_require(obj, "function", path), f"{path}.function")
        params = _expect_dict(obj.get("params", {}), f"{path}.params")
        node.params = {
            _expect_str(k, f"{path}.params"): _expect_str(v, f"{path}.params.{k}")
            for k, v in params.items()
        }
        if obj.get("returns") is not None:
            node.returns = _expect_str(obj["returns"], f"{path}.returns")
        if obj.get("ack_template") is not None:
            node.ack_template = _expect_str(obj["ack_template"], f"{path}.ack_template")
    elif kind == "inform":
        node.template = _expect_str(_require(obj, "template", path), f"{path}.template")
        if obj.get("confirm_question") is not None:
            node.confirm_question = _expect_str(
                obj["confirm_question"], f"{path}.confirm_question"
            )
    node.extra = {k: copy.deepcopy(v) for k, v in obj.items() if k not in _NODE_KNOWN_KEYS}
    return node


def parse_chief(document: str) -> ChiefGraph:
    """Parse a flow document into a graph, preserving node and edge order.

    Structural problems beyond the schema (dangling edges, duplicate ids,
    missing start) are left to :func:`validate_chief` so that a graph can
    always be inspected after parsing.
    """
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc
    return graph_from_dict(data)


def graph_from_dict(data) -> ChiefGraph:
    data = _expect_dict(data, "$")
    nodes_raw = _expect_list(_require(data, "nodes", "$"), "nodes")
    edges_raw = _expect_list(_require(data, "edges", "$"), "edges")

    nodes = [_parse_node(n, f"nodes[{i}]") for i, n in enumerate(nodes_raw)]

    edges = []
    for i, e in enumerate(edges_raw):
        e = _expect_dict(e, f"edges[{i}]")
        source = _expect_str(_require(e, "source", f"edges[{i}]"), f"edges[{i}].source")
        target = _expect_str(_require(e, "target", f"edges[{i}]"), f"edges[{i}].target")
        condition = e.get("condition")
        if condition is not None:
            condition = _expect_str(condition, f"edges[{i}].condition")
        extra = {k: copy.deepcopy(v) for k, v in e.items() if k not in _EDGE_KNOWN_KEYS}
        edges.append(Edge(source=source, target=target, condition=condition, extra=extra))

    global_actions = []
    for i, g in enumerate(_expect_list(data.get("global_actions", []), "global_actions")):
        g = _expect_dict(g, f"global_actions[{i}]")
        global_actions.append(GlobalAction(
            name=_expect_str(_require(g, "name", f"global_actions[{i}]"),
                             f"global_actions[{i}].name"),
            response_template=_expect_str(
                _require(g, "response_template", f"global_actions[{i}]"),
                f"global_actions[{i}].response_template"),
            trigger_examples=[
                _expect_str(t, f"global_actions[{i}].trigger_examples[{j}]")
                for j, t in enumerate(_expect_list(
                    g.get("trigger_examples", []), f"global_actions[{i}].trigger_examples"))
            ],
            extra={k: copy.deepcopy(v) for k, v in g.items() if k not in _GLOBAL_KNOWN_KEYS},
        ))

    fallback_actions = []
    for i, f in enumerate(_expect_list(data.get("fallback_actions", []), "fallback_actions")):
        f = _expect_dict(f, f"fallback_actions[{i}]")
        fallback_actions.append(FallbackAction(
            name=_expect_str(_require(f, "name", f"fallback_actions[{i}]"),
                             f"fallback_actions[{i}].name"),
            response_template=_expect_str(
                _require(f, "response_template", f"fallback_actions[{i}]"),
                f"fallback_actions[{i}].response_template"),
            extra={k: copy.deepcopy(v) for k, v in f.items() if k not in _FALLBACK_KNOWN_KEYS},
        ))

    start_node = data.get("start_node")
    if start_node is not None:
        start_node = _expect_str(start_node, "start_node")
    elif nodes:
        start_node = nodes[0].id

    extra = {k: copy.deepcopy(v) for k, v in data.items() if k not in _TOP_KNOWN_KEYS}
    return ChiefGraph(nodes=nodes, edges=edges, global_actions=global_actions,
                      fallback_actions=fallback_actions, start_node=start_node, extra=extra)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _slot_to_dict(s: Slot) -> dict:
    out: dict = {"name": s.name, "value_type": s.value_type}
    if s.examples:
        out["examples"] = list(s.examples)
    if s.rule is not None:
        out["rule"] = s.rule
    out.update(s.extra)
    return out


def _node_to_dict(n: Node) -> dict:
    out: dict = {"id": n.id, "type": n.kind}
    if n.kind == "request":
        out["slots"] = [_slot_to_dict(s) for s in n.slots]
    elif n.kind == "external_action":
        out["function"] = n.function
        if n.params:
            out["params"] = dict(n.params)
        if n.returns is not None:
            out["returns"] = n.returns
        if n.ack_template is not None:
            out["ack_template"] = n.ack_template
    elif n.kind == "inform":
        out["template"] = n.template
        if n.confirm_question is not None:
            out["confirm_question"] = n.confirm_question
    out.update(n.extra)
    return out


def graph_to_dict(graph: ChiefGraph) -> dict:
    out: dict = {
        "nodes": [_node_to_dict(n) for n in graph.nodes],
        "edges": [],
    }
    for e in graph.edges:
        edge: dict = {"source": e.source, "target": e.target}
        if e.condition is not None:
            edge["condition"] = e.condition
        edge.update(e.extra)
        out["edges"].append(edge)
    if graph.global_actions:
        out["global_actions"] = []
        for g in graph.global_actions:
            ga: dict = {"name": g.name, "response_template": g.response_template}
            if g.trigger_examples:
                ga["trigger_examples"] = list(g.trigger_examples)
            ga.update(g.extra)
            out["global_actions"].append(ga)
    if graph.fallback_actions:
        out["fallback_actions"] = []
        for f in graph.fallback_actions:
            fa: dict = {"name": f.name, "response_template": f.response_template}
            fa.update(f.extra)
            out["fallback_actions"].append(fa)
    if graph.start_node is not None:
        out["start_node"] = graph.start_node
    out.update(graph.extra)
    return out


def serialize_chief(graph: ChiefGraph) -> str:
    """Serialize to JSON text; ``parse_chief(serialize_chief(g))`` equals ``g``."""
    return json.dumps(graph_to_dict(graph), indent=2, ensure_ascii=False) + "\n"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def graph_hash(graph: ChiefGraph) -> str:
    """SHA-256 digest of the canonicalized graph JSON."""
    return hashlib.sha256(canonical_json(graph_to_dict(graph)).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_chief(graph: ChiefGraph) -> list[Diagnostic]:
    """Check structural well-formedness; empty result means the graph is clean.

    Errors block compilation; warnings (currently only unreachable nodes)
    do not.
    """
    diags: list[Diagnostic] = []
    err = lambda path, msg: diags.append(Diagnostic("error", path, msg))
    warn = lambda path, msg: diags.append(Diagnostic("warning", path, msg))

    seen_ids: set[str] = set()
    for i, node in enumerate(graph.nodes):
        path = f"nodes[{i}]"
        if not node.id:
            err(f"{path}.id", "node id must be a non-empty string")
        elif node.id in seen_ids:
            err(f"{path}.id", f"duplicate node id '{node.id}'")
        seen_ids.add(node.id)
        if node.kind == "request":
            if not node.slots:
                err(f"{path}.slots", "request node must define at least one slot")
            slot_names = set()
            for j, slot in enumerate(node.slots):
                if slot.name in slot_names:
                    err(f"{path}.slots[{j}].name",
                        f"duplicate slot name '{slot.name}' in node '{node.id}'")
                slot_names.add(slot.name)
                if slot.value_type == "categorical" and not slot.examples:
                    err(f"{path}.slots[{j}].examples",
                        f"categorical slot '{slot.name}' needs at least one example value")
        elif node.kind == "external_action":
            if not node.function:
                err(f"{path}.function", "external action must name a function")
        elif node.kind == "inform":
            if not node.template:
                err(f"{path}.template", "inform node must have a non-empty template")

    # Slot names are global state variables, so they must be unique graph-wide.
    slot_owner: dict[str, str] = {}
    for i, node in enumerate(graph.nodes):
        for j, slot in enumerate(node.slots):
            if slot.name in slot_owner and slot_owner[slot.name] != node.id:
                err(f"nodes[{i}].slots[{j}].name",
                    f"slot '{slot.name}' already defined by node '{slot_owner[slot.name]}'")
            slot_owner.setdefault(slot.name, node.id)

    for i, edge in enumerate(graph.edges):
        if edge.source not in seen_ids:
            err(f"edges[{i}].source", f"unknown source {edge.source}")
        if edge.target not in seen_ids:
            err(f"edges[{i}].target", f"unknown target {edge.target}")

    # One default (unconditioned) branch per node at most.
    default_count: dict[str, int] = {}
    for edge in graph.edges:
        if edge.condition is None:
            default_count[edge.source] = default_count.get(edge.source, 0) + 1
    for i, edge in enumerate(graph.edges):
        if edge.condition is None and default_count.get(edge.source, 0) > 1:
            err(f"edges[{i}]",
                f"node '{edge.source}' has multiple unconditioned outgoing edges")
            default_count[edge.source] = 0  # report once

    action_names: set[str] = set()
    for i, g in enumerate(graph.global_actions):
        path = f"global_actions[{i}].name"
        if not g.name:
            err(path, "action name must be non-empty")
        if g.name in action_names:
            err(path, f"duplicate action name '{g.name}'")
        if g.name in seen_ids:
            err(path, f"action name '{g.name}' collides with a node id")
        action_names.add(g.name)
    for i, f in enumerate(graph.fallback_actions):
        path = f"fallback_actions[{i}].name"
        if not f.name:
            err(path, "action name must be non-empty")
        if f.name in action_names:
            err(path, f"duplicate action name '{f.name}'")
        if f.name in seen_ids:
            err(path, f"action name '{f.name}' collides with a node id")
        action_names.add(f.name)

    if graph.start_node is None:
        err("start_node", "graph has no start node")
    elif graph.start_node not in seen_ids:
        err("start_node", f"start node '{graph.start_node}' does not exist")
    elif not any(d.severity == "error" for d in diags):
        reachable = reachable_nodes(graph, graph.start_node) | {graph.start_node}
        for i, node in enumerate(graph.nodes):
            if node.id not in reachable:
                warn(f"nodes[{i}]", f"unreachable node {node.id}")

    return diags


# ---------------------------------------------------------------------------
# Reachability
# ---------------------------------------------------------------------------

def reachable_nodes(graph: ChiefGraph, from_id: str) -> set[str]:
    """All nodes reachable from ``from_id`` through one or more edges.

    The starting node itself is included only when it sits on a cycle
    through itself.
    """
    if from_id not in {n.id for n in graph.nodes}:
        raise UnknownNode(from_id)
    succ: dict[str, list[str]] = {}
    for e in graph.edges:
        succ.setdefault(e.source, []).append(e.target)
    seen: set[str] = set()
    frontier = list(succ.get(from_id, []))
    while frontier:
        node = frontier.pop()
        if node in seen:
            continue
        seen.add(node)
        frontier.extend(succ.get(node, []))
    return seen
