"""Deterministic graph-to-program compiler plus lint and repair passes.

Compilation is pure: the same graph always yields the byte-identical
program.  Three lint passes check a program against its source graph:

* RI1 — the decision-node layer mirrors the graph: one decision node per
  flow node, matching action kinds, branches that reflect the outgoing
  edges, matching non-request guards, and matching helper rules.
* RI2 — the slot-tracking table: one entry per slot, instructions that
  mention the slot, and invalidation lists that equal the helper variables
  of the nodes reachable from the slot's request node.
* RI3 — request-node guards reflect the slot rules.

``repair`` fixes RI1/RI2 findings mechanically by grafting the affected
pieces from a fresh compile; RI3 findings are surfaced but never auto-fixed
because a rule that failed to parse needs a human decision.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .chief import ChiefGraph, Node, Slot, graph_hash, reachable_nodes, validate_chief
from .errors import IrreparableProgram, ValidationFailed
from .ir import (
    And,
    Branch,
    DecisionNode,
    DstEntry,
    FallbackEntry,
    FallbackPolicy,
    GuardrailProgram,
    HelperRule,
    IntentEntry,
    IsFalse,
    IsNull,
    Nld,
    NodeAction,
    Or,
    Predicate,
    render_predicate,
)

_ANY_KEYWORDS = ("either", "or", "any", "sufficient")
_ALL_KEYWORDS = ("required", "needed", "mandatory", "all", "both")


@dataclass
class ParsedRule:
    kind: str  # any_of | all_of
    slots: list[str]


def parse_slot_rule(rule: str, slot_names: list[str]) -> ParsedRule | None:
    """Interpret a slot rule; ``None`` means it needs human review.

    Two structured forms are recognized (``any-of: a, b`` / ``all-of: a, b``),
    plus a natural-language fallback keyed on alternation or requirement
    keywords with whole-word slot-name mentions.
    """
    text = rule.strip().lower()
    if text.startswith(("any-of:", "all-of:")):
        kind = "any_of" if text.startswith("any-of:") else "all_of"
        names = [x.strip() for x in text.split(":", 1)[1].split(",") if x.strip()]
        by_lower = {s.lower(): s for s in slot_names}
        if names and all(n in by_lower for n in names):
            return ParsedRule(kind, [by_lower[n] for n in names])
        return None
    tokens = re.findall(r"[a-z0-9_]+", text)
    mentioned = set(tokens)
    matched = [s for s in slot_names if s.lower() in mentioned]
    if any(k in mentioned for k in _ANY_KEYWORDS) and len(matched) >= 2:
        return ParsedRule("any_of", matched)
    if any(k in mentioned for k in _ALL_KEYWORDS) and matched:
        return ParsedRule("all_of", matched)
    return None


def request_guard(node: Node) -> Predicate:
    """The node still needs user input.

    Default: any slot being null keeps the request active.  A parsed any-of
    rule collapses its group into a single all-null conjunction (one filled
    group member satisfies the group).  An unparseable rule degrades to a
    natural-language check for its slot.
    """
    slot_names = [s.name for s in node.slots]
    terms: list[Predicate] = []
    covered: set[str] = set()
    for slot in node.slots:
        if slot.name in covered:
            continue
        if slot.rule:
            parsed = parse_slot_rule(slot.rule, slot_names)
            if parsed is None:
                terms.append(Nld(f"slot '{slot.name}' is still required: {slot.rule}"))
                covered.add(slot.name)
                continue
            if parsed.kind == "any_of" and len(parsed.slots) >= 2:
                terms.append(And(tuple(IsNull(s) for s in parsed.slots)))
                covered.update(parsed.slots)
                continue
            # all-of: every mentioned slot is individually required, which is
            # the default treatment, so fall through.
        terms.append(IsNull(slot.name))
        covered.add(slot.name)
    if len(terms) == 1:
        return terms[0]
    return Or(tuple(terms))


def node_guard(node: Node) -> Predicate:
    if node.kind == "request":
        return request_guard(node)
    if node.kind == "external_action":
        return IsNull(f"action_{node.id}")
    return IsFalse(f"inform_{node.id}")


def slot_instruction(slot: Slot) -> str:
    parts = [f"Track the value of the slot '{slot.name}' ({slot.value_type}) "
             f"from the conversation."]
    if slot.examples:
        quoted = ", ".join(f'"{e}"' for e in slot.examples)
        parts.append(f"Example values: {quoted}.")
    parts.append('Respond with the value only, or "null" if the user has not provided it.')
    return " ".join(parts)


def helper_rules_for(node: Node) -> list[HelperRule]:
    if node.kind == "external_action":
        return [HelperRule(f"action_{node.id}", node.id, "action")]
    if node.kind == "inform":
        rules = [HelperRule(f"inform_{node.id}", node.id, "inform")]
        if node.confirm_question is not None:
            rules.append(HelperRule(f"answered_{node.id}", node.id, "answered"))
        return rules
    return []


def node_branches(graph: ChiefGraph, node_id: str) -> list[Branch]:
    """Outgoing edges as branches: conditioned ones in document order, the
    default one (if any) last."""
    conditioned = []
    default = []
    for e in graph.out_edges(node_id):
        if e.condition is None:
            default.append(Branch(target=e.target, condition=None))
        else:
            conditioned.append(Branch(target=e.target, condition=e.condition))
    return conditioned + default


def node_action(node: Node) -> NodeAction:
    if node.kind == "request":
        return NodeAction(kind="request", slots=[s.name for s in node.slots])
    if node.kind == "external_action":
        return NodeAction(
            kind="external_action",
            function=node.function,
            params=dict(node.params),
            returns=node.returns,
            ack_template=node.ack_template,
        )
    return NodeAction(
        kind="inform",
        template=node.template,
        confirm_question=node.confirm_question,
    )


def invalidation_set(graph: ChiefGraph, request_node_id: str) -> list[str]:
    """Helper variables of every node reachable from the request node, in
    document order.

    Changing a slot can change the path ahead, so everything downstream of
    its request node must be allowed to run again.
    """
    reachable = reachable_nodes(graph, request_node_id)
    out: list[str] = []
    for node in graph.nodes:
        if node.id in reachable:
            out.extend(h.var for h in helper_rules_for(node))
    return out


def compile_graph(graph: ChiefGraph) -> GuardrailProgram:
    """Compile a validated graph into its guardrail program.

    Raises :class:`ValidationFailed` if the graph has validation errors;
    warnings do not block.
    """
    diags = validate_chief(graph)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise ValidationFailed(errors)

    init: dict[str, object] = {}
    dst: list[DstEntry] = []
    helpers: list[HelperRule] = []
    nap: list[DecisionNode] = []

    for node in graph.nodes:
        for slot in node.slots:
            init[slot.name] = None
    for node in graph.nodes:
        for rule in helper_rules_for(node):
            helpers.append(rule)
            init[rule.var] = None if rule.kind == "action" else False

    for node in graph.nodes:
        for slot in node.slots:
            dst.append(DstEntry(
                slot=slot.name,
                value_type=slot.value_type,
                node_id=node.id,
                instruction=slot_instruction(slot),
                invalidates=invalidation_set(graph, node.id),
            ))

    for node in graph.nodes:
        nap.append(DecisionNode(
            node_id=node.id,
            guard=node_guard(node),
            action=node_action(node),
            branches=node_branches(graph, node.id),
        ))

    intents = [
        IntentEntry(name=g.name, response_template=g.response_template,
                    trigger_examples=list(g.trigger_examples))
        for g in graph.global_actions
    ]
    fallback = FallbackPolicy(
        entries=[FallbackEntry(name=f.name, response_template=f.response_template)
                 for f in graph.fallback_actions],
        default_action="out_of_scope",
    )

    return GuardrailProgram(
        source_graph_hash=graph_hash(graph),
        graph=graph,
        init=init,
        dst=dst,
        intents=intents,
        nap=nap,
        helpers=helpers,
        fallback=fallback,
    )


# ---------------------------------------------------------------------------
# Lint
# ---------------------------------------------------------------------------

@dataclass
class LintFinding:
    rule: str  # RI1 | RI2 | RI3
    severity: str  # error | warning
    message: str
    node_id: str | None = None
    slot: str | None = None

    def __str__(self) -> str:
        where = self.node_id or self.slot or "-"
        return f"[{self.rule}] {self.severity} at {where}: {self.message}"


def lint_ri1(program: GuardrailProgram, graph: ChiefGraph) -> list[LintFinding]:
    """Decision-node layer vs the graph."""
    findings: list[LintFinding] = []
    node_ids = graph.node_ids()
    seen: dict[str, int] = {}
    for d in program.nap:
        seen[d.node_id] = seen.get(d.node_id, 0) + 1

    for nid in node_ids:
        if nid not in seen:
            findings.append(LintFinding("RI1", "error", "no decision node for this flow node",
                                        node_id=nid))
    for nid, count in seen.items():
        if nid not in node_ids:
            findings.append(LintFinding("RI1", "error",
                                        "decision node refers to a node not in the flow",
                                        node_id=nid))
        elif count > 1:
            findings.append(LintFinding("RI1", "error",
                                        f"node checked {count} times instead of once",
                                        node_id=nid))

    for d in program.nap:
        if d.node_id not in node_ids:
            continue
        node = graph.node(d.node_id)
        if d.action.kind != node.kind:
            findings.append(LintFinding(
                "RI1", "error",
                f"action kind '{d.action.kind}' does not match node kind '{node.kind}'",
                node_id=d.node_id))
        expected_branches = node_branches(graph, d.node_id)
        if d.branches != expected_branches:
            findings.append(LintFinding(
                "RI1", "error",
                "branches do not match the node's outgoing edges",
                node_id=d.node_id))
        if node.kind != "request" and d.guard != node_guard(node):
            findings.append(LintFinding(
                "RI1", "error",
                f"guard should be '{render_predicate(node_guard(node))}'",
                node_id=d.node_id))

    expected_helpers = []
    for node in graph.nodes:
        expected_helpers.extend(helper_rules_for(node))
    if program.helpers != expected_helpers:
        expected_vars = {h.var for h in expected_helpers}
        actual_vars = {h.var for h in program.helpers}
        for var in sorted(expected_vars - actual_vars):
            findings.append(LintFinding("RI1", "error", f"missing helper rule '{var}'"))
        for var in sorted(actual_vars - expected_vars):
            findings.append(LintFinding("RI1", "error", f"spurious helper rule '{var}'"))
        if expected_vars == actual_vars:
            findings.append(LintFinding("RI1", "error", "helper rules are out of order"))
    return findings


def lint_ri2(program: GuardrailProgram, graph: ChiefGraph) -> list[LintFinding]:
    """Slot-tracking table vs the graph."""
    findings: list[LintFinding] = []
    slot_nodes: dict[str, tuple[Node, Slot]] = {}
    for node in graph.nodes:
        for slot in node.slots:
            slot_nodes[slot.name] = (node, slot)

    seen: dict[str, int] = {}
    for e in program.dst:
        seen[e.slot] = seen.get(e.slot, 0) + 1
    for name in slot_nodes:
        if name not in seen:
            findings.append(LintFinding("RI2", "error", "slot is not tracked", slot=name))
    for name, count in seen.items():
        if name not in slot_nodes:
            findings.append(LintFinding("RI2", "error",
                                        "tracked slot does not exist in the flow", slot=name))
        elif count > 1:
            findings.append(LintFinding("RI2", "error",
                                        f"slot tracked {count} times instead of once", slot=name))

    for e in program.dst:
        if e.slot not in slot_nodes:
            continue
        node, slot = slot_nodes[e.slot]
        if e.node_id != node.id:
            findings.append(LintFinding(
                "RI2", "error",
                f"entry assigned to node '{e.node_id}' but the slot belongs to '{node.id}'",
                slot=e.slot, node_id=node.id))
        if e.slot not in e.instruction:
            findings.append(LintFinding(
                "RI2", "error", "instruction does not mention the slot name", slot=e.slot))
        elif slot.examples and not any(ex in e.instruction for ex in slot.examples):
            findings.append(LintFinding(
                "RI2", "error", "instruction does not mention any example value", slot=e.slot))
        expected = invalidation_set(graph, node.id)
        if e.invalidates != expected:
            missing = [v for v in expected if v not in e.invalidates]
            extra = [v for v in e.invalidates if v not in expected]
            detail = []
            if missing:
                detail.append("missing " + ", ".join(missing))
            if extra:
                detail.append("extra " + ", ".join(extra))
            findings.append(LintFinding(
                "RI2", "error",
                "invalidation list does not match the reachable helpers"
                + (": " + "; ".join(detail) if detail else " (order)"),
                slot=e.slot, node_id=node.id))
    return findings


def lint_ri3(program: GuardrailProgram, graph: ChiefGraph) -> list[LintFinding]:
    """Request-node guards vs the slot rules."""
    findings: list[LintFinding] = []
    by_id = {d.node_id: d for d in program.nap}
    for node in graph.nodes:
        if node.kind != "request":
            continue
        expected = request_guard(node)
        d = by_id.get(node.id)
        if d is not None and d.guard != expected:
            findings.append(LintFinding(
                "RI3", "error",
                f"request guard should be '{render_predicate(expected)}'",
                node_id=node.id))
        slot_names = [s.name for s in node.slots]
        for slot in node.slots:
            if slot.rule and parse_slot_rule(slot.rule, slot_names) is None:
                findings.append(LintFinding(
                    "RI3", "warning",
                    f"rule requires human review: {slot.rule!r}",
                    node_id=node.id, slot=slot.name))
    return findings


def lint(program: GuardrailProgram, graph: ChiefGraph) -> list[LintFinding]:
    return lint_ri1(program, graph) + lint_ri2(program, graph) + lint_ri3(program, graph)


# ---------------------------------------------------------------------------
# Repair
# ---------------------------------------------------------------------------

def repair(program: GuardrailProgram, graph: ChiefGraph) -> GuardrailProgram:
    """Mechanically fix RI1/RI2 findings by grafting from a fresh compile.

    Raises :class:`IrreparableProgram` when a finding references a node the
    graph does not contain — such a program has diverged from its flow in a
    way no graft can reconcile.
    """
    findings = lint_ri1(program, graph) + lint_ri2(program, graph)
    if not findings:
        return program
    node_ids = set(graph.node_ids())
    for f in findings:
        referenced = f.node_id
        if referenced is None and f.slot is not None:
            continue
        if referenced is not None and referenced not in node_ids:
            raise IrreparableProgram(
                f"finding references node '{referenced}' absent from the flow: {f.message}")
    fresh = compile_graph(graph)
    # Spurious dst entries for nonexistent slots also have no graft source.
    graph_slots = {s.name for n in graph.nodes for s in n.slots}
    for f in findings:
        if f.rule == "RI2" and f.slot is not None and f.slot not in graph_slots:
            raise IrreparableProgram(
                f"finding references slot '{f.slot}' absent from the flow: {f.message}")

    repaired = GuardrailProgram(
        source_graph_hash=fresh.source_graph_hash,
        graph=program.graph,
        init=dict(fresh.init),
        dst=fresh.dst,
        intents=program.intents,
        nap=[
            DecisionNode(node_id=d.node_id, guard=d.guard, action=fresh_d.action,
                         branches=fresh_d.branches)
            for d, fresh_d in _paired_nap(program, fresh)
        ],
        helpers=fresh.helpers,
        fallback=program.fallback,
    )
    # Non-request guards are RI1 territory; request guards belong to RI3 and
    # are kept as-is.
    for d in repaired.nap:
        node = graph.node(d.node_id)
        if node.kind != "request":
            d.guard = node_guard(node)
    return repaired


def _paired_nap(program: GuardrailProgram, fresh: GuardrailProgram):
    """Fresh decision nodes in graph order, keeping the old guard object."""
    old_by_id = {}
    for d in program.nap:
        old_by_id.setdefault(d.node_id, d)
    pairs = []
    for fresh_d in fresh.nap:
        old = old_by_id.get(fresh_d.node_id, fresh_d)
        pairs.append((old, fresh_d))
    return pairs


compile = compile_graph
