"""Offline evaluation over recorded ground-truth conversations.

Dialogues come from a JSONL file, one per line::

    {"id": "d1", "task": "taxi",
     "mapping": {"greet": "hello", "book": "n2", "chitchat": null},
     "turns": [{"user": "...", "wizard": "...", "action": "book",
                "state": {"departure": "Downtown"}}, ...]}

``mapping`` sends every wizard action label to a flow node, a global-action
name, or a fallback name; an explicit ``null`` marks the label as scored
nowhere.  Each turn is replayed against the ground-truth history prefix
(never the agent's own transcript), and after every turn the runtime state
is pulled back onto the ground-truth conversation pathway so one bad turn
cannot cascade.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .chief import ChiefGraph
from .errors import CodialError, NoPath, UnmappedAction
from .ir import GuardrailProgram
from .runtime import ConversationState, RuntimeOptions, digest_stub, run_turn


# ---------------------------------------------------------------------------
# Ground-truth dialogues
# ---------------------------------------------------------------------------

@dataclass
class GroundTruthTurn:
    user: str
    wizard: str
    action: str
    state: dict | None = None


@dataclass
class GroundTruthDialogue:
    id: str
    task: str
    mapping: dict[str, str | None]
    turns: list[GroundTruthTurn]


def parse_dialogue(data: dict) -> GroundTruthDialogue:
    turns = [GroundTruthTurn(user=t["user"], wizard=t["wizard"],
                             action=t["action"], state=t.get("state"))
             for t in data["turns"]]
    dialogue = GroundTruthDialogue(id=data["id"], task=data.get("task", ""),
                                   mapping=dict(data["mapping"]), turns=turns)
    for turn in dialogue.turns:
        if turn.action not in dialogue.mapping:
            raise UnmappedAction(
                f"dialogue {dialogue.id!r}: action label {turn.action!r} "
                "is missing from the mapping")
    return dialogue


def load_dialogues(path: str | Path) -> list[GroundTruthDialogue]:
    dialogues = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            dialogues.append(parse_dialogue(json.loads(line)))
    return dialogues


# ---------------------------------------------------------------------------
# Wizard state approximation
# ---------------------------------------------------------------------------

class _Keep:
    """Approximation has no opinion: the runtime's value stands."""

    def __repr__(self):
        return "KEEP"


KEEP = _Keep()
EXECUTED = "executed"

_YES_WORDS = frozenset(
    "yes confirm confirms confirmed agree agrees agreed accept accepts accepted "
    "approve approves approved".split())
_NO_WORDS = frozenset(
    "no not decline declines declined deny denies denied refuse refuses refused "
    "reject rejects rejected cancel cancels cancelled".split())


def condition_polarity(condition: str | None) -> str | None:
    if not condition:
        return None
    words = set(re.findall(r"\w+", condition.lower()))
    yes = bool(words & _YES_WORDS)
    no = bool(words & _NO_WORDS)
    if yes and not no:
        return "yes"
    if no and not yes:
        return "no"
    return None


@dataclass(frozen=True)
class StateVar:
    name: str
    node_id: str
    kind: str  # slot | inform | answered | action


def program_variables(program: GuardrailProgram) -> list[StateVar]:
    out = [StateVar(e.slot, e.node_id, "slot") for e in program.dst]
    out.extend(StateVar(h.var, h.node_id, h.kind) for h in program.helpers)
    return out


def dfs_path(graph: ChiefGraph, start: str, target: str):
    """First path from start to target in document edge order, as edges."""
    if start == target:
        return []
    visited = {start}

    def walk(node, acc):
        for edge in graph.out_edges(node):
            if edge.target == target:
                return acc + [edge]
            if edge.target in visited:
                continue
            visited.add(edge.target)
            found = walk(edge.target, acc + [edge])
            if found is not None:
                return found
        return None

    path = walk(start, [])
    if path is None:
        raise NoPath(f"no path from {start!r} to {target!r}")
    return path


def approx_wizard_state(graph: ChiefGraph, gt_action: str, var: StateVar,
                        mapping: dict[str, str | None]):
    """Value the variable should hold given where the gold conversation is.

    Returns None (null), a concrete value, or KEEP when the predicted value
    should stand.
    """
    if gt_action not in mapping:
        raise UnmappedAction(f"no mapping for action label {gt_action!r}")
    target = mapping[gt_action]
    if target is None or target not in graph.node_ids():
        raise UnmappedAction(
            f"action label {gt_action!r} does not map to a flow node")

    start = graph.start_node
    if target == start:
        return None  # empty path: nothing has happened yet
    path = dfs_path(graph, start, target)
    on_path = [start] + [e.target for e in path]
    if var.node_id not in on_path:
        return None
    if var.kind == "slot":
        return KEEP
    if var.node_id == target:
        # the target itself has not been executed yet
        return False if var.kind in ("inform", "answered") else None
    if var.kind == "inform":
        return True
    if var.kind == "action":
        return EXECUTED
    # answered: polarity of the branch the gold pathway took out of the node
    leaving = next(e for e in path if e.source == var.node_id)
    return condition_polarity(leaving.condition)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidates: list[str], references: list[str],
          smooth: str | None = None) -> float:
    """Corpus BLEU-4 in [0, 100]; one reference per candidate.

    No smoothing by default: a missing n-gram order zeroes the score.
    ``smooth="exp"`` halves a synthetic count for every zero order instead.
    """
    if len(candidates) != len(references):
        raise ValueError("candidate/reference count mismatch")
    if not candidates:
        return 0.0
    numer = [0] * 4
    denom = [0] * 4
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        c_tokens = tokenize(cand)
        r_tokens = tokenize(ref)
        cand_len += len(c_tokens)
        ref_len += len(r_tokens)
        for n in range(1, 5):
            counts = _ngram_counts(c_tokens, n)
            ref_counts = _ngram_counts(r_tokens, n)
            denom[n - 1] += sum(counts.values())
            numer[n - 1] += sum(min(count, ref_counts[gram])
                                for gram, count in counts.items())
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    synthetic = 1
    for n in range(4):
        if numer[n] == 0:
            if smooth != "exp":
                return 0.0
            synthetic *= 2
            precision = 1.0 / (synthetic * max(denom[n], 1))
        else:
            precision = numer[n] / denom[n]
        log_sum += math.log(precision)
    brevity = 1.0 if cand_len > ref_len else math.exp(1 - ref_len / cand_len)
    return brevity * math.exp(log_sum / 4) * 100


def _normalize_state(state: dict) -> dict:
    return {k: str(v).strip().lower() for k, v in state.items() if v is not None}


def jga(predicted_states: list[dict], gold_states: list[dict]) -> float:
    """Fraction of turns whose full slot state matches gold, in [0, 100]."""
    if len(predicted_states) != len(gold_states):
        raise ValueError("predicted/gold state count mismatch")
    if not predicted_states:
        return 0.0
    matches = sum(1 for p, g in zip(predicted_states, gold_states)
                  if _normalize_state(p) == _normalize_state(g))
    return matches / len(predicted_states) * 100


def action_scores(pairs: list[tuple[str | None, str]]) -> tuple[float, float, float]:
    """(micro F1, macro F1, accuracy) over (predicted, gold) action pairs.

    A None prediction (failed turn) counts against recall and accuracy but
    never inflates precision.
    """
    if not pairs:
        return 0.0, 0.0, 0.0
    tp: Counter = Counter()
    fp: Counter = Counter()
    fn: Counter = Counter()
    for predicted, gold in pairs:
        if predicted == gold:
            tp[gold] += 1
        else:
            if predicted is not None:
                fp[predicted] += 1
            fn[gold] += 1

    def f1(tp_n, fp_n, fn_n):
        precision = tp_n / (tp_n + fp_n) if tp_n + fp_n else 0.0
        recall = tp_n / (tp_n + fn_n) if tp_n + fn_n else 0.0
        return (2 * precision * recall / (precision + recall)
                if precision + recall else 0.0)

    micro = f1(sum(tp.values()), sum(fp.values()), sum(fn.values()))
    classes = set(tp) | set(fp) | set(fn)
    macro = (sum(f1(tp[c], fp[c], fn[c]) for c in classes) / len(classes)
             if classes else 0.0)
    accuracy = sum(tp.values()) / len(pairs)
    return micro * 100, macro * 100, accuracy * 100


# ---------------------------------------------------------------------------
# Evaluation loop
# ---------------------------------------------------------------------------

@dataclass
class TurnRecord:
    dialogue_id: str
    turn_index: int
    predicted_action: str | None
    gold_action: str | None  # mapped label; None when marked unmapped
    predicted_utterance: str | None
    reference_utterance: str
    predicted_slots: dict
    gold_slots: dict | None
    error: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvalReport:
    turns: list[TurnRecord]
    micro_f1: float
    macro_f1: float
    accuracy: float
    bleu4: float
    jga: float | None
    state_error_rates: dict[str, float]
    api_call_precision: float | None
    failures: int
    state_counts: dict[str, tuple[int, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "turns": [t.to_dict() for t in self.turns],
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "bleu4": self.bleu4,
            "jga": self.jga,
            "state_error_rates": dict(self.state_error_rates),
            "api_call_precision": self.api_call_precision,
            "failures": self.failures,
        }


_NODE_KIND_OF_VAR = {"slot": "request", "inform": "inform",
                     "answered": "inform", "action": "external_action"}


def _initial_value(var: StateVar):
    return False if var.kind in ("inform", "answered") else None


def _state_matches(var: StateVar, predicted, approx) -> bool:
    if var.kind == "action":
        # executed-status comparison: a stored result matches the sentinel
        return (predicted is not None) == (approx is not None)
    if var.kind == "inform":
        return bool(predicted) == (approx is True)
    if var.kind == "answered":
        return predicted == (approx if approx is not None else False)
    return predicted == approx  # slot: only ever compared against null


def _stub_registry(program: GuardrailProgram) -> dict:
    registry = {}
    for decision in program.nap:
        if decision.action.kind == "external_action":
            fn = decision.action.function
            registry[fn] = digest_stub(fn, "RES")
    return registry


def evaluate(program: GuardrailProgram, dialogues: list[GroundTruthDialogue],
             backend, oracle_state: bool = False, registry: dict | None = None,
             options: RuntimeOptions | None = None,
             bleu_smooth: str | None = None) -> EvalReport:
    graph = program.graph
    node_ids = set(graph.node_ids())
    action_names = ({i.name for i in program.intents}
                    | {e.name for e in program.fallback.entries}
                    | {program.fallback.default_action})
    external_nodes = {d.node_id for d in program.nap
                      if d.action.kind == "external_action"}
    variables = program_variables(program)
    slot_names = program.slot_names()
    if registry is None:
        registry = _stub_registry(program)

    records: list[TurnRecord] = []
    kind_counts: dict[str, list[int]] = {}  # kind -> [mismatches, compared]
    api_total = 0
    api_correct = 0
    failures = 0

    for dialogue in dialogues:
        state_vars = dict(program.init)
        for index, turn in enumerate(dialogue.turns):
            if turn.action not in dialogue.mapping:
                raise UnmappedAction(
                    f"dialogue {dialogue.id!r}: action label {turn.action!r} "
                    "is missing from the mapping")
            mapped = dialogue.mapping[turn.action]
            if mapped is not None and mapped not in node_ids \
                    and mapped not in action_names:
                raise UnmappedAction(
                    f"dialogue {dialogue.id!r}: {turn.action!r} maps to "
                    f"unknown target {mapped!r}")

            history = []
            for prev in dialogue.turns[:index]:
                history.append({"role": "user", "content": prev.user})
                history.append({"role": "agent", "content": prev.wizard})
            state = ConversationState(variables=dict(state_vars),
                                      history=history)

            error = None
            result = None
            try:
                result = run_turn(program, state, turn.user, backend,
                                  registry=registry, options=options)
            except CodialError as exc:
                error = str(exc)
                failures += 1

            if result is not None:
                state_vars = dict(result.state.variables)
                predicted_action = result.action
                predicted_utterance = result.utterance
            else:
                predicted_action = None
                predicted_utterance = None

            records.append(TurnRecord(
                dialogue_id=dialogue.id,
                turn_index=index,
                predicted_action=predicted_action,
                gold_action=mapped,
                predicted_utterance=predicted_utterance,
                reference_utterance=turn.wizard,
                predicted_slots={s: state_vars.get(s) for s in slot_names},
                gold_slots=turn.state,
                error=error,
            ))

            if predicted_action in external_nodes:
                api_total += 1
                if predicted_action == mapped:
                    api_correct += 1

            # pull the state back onto the gold pathway
            if mapped in node_ids:
                for var in variables:
                    approx = approx_wizard_state(graph, turn.action, var,
                                                 dialogue.mapping)
                    if approx is KEEP:
                        continue
                    if result is not None:
                        kind = _NODE_KIND_OF_VAR[var.kind]
                        skip = var.kind == "answered" and approx is None
                        if not skip:
                            counts = kind_counts.setdefault(kind, [0, 0])
                            counts[1] += 1
                            if not _state_matches(var, state_vars[var.name],
                                                  approx):
                                counts[0] += 1
                    if var.kind == "action":
                        if approx is EXECUTED:
                            if state_vars[var.name] is None:
                                state_vars[var.name] = EXECUTED
                        else:
                            state_vars[var.name] = None
                    elif approx is None:
                        state_vars[var.name] = _initial_value(var)
                    else:
                        state_vars[var.name] = approx

            if oracle_state and turn.state is not None:
                for slot in slot_names:
                    state_vars[slot] = turn.state.get(slot)

    scored = [(r.predicted_action, r.gold_action)
              for r in records if r.gold_action is not None]
    micro, macro, accuracy = action_scores(scored)
    bleu_pairs = [(r.predicted_utterance, r.reference_utterance)
                  for r in records if r.predicted_utterance is not None]
    bleu = bleu4([c for c, _ in bleu_pairs], [r for _, r in bleu_pairs],
                 smooth=bleu_smooth) if bleu_pairs else 0.0
    state_pairs = [(r.predicted_slots, r.gold_slots)
                   for r in records if r.gold_slots is not None]
    jga_score = (jga([p for p, _ in state_pairs], [g for _, g in state_pairs])
                 if state_pairs else None)
    rates = {kind: miss / total
             for kind, (miss, total) in kind_counts.items() if total}

    return EvalReport(
        turns=records,
        micro_f1=micro,
        macro_f1=macro,
        accuracy=accuracy,
        bleu4=bleu,
        jga=jga_score,
        state_error_rates=rates,
        api_call_precision=(api_correct / api_total * 100) if api_total else None,
        failures=failures,
        state_counts={k: (v[0], v[1]) for k, v in kind_counts.items()},
    )


def state_error_report(program: GuardrailProgram,
                       dialogues: list[GroundTruthDialogue], backend,
                       **kwargs) -> dict[str, float]:
    """Per-node-kind state error rates (request / external_action / inform)."""
    return evaluate(program, dialogues, backend, **kwargs).state_error_rates
