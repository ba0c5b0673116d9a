"""Program mutations with known lint verdicts, shared by lint tests."""

from __future__ import annotations

import copy
import random

from codial.ir import Branch, DstEntry, GuardrailProgram, IsFalse, IsNull, Nld


def _has_request(p: GuardrailProgram) -> bool:
    return any(d.action.kind == "request" for d in p.nap)


def _has_non_request(p: GuardrailProgram) -> bool:
    return any(d.action.kind != "request" for d in p.nap)


def _has_branches(p: GuardrailProgram) -> bool:
    return any(d.branches for d in p.nap)


def _has_dst(p: GuardrailProgram) -> bool:
    return bool(p.dst)


def _has_invalidates(p: GuardrailProgram) -> bool:
    return any(e.invalidates for e in p.dst)


def _drop_decision(p, rng):
    del p.nap[rng.randrange(len(p.nap))]


def _duplicate_decision(p, rng):
    d = rng.choice(p.nap)
    p.nap.append(copy.deepcopy(d))


def _swap_action_kind(p, rng):
    d = rng.choice(p.nap)
    d.action.kind = "inform" if d.action.kind != "inform" else "external_action"


def _retarget_branch(p, rng):
    d = rng.choice([d for d in p.nap if d.branches])
    b = rng.choice(d.branches)
    b.target = "bogus_target"


def _add_branch(p, rng):
    d = rng.choice(p.nap)
    d.branches.append(Branch(target=d.node_id, condition="a condition that is not there"))


def _corrupt_machine_guard(p, rng):
    d = rng.choice([d for d in p.nap if d.action.kind != "request"])
    d.guard = IsFalse("no_such_helper") if isinstance(d.guard, IsNull) \
        else IsNull("no_such_helper")


def _drop_dst_entry(p, rng):
    del p.dst[rng.randrange(len(p.dst))]


def _duplicate_dst_entry(p, rng):
    p.dst.append(copy.deepcopy(rng.choice(p.dst)))


def _spurious_dst_entry(p, rng):
    p.dst.append(DstEntry(slot="phantom_slot", value_type="text", node_id="bogus_node",
                          instruction="Track the value of the slot 'phantom_slot'.",
                          invalidates=[]))


def _strip_instruction(p, rng):
    e = rng.choice(p.dst)
    e.instruction = "Track the value."


def _corrupt_invalidates_extra(p, rng):
    e = rng.choice(p.dst)
    e.invalidates = list(e.invalidates) + ["action_nowhere"]


def _corrupt_invalidates_drop(p, rng):
    e = rng.choice([e for e in p.dst if e.invalidates])
    e.invalidates = list(e.invalidates)[:-1]


def _corrupt_request_guard(p, rng):
    d = rng.choice([d for d in p.nap if d.action.kind == "request"])
    d.guard = Nld("ask whenever it feels right")


# (name, applicability check, mutator, lint rule expected to catch it,
#  whether repair() can mend the program mechanically)
CATALOG = [
    ("drop_decision", lambda p: len(p.nap) > 0, _drop_decision, "RI1", True),
    ("duplicate_decision", lambda p: len(p.nap) > 0, _duplicate_decision, "RI1", True),
    ("swap_action_kind", lambda p: len(p.nap) > 0, _swap_action_kind, "RI1", True),
    ("retarget_branch", _has_branches, _retarget_branch, "RI1", True),
    ("add_branch", lambda p: len(p.nap) > 0, _add_branch, "RI1", True),
    ("corrupt_machine_guard", _has_non_request, _corrupt_machine_guard, "RI1", True),
    ("drop_dst_entry", _has_dst, _drop_dst_entry, "RI2", True),
    ("duplicate_dst_entry", _has_dst, _duplicate_dst_entry, "RI2", True),
    ("spurious_dst_entry", lambda p: True, _spurious_dst_entry, "RI2", False),
    ("strip_instruction", _has_dst, _strip_instruction, "RI2", True),
    ("invalidates_extra", _has_dst, _corrupt_invalidates_extra, "RI2", True),
    ("invalidates_drop", _has_invalidates, _corrupt_invalidates_drop, "RI2", True),
    ("corrupt_request_guard", _has_request, _corrupt_request_guard, "RI3", False),
]


def applicable_mutations(program: GuardrailProgram):
    return [m for m in CATALOG if m[1](program)]


def apply_random_mutation(program: GuardrailProgram, rng: random.Random):
    """Deep-copy the program, apply one applicable mutation, and return
    (mutated, mutation name, expected lint rule, repairable flag)."""
    name, _, mutate, rule, repairable = rng.choice(applicable_mutations(program))
    mutated = copy.deepcopy(program)
    mutate(mutated, rng)
    return mutated, name, rule, repairable
