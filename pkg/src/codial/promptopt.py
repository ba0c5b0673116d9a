"""Validation-gated rewriting of slot-tracking instructions.

A slot's extraction instruction is treated as the thing under optimization:
an optimizer model proposes rewrites from small batches of mistakes, and a
candidate replaces the incumbent only when it strictly improves exact-match
accuracy on a held-out validation set.  Sampling is seeded so a run can be
reproduced byte for byte.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .backend import BackendRequest
from .errors import BackendError, InsufficientData
from .ir import DstEntry
from .runtime import dst_messages, postprocess_value, render_history

TRAIN_SIZE = 20
VAL_SIZE = 50
BATCH_SIZE = 5


@dataclass
class DstSample:
    """One labeled turn: the conversation so far and the slot's gold value."""
    history: list[dict[str, str]]
    value: object


def load_dst_samples(path: str | Path) -> list[DstSample]:
    samples = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            data = json.loads(line)
            samples.append(DstSample(history=data["history"],
                                     value=data.get("value")))
    return samples


@dataclass
class Candidate:
    instruction: str
    score: float
    accepted: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class OptRun:
    slot: str
    seed: int
    best_instruction: str
    best_score: float
    history: list[Candidate] = field(default_factory=list)
    aborted: bool = False
    error: str | None = None

    def __iter__(self):
        # allows `instruction, score = optimize_dst(...)`
        return iter((self.best_instruction, self.best_score))

    def to_dict(self) -> dict:
        return {
            "slot": self.slot,
            "seed": self.seed,
            "best_instruction": self.best_instruction,
            "best_score": self.best_score,
            "history": [c.to_dict() for c in self.history],
            "aborted": self.aborted,
            "error": self.error,
        }


def _norm(value) -> str | None:
    return None if value is None else str(value).strip().lower()


def compute_score(predictions: list, gold: list) -> float:
    """Exact-match accuracy in [0, 100] after value normalization."""
    if len(predictions) != len(gold):
        raise ValueError("prediction/gold count mismatch")
    if not predictions:
        return 0.0
    matches = sum(1 for p, g in zip(predictions, gold) if _norm(p) == _norm(g))
    return matches / len(predictions) * 100


def _predict(instruction: str, samples: list[DstSample], backend) -> list:
    out = []
    for sample in samples:
        raw = backend.complete(BackendRequest(
            "value_from_instruction", dst_messages(instruction, sample.history)))
        out.append(postprocess_value(raw))
    return out


REWRITE_SYSTEM = ("You improve slot-extraction instructions for a dialogue "
                  "system. Reply with the rewritten instruction only.")


def _rewrite_messages(instruction: str, batch: list[DstSample],
                      predictions: list) -> list[dict[str, str]]:
    blocks = []
    for sample, predicted in zip(batch, predictions):
        blocks.append(f"Conversation:\n{render_history(sample.history)}\n"
                      f"Predicted: {predicted!r}\nExpected: {sample.value!r}")
    user = (f"Current instruction:\n{instruction}\n\n"
            + "\n\n".join(blocks)
            + "\n\nRewrite the instruction so the predictions match the "
              "expected values. Reply with the instruction only.")
    return [{"role": "system", "content": REWRITE_SYSTEM},
            {"role": "user", "content": user}]


def optimize_dst(entry: DstEntry, dataset: list[DstSample], agent_backend,
                 optimizer_backend, seed: int = 0, train_size: int = TRAIN_SIZE,
                 val_size: int = VAL_SIZE, batch_size: int = BATCH_SIZE) -> OptRun:
    """Hill-climb the instruction; keep a rewrite only if validation improves.

    Returns an :class:`OptRun` (iterable as ``(instruction, score)``).  A
    backend failure aborts the run gracefully, keeping the best so far.
    """
    needed = train_size + val_size
    if len(dataset) < needed:
        raise InsufficientData(
            f"slot {entry.slot!r} needs {needed} labeled turns, "
            f"got {len(dataset)}")
    rng = random.Random(seed)
    picks = rng.sample(range(len(dataset)), needed)
    train = [dataset[i] for i in picks[:train_size]]
    val = [dataset[i] for i in picks[train_size:]]
    gold = [s.value for s in val]

    run = OptRun(slot=entry.slot, seed=seed,
                 best_instruction=entry.instruction, best_score=0.0)
    try:
        best_score = compute_score(_predict(entry.instruction, val,
                                            agent_backend), gold)
        run.best_score = best_score
        run.history.append(Candidate(entry.instruction, best_score, True))

        for start in range(0, len(train), batch_size):
            batch = train[start:start + batch_size]
            predictions = _predict(run.best_instruction, batch, agent_backend)
            candidate = optimizer_backend.complete(BackendRequest(
                "prompt_rewrite",
                _rewrite_messages(run.best_instruction, batch, predictions),
            )).strip()
            score = compute_score(_predict(candidate, val, agent_backend), gold)
            accepted = score > run.best_score
            run.history.append(Candidate(candidate, score, accepted))
            if accepted:
                run.best_instruction = candidate
                run.best_score = score
    except BackendError as exc:
        run.aborted = True
        run.error = str(exc)
    return run
