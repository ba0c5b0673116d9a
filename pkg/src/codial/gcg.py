"""Prompt assembly and the LLM code-generation pathway.

The deterministic emitter in :mod:`codial.colang` is the reference
implementation; this module covers the alternative route where a code model
writes the guardrail program from a prompt.  Two prompt paradigms exist:
``free`` hands the model a language reference and the flow, ``structured``
additionally dictates the loop layout and per-node translation rules.

Templates live under ``prompts/`` as plain text with a ``{{graph_json}}``
placeholder, so they can be edited without touching code; the refinement
instruction texts used for LLM repair rounds live in ``prompts/ri/``.
"""

from __future__ import annotations

import re
import statistics
from dataclasses import dataclass
from importlib import resources

from .backend import BackendRequest
from .chief import ChiefGraph, serialize_chief
from .colang import check_colang
from .errors import GenerationExhausted, UnknownParadigm

PARADIGMS = ("free", "structured")

SYSTEM_TEXT = ("You write guardrail programs for conversational agents. "
               "Reply with the program text only.")


def _template(name: str) -> str:
    return (resources.files("codial") / "prompts" / name).read_text()


@dataclass
class PromptBundle:
    paradigm: str
    system: str
    user: str

    def messages(self) -> list[dict[str, str]]:
        return [{"role": "system", "content": self.system},
                {"role": "user", "content": self.user}]


def assemble_gcg_prompt(graph: ChiefGraph, paradigm: str) -> PromptBundle:
    if paradigm not in PARADIGMS:
        raise UnknownParadigm(f"unknown paradigm: {paradigm!r}")
    template = _template(f"{paradigm}.txt")
    user = template.replace("{{graph_json}}", serialize_chief(graph).rstrip("\n"))
    return PromptBundle(paradigm=paradigm, system=SYSTEM_TEXT, user=user)


def refinement_instruction(rule: str) -> str:
    """Instruction text for a lint rule ("RI1", "RI2", or "RI3")."""
    normalized = rule.strip().lower()
    if normalized not in ("ri1", "ri2", "ri3"):
        raise ValueError(f"unknown refinement rule: {rule!r}")
    return _template(f"ri/{normalized}.txt")


def assemble_ri_prompt(code: str, rule: str) -> PromptBundle:
    """A repair round: the current program plus one refinement instruction."""
    user = (f"{refinement_instruction(rule).rstrip()}\n\n"
            f"Current program:\n\n{code.rstrip()}\n\n"
            "Reply with the full corrected program.")
    return PromptBundle(paradigm="refine", system=SYSTEM_TEXT, user=user)


_FENCE = re.compile(r"^```[a-zA-Z0-9_-]*\n(.*?)\n?```\s*$", re.DOTALL)


def strip_code_fence(text: str) -> str:
    match = _FENCE.match(text.strip())
    return match.group(1) if match else text


def llm_generate_code(bundle: PromptBundle, backend,
                      max_retries: int = 4) -> tuple[str, int]:
    """Generate until the candidate passes the syntax check.

    Returns ``(code, attempts)``.  Each failed candidate's errors are fed
    back into the next request.
    """
    messages = bundle.messages()
    last_errors: list[str] = []
    for attempt in range(1, max_retries + 1):
        reply = backend.complete(BackendRequest("codegen", list(messages)))
        code = strip_code_fence(reply)
        errors = check_colang(code)
        if not errors:
            return code, attempt
        last_errors = errors
        messages = messages + [
            {"role": "assistant", "content": reply},
            {"role": "user",
             "content": "That program failed the syntax check:\n"
                        + "\n".join(errors)
                        + "\nRegenerate the full program."},
        ]
    raise GenerationExhausted(attempts=max_retries, last_errors=last_errors)


def codegen_success_stats(bundles: list[PromptBundle], backend,
                          trials: int = 4) -> dict:
    """Success-rate statistics over independent generation trials.

    Every bundle gets ``trials`` fresh generations (no retry feedback); a
    generation succeeds when it passes the syntax check.
    """
    per_task: list[int] = []
    for bundle in bundles:
        successes = 0
        for _ in range(trials):
            reply = backend.complete(BackendRequest("codegen", bundle.messages()))
            if not check_colang(strip_code_fence(reply)):
                successes += 1
        per_task.append(successes)
    total = sum(per_task)
    return {
        "tasks": len(bundles),
        "trials": trials,
        "generations": len(bundles) * trials,
        "successes": total,
        "success_rate": total / (len(bundles) * trials) if bundles else 0.0,
        "per_task": per_task,
        "per_task_min": min(per_task) if per_task else 0,
        "per_task_max": max(per_task) if per_task else 0,
        "per_task_avg": statistics.mean(per_task) if per_task else 0.0,
    }
