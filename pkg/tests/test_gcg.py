import pytest

from codial.backend import ScriptedBackend
from codial.chief import serialize_chief
from codial.colang import check_colang
from codial.errors import GenerationExhausted, UnknownParadigm
from codial.gcg import (
    PARADIGMS,
    assemble_gcg_prompt,
    assemble_ri_prompt,
    codegen_success_stats,
    llm_generate_code,
    refinement_instruction,
    strip_code_fence,
)

VALID_PROGRAM = 'flow main\n  bot say "ok"\n'
INVALID_PROGRAM = 'flow main\n  bot say "ok"\n  end\n'


@pytest.mark.parametrize("paradigm", PARADIGMS)
def test_bundle_embeds_graph_json_verbatim(taxi_graph, paradigm):
    bundle = assemble_gcg_prompt(taxi_graph, paradigm)
    assert serialize_chief(taxi_graph).rstrip("\n") in bundle.user
    assert "{{graph_json}}" not in bundle.user


def test_structured_bundle_contains_loop_outline(taxi_graph):
    user = assemble_gcg_prompt(taxi_graph, "structured").user
    assert "while True" in user
    assert "next action prediction" in user
    assert "request node" in user and "inform node" in user


def test_free_bundle_contains_language_reference(taxi_graph):
    user = assemble_gcg_prompt(taxi_graph, "free").user
    assert "Natural Language Description" in user
    assert "bot say" in user


def test_unknown_paradigm(taxi_graph):
    with pytest.raises(UnknownParadigm):
        assemble_gcg_prompt(taxi_graph, "agile")


def test_bundle_messages_shape(taxi_graph):
    bundle = assemble_gcg_prompt(taxi_graph, "free")
    messages = bundle.messages()
    assert [m["role"] for m in messages] == ["system", "user"]


def test_refinement_instruction_texts():
    assert "Revise the `if`s to exactly reflect the nodes" in refinement_instruction("RI1")
    assert "Fix dst's first input parameter" in refinement_instruction("RI2")
    assert "Fix `if` checks for request nodes" in refinement_instruction("ri3")
    with pytest.raises(ValueError):
        refinement_instruction("RI9")


def test_ri_prompt_wraps_current_code():
    bundle = assemble_ri_prompt(VALID_PROGRAM, "RI2")
    assert "Fix dst's first input parameter" in bundle.user
    assert VALID_PROGRAM.rstrip() in bundle.user


@pytest.mark.parametrize("wrapped,expected", [
    ("plain text", "plain text"),
    ("```\ncode here\n```", "code here"),
    ("```colang\nflow main\n  bot say \"x\"\n```", 'flow main\n  bot say "x"'),
    ("```co\na\n```\n", "a"),
])
def test_strip_code_fence(wrapped, expected):
    assert strip_code_fence(wrapped) == expected


def test_generate_first_attempt_valid(taxi_graph):
    backend = ScriptedBackend([
        {"purpose": "codegen", "response": VALID_PROGRAM},
    ])
    bundle = assemble_gcg_prompt(taxi_graph, "structured")
    code, attempts = llm_generate_code(bundle, backend)
    assert attempts == 1
    assert code == VALID_PROGRAM
    assert backend.done()


def test_generate_retries_until_valid(taxi_graph):
    backend = ScriptedBackend([
        {"purpose": "codegen", "response": INVALID_PROGRAM},
        {"purpose": "codegen", "response": f"```\n{VALID_PROGRAM}```"},
    ])
    bundle = assemble_gcg_prompt(taxi_graph, "structured")
    code, attempts = llm_generate_code(bundle, backend)
    assert attempts == 2
    assert check_colang(code) == []
    assert backend.done()
    # the retry feeds the failed candidate and its errors back in
    retry_messages = backend.calls[1].messages
    assert len(retry_messages) == 4
    assert retry_messages[2]["role"] == "assistant"
    assert "syntax check" in retry_messages[3]["content"]
    assert "'end'" in retry_messages[3]["content"]


def test_generate_exhausts(taxi_graph):
    backend = ScriptedBackend([
        {"purpose": "codegen", "response": INVALID_PROGRAM},
        {"purpose": "codegen", "response": INVALID_PROGRAM},
        {"purpose": "codegen", "response": INVALID_PROGRAM},
    ])
    bundle = assemble_gcg_prompt(taxi_graph, "free")
    with pytest.raises(GenerationExhausted) as exc:
        llm_generate_code(bundle, backend, max_retries=3)
    assert exc.value.attempts == 3
    assert exc.value.last_errors
    assert backend.done()


def test_success_stats_over_scripted_matrix(taxi_graph):
    # 24 tasks x 4 trials: five tasks at 2/4, three at 3/4, sixteen at 4/4.
    per_task = [2] * 5 + [3] * 3 + [4] * 16
    script = []
    for successes in per_task:
        for trial in range(4):
            ok = trial < successes
            script.append({"purpose": "codegen",
                           "response": VALID_PROGRAM if ok else INVALID_PROGRAM})
    backend = ScriptedBackend(script)
    bundles = [assemble_gcg_prompt(taxi_graph, "structured")] * 24

    stats = codegen_success_stats(bundles, backend, trials=4)
    assert backend.done()
    assert stats["tasks"] == 24
    assert stats["generations"] == 96
    assert stats["successes"] == 83
    assert stats["per_task"] == per_task
    assert stats["per_task_min"] == 2
    assert stats["per_task_max"] == 4
    assert stats["per_task_avg"] == pytest.approx(83 / 24)
    assert stats["success_rate"] == pytest.approx(83 / 96)


def test_success_stats_empty():
    stats = codegen_success_stats([], ScriptedBackend([]), trials=4)
    assert stats["generations"] == 0
    assert stats["success_rate"] == 0.0
