"""Backend clients: HTTP retry behavior, config, scripts, intent detection."""

from __future__ import annotations

from unittest import mock

import pytest
import requests

from codial.backend import (
    BackendConfig,
    BackendRequest,
    FnBackend,
    HttpBackend,
    ScriptedBackend,
    default_temperature,
    detect_intent,
    load_backend_config,
    normalize_utterance,
)
from codial.compiler import compile_graph
from codial.errors import BackendError, ScriptExhausted


def _req(purpose="boolean_nld", text="does it hold?"):
    return BackendRequest(purpose, [{"role": "user", "content": text}])


def _response(status=200, content="ok", json_error=False):
    resp = mock.MagicMock()
    resp.status_code = status
    resp.text = '{"error": "raw body"}'
    if json_error:
        resp.json.side_effect = ValueError("not json")
    else:
        resp.json.return_value = {"choices": [{"message": {"content": content}}]}
    return resp


# ---------------------------------------------------------------------------
# HTTP client
# ---------------------------------------------------------------------------

@mock.patch("codial.backend.time.sleep")
@mock.patch("codial.backend.requests.post")
def test_retries_connection_errors_then_succeeds(post, sleep):
    post.side_effect = [requests.ConnectionError("down"), _response(content="hi")]
    backend = HttpBackend(BackendConfig(url="http://llm.test/v1", api_key="k"))
    assert backend.complete(_req()) == "hi"
    assert post.call_count == 2
    sleep.assert_called_once_with(0.5)


@mock.patch("codial.backend.time.sleep")
@mock.patch("codial.backend.requests.post")
def test_retries_rate_limit_and_server_errors(post, sleep):
    post.side_effect = [_response(status=429), _response(status=503),
                        _response(content="done")]
    backend = HttpBackend(BackendConfig(url="http://llm.test/v1"))
    assert backend.complete(_req()) == "done"
    assert post.call_count == 3
    assert [c.args for c in sleep.call_args_list] == [(0.5,), (1.0,)]


@mock.patch("codial.backend.time.sleep")
@mock.patch("codial.backend.requests.post")
def test_gives_up_after_three_attempts(post, sleep):
    post.side_effect = [_response(status=500)] * 3
    backend = HttpBackend(BackendConfig(url="http://llm.test/v1"))
    with pytest.raises(BackendError) as exc_info:
        backend.complete(_req())
    assert post.call_count == 3
    assert exc_info.value.status == 500
    assert "raw body" in exc_info.value.body


@mock.patch("codial.backend.time.sleep")
@mock.patch("codial.backend.requests.post")
def test_client_errors_do_not_retry(post, sleep):
    post.return_value = _response(status=401)
    backend = HttpBackend(BackendConfig(url="http://llm.test/v1"))
    with pytest.raises(BackendError) as exc_info:
        backend.complete(_req())
    assert post.call_count == 1
    assert exc_info.value.status == 401
    sleep.assert_not_called()


@mock.patch("codial.backend.requests.post")
def test_malformed_completion_payload(post):
    post.return_value = _response(json_error=True)
    backend = HttpBackend(BackendConfig(url="http://llm.test/v1"))
    with pytest.raises(BackendError, match="malformed"):
        backend.complete(_req())


@mock.patch("codial.backend.requests.post")
def test_request_shape_and_auth_header(post):
    post.return_value = _response(content="x")
    cfg = BackendConfig(url="http://llm.test/v1/", model="m9", api_key="sekret",
                        timeout_ms=5000)
    HttpBackend(cfg).complete(_req(purpose="value_from_instruction"))
    args, kwargs = post.call_args
    assert args[0] == "http://llm.test/v1/chat/completions"
    assert kwargs["json"]["model"] == "m9"
    assert kwargs["json"]["temperature"] == 0.0
    assert kwargs["headers"]["Authorization"] == "Bearer sekret"
    assert kwargs["timeout"] == 5.0


@mock.patch("codial.backend.requests.post")
def test_temperatures_by_purpose_and_override(post):
    post.return_value = _response()
    cfg = BackendConfig(url="http://llm.test/v1",
                        temperature_overrides={"codegen": 0.2})
    backend = HttpBackend(cfg)
    backend.complete(_req(purpose="codegen"))
    assert post.call_args.kwargs["json"]["temperature"] == 0.2
    backend.complete(_req(purpose="prompt_rewrite"))
    assert post.call_args.kwargs["json"]["temperature"] == 0.7
    assert "Authorization" not in post.call_args.kwargs["headers"]


def test_default_temperatures():
    assert default_temperature("value_from_instruction") == 0.0
    assert default_temperature("intent") == 0.0
    assert default_temperature("codegen") == 0.7
    assert default_temperature("prompt_rewrite") == 0.7


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

TOML_CONFIG = """\
[backend]
url = "https://llm.example/v1"
model = "m1"
timeout_ms = 9000

[backend.temperature_overrides]
codegen = 0.3
"""


def test_load_config_toml(tmp_path, monkeypatch):
    monkeypatch.setenv("CODIAL_API_KEY", "from-env")
    path = tmp_path / "config.toml"
    path.write_text(TOML_CONFIG)
    cfg = load_backend_config(path)
    assert cfg.url == "https://llm.example/v1"
    assert cfg.model == "m1"
    assert cfg.timeout_ms == 9000
    assert cfg.temperature_overrides == {"codegen": 0.3}
    assert cfg.api_key == "from-env"


def test_load_config_json(tmp_path, monkeypatch):
    monkeypatch.delenv("CODIAL_API_KEY", raising=False)
    path = tmp_path / "config.json"
    path.write_text('{"backend": {"url": "http://j/v1", "model": "jm"}}')
    cfg = load_backend_config(path)
    assert cfg.url == "http://j/v1"
    assert cfg.model == "jm"
    assert cfg.api_key is None
    assert cfg.timeout_ms == 30000


# ---------------------------------------------------------------------------
# Scripted / function backends
# ---------------------------------------------------------------------------

def test_scripted_backend_matches_in_order():
    backend = ScriptedBackend([
        {"purpose": "intent", "response": "none"},
        {"purpose": "boolean_nld", "contains": "holds", "response": "yes"},
    ])
    assert backend.complete(_req("intent", "hi")) == "none"
    assert backend.complete(_req("boolean_nld", "it holds today")) == "yes"
    assert backend.done()
    assert len(backend.calls) == 2


def test_scripted_backend_rejects_wrong_purpose():
    backend = ScriptedBackend([{"purpose": "intent", "response": "none"}])
    with pytest.raises(ScriptExhausted):
        backend.complete(_req("boolean_nld"))


def test_scripted_backend_rejects_wrong_text():
    backend = ScriptedBackend([
        {"purpose": "intent", "contains": "weather", "response": "none"},
    ])
    with pytest.raises(ScriptExhausted):
        backend.complete(_req("intent", "book a taxi"))


def test_scripted_backend_exhaustion():
    backend = ScriptedBackend([])
    with pytest.raises(ScriptExhausted):
        backend.complete(_req())


def test_fn_backend_logs_calls():
    backend = FnBackend(lambda req: req.purpose.upper())
    assert backend.complete(_req("intent")) == "INTENT"
    assert [c.purpose for c in backend.calls] == ["intent"]


# ---------------------------------------------------------------------------
# Intent detection
# ---------------------------------------------------------------------------

def test_normalize_utterance():
    assert normalize_utterance("  Hello!!  ") == "hello"
    assert normalize_utterance("Hey   THERE.") == "hey there"


def test_exact_trigger_match_costs_nothing(taxi_graph):
    program = compile_graph(taxi_graph)
    backend = ScriptedBackend([])
    intent = detect_intent(program, "  HEY there!  ", backend)
    assert intent is not None and intent.name == "hello"
    assert backend.calls == []


def test_classifier_fallback_hit(taxi_graph):
    program = compile_graph(taxi_graph)
    backend = ScriptedBackend([
        {"purpose": "intent", "contains": "hello", "response": '"Hello"'},
    ])
    intent = detect_intent(program, "greetings old friend", backend)
    assert intent is not None and intent.name == "hello"
    assert backend.done()


def test_classifier_none(taxi_graph):
    program = compile_graph(taxi_graph)
    backend = ScriptedBackend([{"purpose": "intent", "response": "none"}])
    assert detect_intent(program, "I want a taxi", backend) is None


def test_no_intents_means_no_calls(support_graph):
    program = compile_graph(support_graph)
    program.intents = []
    backend = ScriptedBackend([])
    assert detect_intent(program, "hello", backend) is None
    assert backend.calls == []
