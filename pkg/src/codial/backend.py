"""LLM backend abstraction.

Every model interaction in the system is a :class:`BackendRequest` sent to
an object with a ``complete(request) -> str`` method.  Three implementations
are provided: an HTTP client for OpenAI-compatible chat endpoints, a strict
scripted backend that replays a fixed queue (used by tests and ``chat
--backend mock``), and a function-backed one for property harnesses.

Request purposes and their sampling temperature:

====================== ============================================= =====
purpose                 used for                                      temp
====================== ============================================= =====
value_from_instruction  slot tracking / confirmation answers          0.0
boolean_nld             natural-language branch and guard conditions  0.0
intent                  global-intent classification                  0.0
fallback_choice         picking an action when the policy is stuck    0.0
codegen                 generating guardrail code                     0.7
prompt_rewrite          rewriting slot-tracking instructions          0.7
====================== ============================================= =====
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import BackendError, ScriptExhausted

PURPOSES = (
    "value_from_instruction",
    "boolean_nld",
    "intent",
    "fallback_choice",
    "codegen",
    "prompt_rewrite",
)
CREATIVE_PURPOSES = ("codegen", "prompt_rewrite")


@dataclass
class BackendRequest:
    purpose: str
    messages: list[dict[str, str]]

    def text(self) -> str:
        return "\n".join(m["content"] for m in self.messages)


def default_temperature(purpose: str) -> float:
    return 0.7 if purpose in CREATIVE_PURPOSES else 0.0


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class BackendConfig:
    url: str = "http://localhost:8000/v1"
    model: str = "default"
    timeout_ms: int = 30000
    temperature_overrides: dict[str, float] = field(default_factory=dict)
    api_key: str | None = None


def _load_toml(text: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def load_backend_config(path: str | Path | None = None) -> BackendConfig:
    """Config from a TOML or JSON file; the API key always comes from the
    ``CODIAL_API_KEY`` environment variable, never from the file."""
    cfg = BackendConfig(api_key=os.environ.get("CODIAL_API_KEY"))
    if path is None:
        return cfg
    text = Path(path).read_text()
    if str(path).endswith(".toml"):
        data = _load_toml(text)
    else:
        data = json.loads(text)
    section = data.get("backend", {})
    if "url" in section:
        cfg.url = section["url"]
    if "model" in section:
        cfg.model = section["model"]
    if "timeout_ms" in section:
        cfg.timeout_ms = int(section["timeout_ms"])
    for purpose, temp in section.get("temperature_overrides", {}).items():
        cfg.temperature_overrides[purpose] = float(temp)
    return cfg


# ---------------------------------------------------------------------------
# HTTP backend
# ---------------------------------------------------------------------------

class HttpBackend:
    """OpenAI-compatible chat-completions client with bounded retry.

    Connection problems, timeouts, 429 and 5xx responses are retried with
    exponential backoff; other client errors fail immediately.
    """

    max_attempts = 3
    base_delay = 0.5

    def __init__(self, config: BackendConfig | None = None):
        self.config = config or load_backend_config()
        self._lock = threading.Lock()
        self.calls: list[BackendRequest] = []

    def complete(self, request: BackendRequest) -> str:
        with self._lock:
            self.calls.append(request)
        cfg = self.config
        temperature = cfg.temperature_overrides.get(
            request.purpose, default_temperature(request.purpose))
        payload = {
            "model": cfg.model,
            "messages": request.messages,
            "temperature": temperature,
        }
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        url = cfg.url.rstrip("/") + "/chat/completions"

        delay = self.base_delay
        last_error: BackendError | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(delay)
                delay *= 2
            try:
                response = requests.post(
                    url, json=payload, headers=headers,
                    timeout=cfg.timeout_ms / 1000.0)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = BackendError(f"request failed: {exc}")
                continue
            if response.status_code == 429 or response.status_code >= 500:
                last_error = BackendError(
                    f"server returned {response.status_code}",
                    status=response.status_code, body=response.text)
                continue
            if response.status_code >= 400:
                raise BackendError(
                    f"request rejected with {response.status_code}",
                    status=response.status_code, body=response.text)
            try:
                data = response.json()
                return data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed completion response: {exc}",
                                   status=response.status_code,
                                   body=response.text) from exc
        assert last_error is not None
        raise last_error


# ---------------------------------------------------------------------------
# Test backends
# ---------------------------------------------------------------------------

@dataclass
class ScriptStep:
    purpose: str
    response: str
    contains: str | None = None


class ScriptedBackend:
    """Replays a fixed queue of responses, strictly in order.

    Each step must match the incoming request's purpose (and, when given,
    a substring of its rendered text); any deviation or an exhausted queue
    raises :class:`ScriptExhausted`.  The call log is thread-safe.
    """

    def __init__(self, steps):
        self._steps = [
            s if isinstance(s, ScriptStep) else ScriptStep(
                purpose=s["purpose"], response=s["response"],
                contains=s.get("contains"))
            for s in steps
        ]
        self._lock = threading.Lock()
        self.calls: list[BackendRequest] = []

    def complete(self, request: BackendRequest) -> str:
        with self._lock:
            self.calls.append(request)
            if not self._steps:
                raise ScriptExhausted(
                    f"script exhausted; unexpected {request.purpose} request")
            step = self._steps.pop(0)
        if step.purpose != request.purpose:
            raise ScriptExhausted(
                f"scripted {step.purpose} step got a {request.purpose} request")
        if step.contains is not None and step.contains not in request.text():
            raise ScriptExhausted(
                f"scripted {step.purpose} step expected text containing "
                f"{step.contains!r}")
        return step.response

    def done(self) -> bool:
        return not self._steps

    @property
    def remaining(self) -> int:
        return len(self._steps)


class FnBackend:
    """Delegates completions to a plain function; handy for property tests."""

    def __init__(self, fn):
        self._fn = fn
        self._lock = threading.Lock()
        self.calls: list[BackendRequest] = []

    def complete(self, request: BackendRequest) -> str:
        with self._lock:
            self.calls.append(request)
        return self._fn(request)


# ---------------------------------------------------------------------------
# Intent detection
# ---------------------------------------------------------------------------

def normalize_utterance(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower()).rstrip(".!?,;:")


def detect_intent(program, utterance: str, backend):
    """Two-stage global-intent detection.

    Stage one matches the normalized utterance against trigger examples and
    costs nothing.  Stage two is a single classification request; anything
    the classifier cannot map to a known intent name means no intent.
    """
    if not program.intents:
        return None
    norm = normalize_utterance(utterance)
    for intent in program.intents:
        if any(normalize_utterance(t) == norm for t in intent.trigger_examples):
            return intent

    lines = []
    for intent in program.intents:
        examples = "; ".join(f'"{t}"' for t in intent.trigger_examples)
        lines.append(f"- {intent.name}" + (f" (e.g. {examples})" if examples else ""))
    system = (
        "Decide whether the user's message invokes one of these global intents:\n"
        + "\n".join(lines)
        + "\n\nIf it does, respond with the intent name only. "
          'Otherwise respond with "none".'
    )
    answer = backend.complete(BackendRequest(
        purpose="intent",
        messages=[{"role": "system", "content": system},
                  {"role": "user", "content": utterance}],
    )).strip().strip('"').lower()
    for intent in program.intents:
        if answer == intent.name.lower():
            return intent
    return None
