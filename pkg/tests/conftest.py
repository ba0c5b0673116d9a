from __future__ import annotations

import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def taxi_graph():
    from codial.chief import parse_chief
    return parse_chief((FIXTURES / "taxi.chief.json").read_text())


@pytest.fixture
def confirm_graph():
    from codial.chief import parse_chief
    return parse_chief((FIXTURES / "confirm.chief.json").read_text())


@pytest.fixture
def support_graph():
    from codial.chief import parse_chief
    return parse_chief((FIXTURES / "support.chief.json").read_text())


def load_fixture_json(name: str):
    return json.loads((FIXTURES / name).read_text())
