"""Compile dialogue-flow graphs into guardrail programs and run them."""

__version__ = "0.1.0"
