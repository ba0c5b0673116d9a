"""Exception taxonomy shared across the package."""

from __future__ import annotations


class CodialError(Exception):
    """Base class for all errors raised by this package."""


class MalformedDocument(CodialError):
    """The input text is not valid JSON."""


class SchemaViolation(CodialError):
    """The document is JSON but does not match the flow schema.

    ``path`` points at the offending element, e.g. ``nodes[2].slots[0].name``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnknownNode(CodialError):
    """A node id was referenced that does not exist in the graph."""


class ValidationFailed(CodialError):
    """A graph with validation errors was passed where a clean one is required."""

    def __init__(self, diagnostics):
        super().__init__(
            "graph has validation errors: "
            + "; ".join(str(d) for d in diagnostics if d.severity == "error")
        )
        self.diagnostics = list(diagnostics)


class IrreparableProgram(CodialError):
    """A diagnostic references a node that is absent from the source graph."""


class UnknownParadigm(CodialError):
    """Unsupported code-generation paradigm name."""


class GenerationExhausted(CodialError):
    """All code-generation attempts failed the syntax check."""

    def __init__(self, attempts: int, last_errors):
        super().__init__(f"no syntactically valid program after {attempts} attempts")
        self.attempts = attempts
        self.last_errors = list(last_errors)


class BackendError(CodialError):
    """A language-model backend call failed."""

    def __init__(self, message: str, status: int | None = None, body: str = ""):
        detail = message
        if status is not None:
            detail += f" (status {status})"
        if body:
            detail += f": {body[:500]}"
        super().__init__(detail)
        self.status = status
        self.body = body[:500]


class ScriptExhausted(BackendError):
    """A scripted mock backend received a request it has no reply for."""

    def __init__(self, message: str):
        super().__init__(message)


class ExternalActionError(CodialError):
    """A registered external function raised an exception."""


class UnknownFunction(CodialError):
    """An external-action node names a function missing from the registry."""


class UnmappedAction(CodialError):
    """A ground-truth action label has no entry in the action mapping table."""


class NoPath(CodialError):
    """No directed path exists from the start node to the target node."""


class InsufficientData(CodialError):
    """Not enough labeled turns to run prompt optimization."""
