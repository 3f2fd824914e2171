"""Exception types shared across the pipeline."""

from __future__ import annotations


class LiftcError(Exception):
    """Base class for all engine errors."""


class ParseError(LiftcError):
    def __init__(self, message: str, span=None):
        self.message = message
        self.span = span
        where = f"{span}: " if span is not None else ""
        super().__init__(f"{where}{message}")


class ValidationError(LiftcError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


class GroundingLimitError(LiftcError):
    """The least model grew past the configured atom cap."""


class CyclicGroundingError(LiftcError):
    """The relevant ground program has a cyclic dependency."""


class ShapeMismatch(LiftcError):
    def __init__(self, slot, expected, found, where: str = ""):
        self.slot = slot
        self.expected = expected
        self.found = found
        what = f"slot {slot!r}" if slot is not None else "sum of inputs"
        loc = f" at {where}" if where else ""
        super().__init__(f"shape mismatch for {what}{loc}: expected {expected}, found {found}")


class NonFinite(LiftcError):
    def __init__(self, node_id: int, example: int | None = None):
        self.node_id = node_id
        self.example = example
        ex = f" (example {example})" if example is not None else ""
        super().__init__(f"non-finite value at node {node_id}{ex}")


class DomainError(LiftcError):
    """A loss received a prediction outside its domain."""


class ConfigError(LiftcError):
    """Inconsistent or unsupported configuration."""
