"""Shared exception types.

Every error raised on a contract violation derives from TubelabError so CLI
entry points can map the taxonomy onto exit codes in one place.
"""
from __future__ import annotations

from typing import Any


class TubelabError(Exception):
    """Base class for all package errors."""


class ParseError(TubelabError):
    """Malformed input file, unknown field, or constraint violation at load time."""


class ScaleError(TubelabError):
    """Scale out of the supported range, odd k where an even one is required,
    or mixed scales fed to an operation that needs a single one."""


class DyadicOverflowError(TubelabError):
    """Numerator magnitude left the supported 128-bit envelope.

    Arithmetic never wraps; results that would exceed the envelope are
    rejected at construction time.
    """


class DomainError(TubelabError):
    """Coordinate outside the working domain ([-4,4] per axis for points,
    [-8,8] for 1-d values)."""


class ValidationError(TubelabError):
    """Input violates a checked precondition (e.g. points not delta-separated)."""


class GeneratorError(TubelabError):
    """Generator spec inconsistent or unsatisfiable."""


class HypothesisViolation(TubelabError):
    """A named hypothesis of a checked statement fails on the given input.

    Carries a machine-readable witness so callers can emit it as JSON.
    """

    def __init__(self, name: str, message: str, witness: dict[str, Any] | None = None):
        super().__init__(f"{name}: {message}")
        self.name = name
        self.message = message
        self.witness = witness or {}

    def payload(self) -> dict[str, Any]:
        # snapshot the witness so later additions to it cannot create cycles
        return {"hypothesis": self.name, "message": self.message, "witness": dict(self.witness)}
