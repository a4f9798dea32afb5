"""
Exceptions raised across the toolkit. The CLI maps them to stable exit codes.
"""
from __future__ import annotations

from typing import Any, Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_UNSAT = 2
EXIT_RESOURCE = 3
EXIT_IO = 4


class DlCircuitError(Exception):
    """Base class; exit_code is what the CLI returns when this escapes a command."""

    exit_code = EXIT_USAGE


class DslSyntaxError(DlCircuitError):
    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnknownNameError(DlCircuitError):
    pass


class DuplicateDeclarationError(DlCircuitError):
    pass


class UnsupportedConstructError(DlCircuitError):
    pass


class NodeCapExceeded(DlCircuitError):
    exit_code = EXIT_RESOURCE

    def __init__(self, cap: int) -> None:
        super().__init__(f"node cap of {cap} nodes exceeded")
        self.cap = cap


class VtreeMismatchError(DlCircuitError):
    pass


class UnknownVariableError(DlCircuitError):
    pass


class ZeroProbabilityEvidence(DlCircuitError):
    pass


class EnumerationLimitExceeded(DlCircuitError):
    """Carries the models enumerated before the limit was hit."""

    def __init__(self, limit: int, partial: Optional[list[Any]] = None) -> None:
        super().__init__(f"more than {limit} models")
        self.limit = limit
        self.partial = partial or []


class SchemaError(DlCircuitError):
    exit_code = EXIT_IO


class DivergenceError(DlCircuitError):
    pass


class OracleSizeError(DlCircuitError):
    pass
