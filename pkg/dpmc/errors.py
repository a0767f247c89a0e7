"""
Exception hierarchy for dpmc.
"""

from typing import Optional


class DpmcError(Exception):
    """Base class for all errors raised by dpmc."""


class ParseError(DpmcError):
    """Malformed BTOR2 input."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class UnsupportedFeature(DpmcError):
    """Input uses a node kind outside the supported fragment."""

    def __init__(self, kind: str, line: Optional[int] = None):
        self.kind = kind
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unsupported feature: {kind}{where}")


class SortMismatch(DpmcError):
    def __init__(self, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"sort mismatch: expected {expected}, got {actual}")


class UnmappedSymbol(DpmcError):
    """An abstract symbol has no concrete counterpart."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unmapped abstract symbol: {name}")


class ResourceLimit(DpmcError):
    """A configured step budget was exhausted."""

    def __init__(self, budget: str):
        self.budget = budget
        super().__init__(f"resource limit reached: {budget}")


class NotUnsat(DpmcError):
    """Unsat core requested for a satisfiable query."""


class NotSpurious(DpmcError):
    """Refinement requested for a feasible abstract trace."""


class TooLarge(DpmcError):
    """Exhaustive enumeration would exceed its bit budget."""

    def __init__(self, bits: int, limit: int):
        self.bits = bits
        self.limit = limit
        super().__init__(f"{bits} bits exceeds enumeration limit of {limit}")


class ConfigError(DpmcError):
    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"invalid config '{key}': {reason}")
