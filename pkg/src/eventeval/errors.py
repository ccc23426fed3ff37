"""Exception hierarchy.

Every domain failure derives from ``EventEvalError`` so the CLI can map it to
exit status 1 without catching programming errors.
"""

from __future__ import annotations


class EventEvalError(Exception):
    """Base class for typed domain failures."""


# data model

class Violation(tuple):
    """(code, message) pair describing one broken invariant."""

    __slots__ = ()

    def __new__(cls, code: str, message: str):
        return super().__new__(cls, (code, message))

    @property
    def code(self) -> str:
        return self[0]

    @property
    def message(self) -> str:
        return self[1]

    def __repr__(self) -> str:
        return f"Violation({self.code}: {self.message})"


class ValidationFailure(EventEvalError):
    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(f"{v.code}: {v.message}" for v in self.violations))

    @property
    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


class MalformedRecord(EventEvalError):
    def __init__(self, line: int, reason: str, path: str | None = None):
        self.line = line
        self.reason = reason
        self.path = path
        where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"malformed record at {where}: {reason}")


class UnknownSplit(EventEvalError):
    pass


class DuplicatePrediction(EventEvalError):
    pass


# corpus builder

class ProviderFailure(EventEvalError):
    """Embedding backend failed; never read as low similarity."""


class AnnotatorFailure(EventEvalError):
    pass


class MissingSimilarityScores(EventEvalError):
    pass


# metrics

class InvalidOrder(EventEvalError, ValueError):
    pass


class EncoderFailure(EventEvalError):
    pass


# recall metrics

class DiscriminatorFailure(EventEvalError):
    def __init__(self, element, cause: BaseException):
        self.element = element
        self.cause = cause
        super().__init__(f"discriminator failed on {element!r}: {cause}")


class MissingAnnotation(EventEvalError):
    pass


# nli builder

class NliBuildError(EventEvalError):
    """A single pair could not be built; build_dataset counts these as skips."""


class RephraserFailure(NliBuildError):
    pass


class IdenticalRevision(NliBuildError):
    pass


class DegenerateRemoval(NliBuildError):
    pass


class EmptyRemoval(NliBuildError):
    pass


class NoEligibleReplacement(NliBuildError):
    pass


class TooManySkips(EventEvalError):
    pass


# harness

class ContextOverflow(EventEvalError):
    def __init__(self, length: int, limit: int):
        self.length = length
        self.limit = limit
        super().__init__(f"prompt length {length} exceeds context limit {limit}")


class BackendFailure(EventEvalError):
    pass


class RunAborted(EventEvalError):
    pass


# analysis

class DuplicateScoreRecord(EventEvalError):
    pass


class LengthMismatch(EventEvalError, ValueError):
    pass


class EmptyInput(EventEvalError, ValueError):
    pass


# cli

class ConfigError(EventEvalError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))
