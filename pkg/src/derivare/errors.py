"""Exception hierarchy shared by every derivare module."""

from __future__ import annotations


class DerivareError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DerivareError):
    """User-facing configuration problem (bad value, missing path)."""


class InvalidConfig(ConfigError):
    pass


class EmptyInput(DerivareError, ValueError):
    pass


# -- derivation structure -------------------------------------------------


class DerivationError(DerivareError):
    """A structural problem with a derivation step or transcript.

    ``line_no`` is set when the error was found while parsing a transcript.
    """

    def __init__(self, message: str, *, line_no: int | None = None) -> None:
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class UnknownRule(DerivationError):
    pass


class ArityMismatch(DerivationError):
    pass


class UnknownLabel(DerivationError):
    pass


class ForwardReference(UnknownLabel):
    """A derived label used before the step that creates it."""


class TreeAlreadyFinal(DerivationError):
    pass


class StepsAfterFinal(TreeAlreadyFinal):
    pass


class MalformedLine(DerivationError):
    pass


class BadFinalityMarker(DerivationError):
    pass


class EmptyConclusion(DerivationError):
    pass


class MissingFinal(DerivationError):
    pass


class StepBudgetExceeded(DerivationError):
    pass


class EmptyHypotheses(DerivationError, ValueError):
    pass


class ContextOverflow(DerivareError):
    pass


# -- ingestion ------------------------------------------------------------


class EmptyCorpus(DerivareError):
    pass


# -- providers ------------------------------------------------------------


class ProviderError(DerivareError):
    """Failure reported by a generation, embedding or scoring backend."""


class TransportError(ProviderError):
    pass


class RateLimited(TransportError):
    pass


class ScriptExhausted(ProviderError):
    pass


class ScriptMismatch(ProviderError):
    pass


class DimensionMismatch(DerivareError, ValueError):
    pass


class ZeroVector(DerivareError, ValueError):
    pass


# -- evaluation -----------------------------------------------------------


class MissingReference(DerivareError, ValueError):
    pass


class NoResultMarker(DerivareError):
    pass


class ScoreOutOfRange(DerivareError, ValueError):
    pass


class AllRecordsFailed(DerivareError):
    pass
