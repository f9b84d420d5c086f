"""Exception types and exclusion records shared across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field


class CitebiasError(Exception):
    """Base class for all package errors."""


class TransportError(CitebiasError):
    """A network-level failure talking to an external service.

    ``retryable`` distinguishes transient conditions (timeouts, 429, 5xx)
    from permanent ones.
    """

    def __init__(self, message: str, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


class IndexParseError(CitebiasError):
    """An index response could not be parsed; names the offending record."""

    def __init__(self, message: str, record: object = None):
        super().__init__(message)
        self.record = record


class AmbiguousMatchError(CitebiasError):
    """Title resolution matched more than one index record."""

    def __init__(self, title: str, candidates: list):
        super().__init__(
            f"title {title!r} matches {len(candidates)} index records: "
            + ", ".join(str(c) for c in candidates)
        )
        self.title = title
        self.candidates = candidates


class TexError(CitebiasError):
    """LaTeX source could not be processed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StructureError(CitebiasError):
    """Document text lacks an expected structural element (e.g. references heading)."""


class TableParseError(CitebiasError):
    """No usable markdown table found in an LLM response."""


class MockResponseMissing(CitebiasError):
    """The replay store has no response for a prompt hash."""

    def __init__(self, digest: str, store: str):
        super().__init__(f"no mock response for prompt {digest} in {store}")
        self.digest = digest


class ProviderRefusal(CitebiasError):
    """The provider returned an empty or filtered response."""


class CalibrationError(CitebiasError):
    """The labelled set cannot support calibration (e.g. one class only)."""


class ConfigError(CitebiasError):
    """Invalid pipeline configuration."""


class PipelineError(CitebiasError):
    """A stage failed hard; the manifest records the failure point."""


@dataclass(frozen=True)
class Exclusion:
    """A paper (or reference) dropped from the corpus, with a reason code.

    Exclusions are recorded, never silent: attrition must be reportable.
    """

    code: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}" if self.detail else self.code


# Reason codes used by the corpus and docprep stages.
EXCL_NO_MAIN = "no-main"
EXCL_MULTIPLE_MAINS = "multiple-mains"
EXCL_NO_BIB = "no-bib"
EXCL_COMPILE_ERROR = "compile-error"
EXCL_NOT_FOUND = "index-not-found"
EXCL_AMBIGUOUS = "index-ambiguous"


@dataclass
class Warnings:
    """Non-fatal anomalies attached to a paper record."""

    items: list[str] = field(default_factory=list)

    def add(self, message: str) -> None:
        self.items.append(message)

    def __bool__(self) -> bool:
        return bool(self.items)
