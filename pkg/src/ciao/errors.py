"""Exception hierarchy for the ciao pipeline."""

from __future__ import annotations


class CiaoError(Exception):
    """Base class for every error raised by ciao."""


# repository acquisition and flattening


class RepoNotFound(CiaoError):
    pass


class CloneFailed(CiaoError):
    pass


class EmptyAfterFiltering(CiaoError):
    pass


class DuplicatePath(CiaoError):
    pass


# templates


class TemplateSyntax(CiaoError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class TemplateInvalid(CiaoError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


# prompts


class BudgetTooSmall(CiaoError):
    pass


# LLM providers


class ProviderError(CiaoError):
    """Non-retryable provider failure (bad request, malformed response)."""


class TransientProviderError(ProviderError):
    """Timeout, rate limit or server-side failure; safe to retry."""

    def __init__(self, kind: str, message: str = ""):
        super().__init__(f"{kind}: {message}" if message else kind)
        self.kind = kind


class AuthFailed(ProviderError):
    pass


class OutputEmpty(ProviderError):
    pass


class ProviderExhausted(ProviderError):
    def __init__(self, attempts: int, last_error: BaseException):
        super().__init__(f"gave up after {attempts} attempts: {last_error}")
        self.attempts = attempts
        self.last_error = last_error


class UnknownModelPrice(CiaoError):
    pass


# generation


class SectionGenerationFailed(CiaoError):
    def __init__(self, section_id: str, cause: BaseException):
        super().__init__(f"section {section_id!r} failed: {cause}")
        self.section_id = section_id
        self.cause = cause


class MissingSection(CiaoError):
    def __init__(self, index: int):
        super().__init__(f"no generated section for template index {index}")
        self.index = index


class DuplicateSection(CiaoError):
    def __init__(self, index: int):
        super().__init__(f"more than one generated section for index {index}")
        self.index = index


# diagrams and reporting


class SpanMismatch(CiaoError):
    pass


class ReportWriteFailed(CiaoError):
    pass
