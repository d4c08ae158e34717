"""Exception hierarchy.

Every domain error carries a ``category`` string; the CLI prints it and the
broker copies it into ``ErrorReply`` payloads.
"""

from __future__ import annotations


class SplError(Exception):
    category = "error"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.category)
        self.message = message or self.category
        self.details = details

    def __str__(self) -> str:
        return f"{self.category}: {self.message}"


class UnknownFeatureError(SplError):
    category = "unknown-feature"


class TooLargeError(SplError):
    category = "too-large"


class NoSuchFeatureError(SplError):
    category = "no-such-feature"


class NoSuchValueError(SplError):
    category = "no-such-value"


class XmlSyntaxError(SplError):
    category = "syntax-error"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message, line=line)
        self.line = line


class SchemaError(SplError):
    category = "schema-error"

    def __init__(self, message: str, element: str | None = None):
        super().__init__(message, element=element)
        self.element = element


class SemanticError(SplError):
    """The document parsed but the model breaks a well-formedness rule."""

    category = "semantic-error"

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(str(e) for e in self.errors), errors=self.errors)


class UnselectedFeatureError(SplError):
    category = "unselected-feature"


class ContradictoryObservationsError(SplError):
    category = "contradictory-observations"


class NoMatchingServiceError(SplError):
    category = "no-matching-service"


class QocUnsatisfiableError(SplError):
    category = "qoc-unsatisfiable"


class InvalidOfferError(SplError):
    category = "invalid-offer"


class DirectiveError(SplError):
    """Unbalanced or malformed conditional-compilation directive."""

    def __init__(self, category: str, line_number: int, message: str = ""):
        self.category = category
        self.line_number = line_number
        super().__init__(message or f"line {line_number}", line_number=line_number)


class FormatError(SplError):
    """Malformed line-oriented input (context, requirements or session files)."""

    category = "format-error"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}", line=line)
        self.line = line
