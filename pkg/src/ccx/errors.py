"""Exception types. Each carries an optional witness for reports."""

from __future__ import annotations


class CCXError(Exception):
    exit_code = 1

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class StructuralError(CCXError):
    pass


class SchemaError(CCXError):
    pass


class RecipeError(CCXError):
    pass


class ResourceError(CCXError):
    pass


class PushforwardError(CCXError):
    pass


class PreconditionError(CCXError):
    pass


class RepresentationError(CCXError):
    pass


class HorizonError(CCXError):
    pass


class ParameterError(CCXError):
    pass


class ContractionError(CCXError):
    pass


class DomainError(CCXError):
    pass


class CoverageError(CCXError):
    pass
