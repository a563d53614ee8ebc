"""CoXQL: a query language for conversational XAI intents, with parsers and evaluation."""

from .qlcore import (
    Category, CoxqlError, OperationKind, QueryAst, QuerySyntaxError, canonicalize, is_valid,
    normalize, parse_query, validate,
)

__version__ = "0.1.0"

__all__ = [
    "Category", "CoxqlError", "OperationKind", "QueryAst", "QuerySyntaxError", "canonicalize",
    "is_valid", "normalize", "parse_query", "validate", "__version__",
]
