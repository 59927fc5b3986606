"""The ``.flows`` workflow description language."""

from .nodes import (
    Call,
    IfTest,
    Let,
    LetEmptyList,
    ListOf,
    Push,
    Repeat,
    Span,
    Str,
    VarRef,
    Workflow,
    iter_calls,
    operators_used,
    static_call_count,
)
from .parser import WorkflowSyntaxError, parse, split_bank_text, tokenize
from .printer import format_workflow, workflow_digest
from .validate import Limits, ValidationReport, Violation, validate

__all__ = [
    "Call",
    "IfTest",
    "Let",
    "LetEmptyList",
    "Limits",
    "ListOf",
    "Push",
    "Repeat",
    "Span",
    "Str",
    "ValidationReport",
    "VarRef",
    "Violation",
    "Workflow",
    "WorkflowSyntaxError",
    "format_workflow",
    "iter_calls",
    "operators_used",
    "parse",
    "split_bank_text",
    "static_call_count",
    "tokenize",
    "validate",
    "workflow_digest",
]
