"""Operator registry, executors and the workflow interpreter."""

from .interpreter import (
    CallContext,
    Completion,
    ExecutionResult,
    Executor,
    ExecutorFault,
    ExecutorRequest,
    RuntimeFault,
    Timeout,
    TraceEntry,
    UnboundVariable,
    UnknownOperator,
    interpret,
)
from .planted import DEFAULT_RULES, WRONG, PlantedExecutor, PlantedWorldSpec, Rule, parse_rules, planted_executor
from .registry import CATALOG, DuplicateOperator, OperatorRegistry, OperatorSpec, build_registry
from .remote import CredentialMissing, EndpointConfig, RemoteExecutor, remote_executor
from .tasks import Task, load_tasks, planted_tasks, save_tasks

__all__ = [
    "CATALOG",
    "CallContext",
    "Completion",
    "CredentialMissing",
    "DEFAULT_RULES",
    "DuplicateOperator",
    "EndpointConfig",
    "ExecutionResult",
    "Executor",
    "ExecutorFault",
    "ExecutorRequest",
    "OperatorRegistry",
    "OperatorSpec",
    "PlantedExecutor",
    "PlantedWorldSpec",
    "RemoteExecutor",
    "Rule",
    "RuntimeFault",
    "Task",
    "Timeout",
    "TraceEntry",
    "UnboundVariable",
    "UnknownOperator",
    "WRONG",
    "build_registry",
    "interpret",
    "load_tasks",
    "parse_rules",
    "planted_executor",
    "planted_tasks",
    "remote_executor",
    "save_tasks",
]
