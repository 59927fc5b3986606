from __future__ import annotations

import hashlib

from .nodes import Call, IfTest, Let, LetEmptyList, ListOf, Push, Repeat, Str, VarRef, Workflow


def _quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _arg(arg) -> str:
    if isinstance(arg, Str):
        return _quote(arg.value)
    if isinstance(arg, VarRef):
        return arg.name
    if isinstance(arg, ListOf):
        return "[" + ", ".join(arg.names) + "]"
    raise TypeError(f"not a kwarg value: {arg!r}")


def _call(call: Call) -> str:
    inner = ", ".join(f"{k}={_arg(v)}" for k, v in call.kwargs)
    return f"{call.operator}({inner})"


def _stmt_lines(stmt, depth: int, indent: str | None) -> list[str]:
    pad = "" if indent is None else indent * depth
    if isinstance(stmt, Let):
        return [f"{pad}let {stmt.name} = {_call(stmt.call)}"]
    if isinstance(stmt, LetEmptyList):
        return [f"{pad}let {stmt.name} = []"]
    if isinstance(stmt, Push):
        return [f"{pad}push {stmt.target}, {stmt.value}"]
    if isinstance(stmt, Repeat):
        return [
            f"{pad}repeat {stmt.count} {{",
            *_block(stmt.body, depth + 1, indent),
            f"{pad}}}",
        ]
    if isinstance(stmt, IfTest):
        return [
            f"{pad}if test({stmt.condition}) {{",
            *_block(stmt.then_body, depth + 1, indent),
            f"{pad}}} else {{",
            *_block(stmt.else_body, depth + 1, indent),
            f"{pad}}}",
        ]
    raise TypeError(f"not a statement: {stmt!r}")


def _block(statements, depth: int, indent: str | None) -> list[str]:
    lines: list[str] = []
    for stmt in statements:
        lines.extend(_stmt_lines(stmt, depth, indent))
    return lines


def format_workflow(wf: Workflow, indent: str | None = None) -> str:
    """Render a workflow as source text.

    With ``indent=None`` (the default) the output is the canonical one-line
    form used for digests, e.g. ``workflow { let s = answer_generate() return s }``.
    Passing an indent string produces a multi-line layout for bank files.
    Both forms parse back to an equal AST.
    """
    body = _block(wf.statements, 1, indent)
    ret = ("" if indent is None else indent) + f"return {wf.return_expr}"
    parts = ["workflow {", *body, ret, "}"]
    return (" " if indent is None else "\n").join(parts)


def workflow_digest(wf: Workflow) -> str:
    return hashlib.sha256(format_workflow(wf).encode("utf-8")).hexdigest()
