"""Operator catalog: the agent space workflows may draw from."""

from __future__ import annotations

import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

KINDS = ("string", "var", "list")
_IDENT = re.compile(r"[a-z_][a-z0-9_]*\Z")


class DuplicateOperator(ValueError):
    pass


@dataclass(frozen=True)
class OperatorSpec:
    name: str
    kwarg_schema: tuple[tuple[str, str], ...] = ()
    produces_boolean: bool = False

    def __post_init__(self):
        if not _IDENT.match(self.name):
            raise ValueError(f"invalid operator name {self.name!r}")
        object.__setattr__(self, "kwarg_schema", tuple(tuple(item) for item in self.kwarg_schema))
        for kw, kind in self.kwarg_schema:
            if kind not in KINDS:
                raise ValueError(f"{self.name}.{kw}: unknown kwarg kind {kind!r}")

    @property
    def kwarg_kinds(self) -> dict[str, str]:
        return dict(self.kwarg_schema)


CATALOG = (
    OperatorSpec("custom", (("instruction", "string"),)),
    OperatorSpec("answer_generate"),
    OperatorSpec("code_generate", (("instruction", "string"),)),
    OperatorSpec("programmer", (("analysis", "var"),)),
    OperatorSpec("sc_ensemble", (("solutions", "list"),)),
    OperatorSpec("review", (("pre_solution", "var"),)),
    OperatorSpec("test", (("solution", "var"),), produces_boolean=True),
    OperatorSpec("extract_answer", (("solution", "var"),)),
)


class OperatorRegistry(Mapping):
    """Read-only name -> OperatorSpec mapping that always contains the catalog."""

    def __init__(self, specs: Iterable[OperatorSpec]):
        self._specs: dict[str, OperatorSpec] = {}
        for spec in specs:
            if spec.name in self._specs:
                raise DuplicateOperator(spec.name)
            self._specs[spec.name] = spec

    def __getitem__(self, name: str) -> OperatorSpec:
        return self._specs[name]

    def __iter__(self):
        return iter(self._specs)

    def __len__(self) -> int:
        return len(self._specs)

    def __repr__(self) -> str:
        return f"OperatorRegistry({sorted(self._specs)})"


def build_registry(extensions: Iterable[OperatorSpec] = ()) -> OperatorRegistry:
    return OperatorRegistry([*CATALOG, *extensions])
