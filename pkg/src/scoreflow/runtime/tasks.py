from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Task:
    id: str
    category: str
    prompt: str
    gold: str
    features: tuple[float, ...]
    public_tests: tuple[tuple[str, str], ...] | None = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError(f"task {self.id!r}: prompt must be nonempty")
        feats = tuple(float(v) for v in self.features)
        if not all(math.isfinite(v) for v in feats):
            raise ValueError(f"task {self.id!r}: features must be finite")
        object.__setattr__(self, "features", feats)
        if self.public_tests is not None:
            object.__setattr__(
                self, "public_tests", tuple((str(i), str(o)) for i, o in self.public_tests)
            )

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "prompt": self.prompt,
            "gold": self.gold,
            "features": list(self.features),
            "public_tests": None if self.public_tests is None else [list(t) for t in self.public_tests],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Task":
        expected = {"id", "category", "prompt", "gold", "features", "public_tests"}
        keys = set(obj)
        if not keys <= expected or not {"id", "category", "prompt", "gold", "features"} <= keys:
            raise ValueError(f"task record has fields {sorted(keys)}, expected {sorted(expected)}")
        return cls(
            id=str(obj["id"]),
            category=str(obj["category"]),
            prompt=str(obj["prompt"]),
            gold=str(obj["gold"]),
            features=tuple(obj["features"]),
            public_tests=obj.get("public_tests"),
        )


def load_tasks(path) -> list[Task]:
    tasks = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                task = Task.from_json(json.loads(line))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if task.id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate task id {task.id!r}")
            seen.add(task.id)
            tasks.append(task)
    return tasks


def save_tasks(tasks, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task.to_json(), sort_keys=True) + "\n")
    return path


_WORDS = (
    "compute the value of the expression given the constraints below and report "
    "the final number after checking each intermediate step carefully for errors"
).split()


def planted_tasks(n_simple: int = 20, n_complex: int = 20, seed: int = 0) -> list[Task]:
    """Synthetic two-category task set for the planted environment.

    Features are ``[1, is_complex, prompt_length / 500]``; prompt lengths are
    drawn independently of the category.
    """
    rng = np.random.default_rng(seed)
    tasks = []
    for category, count in (("simple", n_simple), ("complex", n_complex)):
        for i in range(count):
            n_words = int(rng.integers(5, 60))
            words = [_WORDS[int(j)] for j in rng.integers(0, len(_WORDS), size=n_words)]
            prompt = f"[{category} #{i}] " + " ".join(words)
            gold = str(int(rng.integers(0, 10_000)))
            tasks.append(
                Task(
                    id=f"{category}-{i:03d}",
                    category=category,
                    prompt=prompt,
                    gold=gold,
                    features=(1.0, float(category == "complex"), len(prompt) / 500.0),
                )
            )
    return tasks
