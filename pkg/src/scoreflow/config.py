"""Run configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .lang import Limits
from .preference import WeightConfig
from .runtime.planted import DEFAULT_RULES, PlantedWorldSpec, format_rules, parse_rules
from .runtime.remote import EndpointConfig
from .score_dpo import TrainConfig
from .scoring import Metric


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    tasks_path: str = ""
    bank_path: str = ""
    output_dir: str = "runs/default"
    seed: int = 0
    split: str = "1:4"
    k: int = 8
    M: int = 3
    resample_cap: int = 16
    executor: str = "planted"
    parallelism: int = 8
    refresh_ref: bool = True
    # planted executor
    noise_flip_prob: float = 0.0
    planted_seed: int = 0
    planted_rules: str = format_rules(DEFAULT_RULES)
    # scoring
    metric: str = "exact_match"
    repeats: int = 3
    # training
    method: str = "score_dpo"
    beta: float = 0.1
    eta: float = 0.05
    samples_per_iter: int = 2000
    batch_size: int = 1
    reward_weight_mode: str = "score"
    alpha: float = 3.0
    weight_mode: str = "power"
    max_epochs_inner: int = 1
    convergence_eps: float = 0.005
    early_stop: bool = False
    # static and runtime limits
    max_loop_bound: int = 10
    max_static_calls: int = 50
    timeout_s: float = 120.0
    # remote executor
    endpoint_url: str = ""
    model: str = "gpt-4o-mini"

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError("k must be >= 2 (a single candidate cannot form a pair)")
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if self.resample_cap < 1:
            raise ConfigError("resample_cap must be >= 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.executor not in ("planted", "remote"):
            raise ConfigError("executor must be 'planted' or 'remote'")
        self.split_fractions()
        try:
            self.metric_spec()
            self.train_config()
            self.planted_spec()
            self.limits()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def split_fractions(self) -> tuple[float, float]:
        try:
            v, t = (float(part) for part in self.split.split(":"))
        except ValueError:
            raise ConfigError(f"split must look like '1:4', got {self.split!r}") from None
        if v <= 0 or t < 0:
            raise ConfigError("split needs a positive validation share")
        return v / (v + t), t / (v + t)

    def metric_spec(self) -> Metric:
        return Metric(self.metric, self.repeats)

    def weight_config(self) -> WeightConfig:
        return WeightConfig(self.alpha, self.weight_mode)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            beta=self.beta,
            eta=self.eta,
            samples_per_iter=self.samples_per_iter,
            batch_size=self.batch_size,
            reward_weight_mode=self.reward_weight_mode,
            weight_cfg=self.weight_config(),
            seed=self.seed,
            max_epochs_inner=self.max_epochs_inner,
            convergence_eps=self.convergence_eps,
            early_stop=self.early_stop,
            method=self.method,
        )

    def planted_spec(self) -> PlantedWorldSpec:
        return PlantedWorldSpec(parse_rules(self.planted_rules), self.noise_flip_prob, self.planted_seed)

    def limits(self) -> Limits:
        return Limits(self.max_loop_bound, self.max_static_calls, self.timeout_s)

    def endpoint(self) -> EndpointConfig:
        return EndpointConfig(self.endpoint_url, self.model)

    def digest(self) -> str:
        data = asdict(self)
        data.pop("output_dir")
        data.pop("parallelism")
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def _convert(name: str, kind: str, raw: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            return _BOOL[raw.lower()]
    except (ValueError, KeyError):
        raise ConfigError(f"{name}: cannot read {raw!r} as {kind}") from None
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        raw = raw[1:-1]
    return raw


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    kinds = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in kinds:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, kinds[key], raw)
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text("utf-8"), str(path))


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
