"""Chat-completion executor for live LLM backends."""

from __future__ import annotations

import json
import logging
import os
import re
import subprocess
import sys
import time
from dataclasses import dataclass
from importlib import resources

import requests

from .interpreter import CallContext, Completion, ExecutorFault, ExecutorRequest, estimate_tokens

logger = logging.getLogger(__name__)

API_KEY_ENV = "SCOREFLOW_API_KEY"


class CredentialMissing(RuntimeError):
    pass


def default_prompts() -> dict[str, str]:
    text = resources.files("scoreflow.data").joinpath("operator_prompts.json").read_text("utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str = "gpt-4o-mini"
    max_attempts: int = 3
    backoff_base: float = 0.5
    request_timeout: float = 60.0
    allow_code_execution: bool = False


def render_messages(request: ExecutorRequest, system_prompt: str, public_tests=None) -> list[dict]:
    parts = [f"Problem:\n{request.task_prompt}"]
    for key, value in request.kwarg_values:
        if isinstance(value, tuple):
            listing = "\n".join(f"[{i + 1}] {v}" for i, v in enumerate(value))
            parts.append(f"{key}:\n{listing}")
        else:
            parts.append(f"{key}:\n{value}")
    if public_tests:
        parts.append("Test inputs:\n" + "\n".join(inp for inp, _ in public_tests))
    return [
        {"role": "system", "content": system_prompt},
        {"role": "user", "content": "\n\n".join(parts)},
    ]


def _normalize_line(text: str) -> str:
    return " ".join(text.strip().strip("`").split()).lower()


_CODE_BLOCK = re.compile(r"```(?:python)?\n(.*?)```", re.S)


class RemoteExecutor:
    def __init__(self, config: EndpointConfig, api_key: str | None = None, prompts=None, session=None):
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not config.url:
            raise CredentialMissing("endpoint URL is not configured")
        if not api_key:
            raise CredentialMissing(f"environment variable {API_KEY_ENV} is not set")
        self.config = config
        self._api_key = api_key
        self.prompts = prompts or default_prompts()
        self.session = session or requests.Session()

    def _post(self, messages: list[dict], temperature: float) -> Completion:
        payload = {"model": self.config.model, "messages": messages, "temperature": temperature}
        headers = {"Authorization": f"Bearer {self._api_key}"}
        last_error = None
        for attempt in range(1, self.config.max_attempts + 1):
            try:
                resp = self.session.post(
                    self.config.url, json=payload, headers=headers, timeout=self.config.request_timeout
                )
                if resp.status_code == 200:
                    body = resp.json()
                    text = body["choices"][0]["message"]["content"]
                    usage = body.get("usage") or {}
                    prompt_tokens = usage.get("prompt_tokens")
                    completion_tokens = usage.get("completion_tokens")
                    if prompt_tokens is None:
                        prompt_tokens = estimate_tokens(*(m["content"] for m in messages))
                    if completion_tokens is None:
                        completion_tokens = estimate_tokens(text)
                    return Completion(text, int(prompt_tokens), int(completion_tokens), attempt)
                last_error = f"HTTP {resp.status_code}"
            except (requests.RequestException, ValueError, KeyError, IndexError, TypeError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
            logger.warning("executor attempt %d/%d failed: %s", attempt, self.config.max_attempts, last_error)
            if attempt < self.config.max_attempts:
                time.sleep(self.config.backoff_base * 2 ** (attempt - 1))
        raise ExecutorFault(f"gave up after {self.config.max_attempts} attempts: {last_error}")

    def complete(self, request: ExecutorRequest, ctx: CallContext) -> Completion:
        system = self.prompts.get(request.operator_name)
        if system is None:
            raise ExecutorFault(f"no prompt template for operator {request.operator_name!r}")
        comp = self._post(render_messages(request, system), request.temperature)
        if request.operator_name == "programmer" and self.config.allow_code_execution:
            comp = Completion(
                comp.text + "\n" + self._run_code(comp.text),
                comp.prompt_tokens,
                comp.completion_tokens,
                comp.attempts,
            )
        return comp

    def verdict(self, request: ExecutorRequest, ctx: CallContext) -> tuple[bool, Completion]:
        tests = ctx.task.public_tests or ()
        if not tests:
            return True, Completion("pass", attempts=0)
        comp = self._post(render_messages(request, self.prompts["test"], tests), request.temperature)
        predicted = [line for line in comp.text.splitlines() if line.strip()]
        passed = len(predicted) == len(tests) and all(
            _normalize_line(p) == _normalize_line(expected) for p, (_, expected) in zip(predicted, tests)
        )
        return passed, comp

    def _run_code(self, text: str) -> str:
        # Unsafe: runs model-written code on the host. Off unless explicitly enabled.
        match = _CODE_BLOCK.search(text)
        if not match:
            return ""
        try:
            proc = subprocess.run(
                [sys.executable, "-c", match.group(1)],
                capture_output=True,
                text=True,
                timeout=10,
            )
        except subprocess.TimeoutExpired:
            return "[execution timed out]"
        return proc.stdout.strip() or proc.stderr.strip()[-500:]


def remote_executor(config: EndpointConfig, api_key: str | None = None) -> RemoteExecutor:
    return RemoteExecutor(config, api_key)
