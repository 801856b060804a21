"""Live sampling: chat-completion HTTP client, prompt templates, and the
PoT executor subprocess client.

Endpoint configuration comes from the environment:
  CPSC_API_BASE     chat-completions URL
  CPSC_API_KEY      bearer token
  CPSC_MODEL        model name sent with each request
  CPSC_TIMEOUT      per-request timeout, seconds (default 60)
  CPSC_EXECUTOR_CMD command line of the PoT executor (optional)
"""
from __future__ import annotations

import itertools
import json
import os
import select
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Dict, Optional, Sequence, Tuple

from .answers import (
    ExecutionResult,
    Invalid,
    Modality,
    Sample,
    extract_cot_answer,
    extract_pot_answer,
    make_sample,
)
from .samplers import ProblemSpec

RETRY_BACKOFF = (1.0, 2.0, 4.0)  # seconds between retries; 4 attempts total


class TransportFailure(Exception):
    pass


def _default_post(url: str, *, headers: dict, json_body: dict, timeout: float):
    import requests

    return requests.post(url, headers=headers, json=json_body, timeout=timeout)


@dataclass
class ChatClient:
    api_base: str
    api_key: str
    model: str
    timeout: float = 60.0
    post_fn: Callable = _default_post
    sleep_fn: Callable[[float], None] = time.sleep

    @classmethod
    def from_env(cls) -> "ChatClient":
        base = os.environ.get("CPSC_API_BASE")
        key = os.environ.get("CPSC_API_KEY", "")
        model = os.environ.get("CPSC_MODEL")
        if not base or not model:
            raise TransportFailure(
                "live sampling needs CPSC_API_BASE and CPSC_MODEL in the environment")
        return cls(api_base=base, api_key=key, model=model,
                   timeout=float(os.environ.get("CPSC_TIMEOUT", "60")))

    def complete(self, prompt: str, temperature: float) -> str:
        """One completion, retried through transient failures with backoff."""
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        last: Optional[Exception] = None
        for attempt in range(len(RETRY_BACKOFF) + 1):
            if attempt:
                self.sleep_fn(RETRY_BACKOFF[attempt - 1])
            try:
                resp = self.post_fn(self.api_base, headers=headers,
                                    json_body=body, timeout=self.timeout)
                if getattr(resp, "status_code", 200) >= 400:
                    raise TransportFailure(f"HTTP {resp.status_code}")
                payload = resp.json()
                return payload["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - every failure is retried
                last = exc
        raise TransportFailure(str(last))


_PLACEHOLDERS = ("[[PROBLEM]]", "[[QUESTION]]")


@dataclass(frozen=True)
class PromptTemplates:
    cot: str
    pot: str

    @classmethod
    def load(cls, family: str, root: Optional[str] = None) -> "PromptTemplates":
        """Load templates/<family>/{cot,pot}.txt from a directory or package data."""
        if root is not None:
            with open(os.path.join(root, family, "cot.txt")) as fh:
                cot = fh.read()
            with open(os.path.join(root, family, "pot.txt")) as fh:
                pot = fh.read()
            return cls(cot=cot, pot=pot)
        base = resources.files("cpsc").joinpath("templates", family)
        return cls(cot=base.joinpath("cot.txt").read_text(),
                   pot=base.joinpath("pot.txt").read_text())

    def render(self, modality: Modality, problem: ProblemSpec) -> str:
        template = self.cot if modality is Modality.COT else self.pot
        out = template
        for placeholder in _PLACEHOLDERS:
            out = out.replace(placeholder, problem.text)
        return out


def extract_program(text: str) -> str:
    """Pull the program out of a PoT completion: cut at the few-shot
    delimiter and unwrap a markdown fence if the model added one."""
    cut = text.split("------", 1)[0]
    if "```" in cut:
        parts = cut.split("```")
        if len(parts) >= 3:
            block = parts[1]
            if block.startswith(("python\n", "py\n")):
                block = block.split("\n", 1)[1]
            cut = block
    return cut.strip()


class PotExecutorClient:
    """Drives one executor process over its line-delimited JSON protocol.

    A worker that times out, crashes, or emits a malformed line is killed and
    respawned on the next request; the pending request is reported as
    timeout/error so sampling can continue.
    """

    def __init__(self, cmd: Sequence[str], default_timeout_ms: int = 10000,
                 response_grace: float = 5.0) -> None:
        if not cmd:
            raise ValueError("executor command is empty")
        self.cmd = list(cmd)
        self.default_timeout_ms = default_timeout_ms
        self.response_grace = response_grace
        self._proc: Optional[subprocess.Popen] = None
        self._buf = b""
        self._ids = itertools.count(1)

    @classmethod
    def from_env(cls) -> Optional["PotExecutorClient"]:
        cmd = os.environ.get("CPSC_EXECUTOR_CMD")
        if not cmd:
            return None
        return cls(shlex.split(cmd))

    def _ensure(self) -> None:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL)
            self._buf = b""

    def _kill(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except Exception:
                pass
            self._proc = None
            self._buf = b""

    def _read_line(self, deadline: float) -> Tuple[str, Optional[bytes]]:
        """Returns ("ok", line) | ("timeout", None) | ("eof", None)."""
        assert self._proc is not None and self._proc.stdout is not None
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return "timeout", None
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                return "timeout", None
            chunk = os.read(fd, 65536)
            if not chunk:
                return "eof", None
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return "ok", line

    def execute(self, code: str, timeout_ms: Optional[int] = None) -> ExecutionResult:
        tmo = timeout_ms if timeout_ms is not None else self.default_timeout_ms
        req_id = next(self._ids)
        try:
            self._ensure()
            assert self._proc is not None and self._proc.stdin is not None
            payload = json.dumps({"id": req_id, "code": code, "timeout_ms": tmo})
            self._proc.stdin.write(payload.encode() + b"\n")
            self._proc.stdin.flush()
        except (OSError, ValueError):
            self._kill()
            return ExecutionResult(req_id, "error",
                                   error_message="executor unavailable")
        deadline = time.monotonic() + tmo / 1000.0 + self.response_grace
        status, line = self._read_line(deadline)
        if status == "timeout":
            self._kill()
            return ExecutionResult(req_id, "timeout",
                                   error_message="no response before deadline")
        if status == "eof":
            self._kill()
            return ExecutionResult(req_id, "error", error_message="executor crashed")
        try:
            obj = json.loads(line.decode("utf-8"))
            result = ExecutionResult.from_json(obj)
            if result.id != req_id:
                raise ValueError(f"response id {result.id} != request id {req_id}")
        except (ValueError, KeyError, UnicodeDecodeError):
            self._kill()  # malformed output: restart the worker
            return ExecutionResult(req_id, "error",
                                   error_message="protocol error; worker restarted")
        return result

    def close(self) -> None:
        self._kill()

    def __enter__(self) -> "PotExecutorClient":
        return self

    def __exit__(self, *_exc) -> None:
        self.close()


class LiveSource:
    """Samples a chat model live; PoT completions run through the executor."""

    def __init__(self, client: ChatClient, templates: PromptTemplates,
                 executor: Optional[PotExecutorClient] = None) -> None:
        self.client = client
        self.templates = templates
        self.executor = executor
        self._counters: Dict[Tuple[str, Modality], int] = {}

    @classmethod
    def from_env(cls, template_family: str = "gsm",
                 template_root: Optional[str] = None) -> "LiveSource":
        return cls(ChatClient.from_env(),
                   PromptTemplates.load(template_family, template_root),
                   PotExecutorClient.from_env())

    def next_sample(self, problem: ProblemSpec, modality: Modality,
                    temperature: float) -> Sample:
        key = (problem.id, modality)
        index = self._counters.get(key, 0)
        self._counters[key] = index + 1
        prompt = self.templates.render(modality, problem)
        try:
            text = self.client.complete(prompt, temperature)
        except TransportFailure:
            return make_sample(problem.id, modality, index, temperature,
                               "", Invalid("transport"))
        if modality is Modality.COT:
            extracted = extract_cot_answer(text)
        elif self.executor is None:
            extracted = Invalid("no executor configured")
        else:
            result = self.executor.execute(extract_program(text))
            extracted = extract_pot_answer(result)
        return make_sample(problem.id, modality, index, temperature, text, extracted)
