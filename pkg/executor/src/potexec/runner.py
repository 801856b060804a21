"""Run one untrusted program in a fresh, resource-limited child process.

Every request forks its own worker: state can't leak between programs, and a
crash, runaway loop, or memory bomb takes down only that worker.  This is
containment for model-written arithmetic, not a jail against a determined
adversary.
"""
from __future__ import annotations

import io
import multiprocessing
import os
import resource
import socket
import sys
import tempfile
import traceback
from dataclasses import dataclass
from typing import Any, Optional

DEFAULT_TIMEOUT_MS = 10_000
DEFAULT_MEMORY_MB = 512
STDOUT_LIMIT = 8 * 1024  # bytes of program stdout kept per result


@dataclass
class ExecRequest:
    """One program to run, as received on the wire."""

    id: Any
    code: str
    timeout_ms: int = DEFAULT_TIMEOUT_MS

    def __post_init__(self) -> None:
        if not isinstance(self.code, str):
            raise ValueError("code must be a string")
        if isinstance(self.timeout_ms, bool) or not isinstance(self.timeout_ms, int):
            raise ValueError("timeout_ms must be an integer")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")


@dataclass
class ExecutionResult:
    """Outcome of one program run."""

    id: Any
    status: str  # "ok" | "error" | "timeout"
    ans_repr: Optional[str] = None
    stdout: str = ""
    error_message: Optional[str] = None

    def __post_init__(self) -> None:
        if self.status not in ("ok", "error", "timeout"):
            raise ValueError(f"unknown status {self.status!r}")
        if (self.status == "ok") != (self.ans_repr is not None):
            raise ValueError("ans_repr must be set exactly when status is ok")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "status": self.status,
            "ans_repr": self.ans_repr,
            "stdout": self.stdout,
            "error_message": self.error_message,
        }


def render_answer(value: Any) -> str:
    """Canonical wire form of an `ans` value.

    Booleans come first (bool is an int subclass); floats use repr, which is
    the shortest string that round-trips.  Everything else — ints, Decimal,
    Fraction, symbolic expressions — renders via str and is normalized on the
    host side.
    """
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    if isinstance(value, float):
        return repr(value)
    return str(value)


class _CappedBuffer(io.StringIO):
    """Stdout sink that stops retaining text once the wire limit is covered.

    A program may print far more than we will ever ship; keeping only the
    first STDOUT_LIMIT characters bounds memory no matter what.  (The first
    8 KiB of encoded bytes always come from at most that many characters.)
    """

    def write(self, s: str) -> int:
        kept = self.tell()
        if kept < STDOUT_LIMIT:
            super().write(s[: STDOUT_LIMIT - kept])
        return len(s)


def _clip(text: str) -> str:
    raw = text.encode("utf-8")
    if len(raw) <= STDOUT_LIMIT:
        return text
    return raw[:STDOUT_LIMIT].decode("utf-8", errors="ignore")


def _refuse_network(*_args: Any, **_kwargs: Any) -> Any:
    raise OSError("network access is disabled in the executor")


def _confine(memory_mb: int, workdir: str) -> None:
    """Best-effort isolation applied inside the worker, before user code."""
    os.chdir(workdir)
    limit = memory_mb * 1024 * 1024
    try:
        resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
    except (ValueError, OSError):
        pass  # platform refused; the wall clock still bounds the damage
    # The fork inherits the service's protocol fds.  Point 0/1 at /dev/null
    # so user code can neither swallow pending requests nor inject bytes
    # into the response stream; prints are captured at the sys.stdout level.
    devnull = os.open(os.devnull, os.O_RDWR)
    os.dup2(devnull, 0)
    os.dup2(devnull, 1)
    os.close(devnull)
    # The parent's stdin object may hold buffered lookahead from pipelined
    # requests; replace it so user code can't read protocol data either.
    sys.stdin = io.StringIO()
    socket.socket = _refuse_network  # type: ignore[misc,assignment]


def _worker(code: str, memory_mb: int, workdir: str, conn: Any) -> None:
    payload = {"status": "error", "ans_repr": None, "stdout": "",
               "error_message": None}
    try:
        _confine(memory_mb, workdir)
        out = _CappedBuffer()
        namespace: dict = {"__name__": "__main__"}
        saved = sys.stdout
        sys.stdout = out
        try:
            exec(code, namespace)  # the entire point of this process
        except BaseException as exc:
            detail = traceback.format_exception_only(type(exc), exc)[-1].strip()
            payload["error_message"] = detail
        else:
            if "ans" in namespace:
                try:
                    payload["ans_repr"] = render_answer(namespace["ans"])
                    payload["status"] = "ok"
                except BaseException as exc:
                    payload["error_message"] = f"unrenderable ans: {exc}"
            else:
                payload["error_message"] = "ans_undefined"
        finally:
            sys.stdout = saved
        payload["stdout"] = _clip(out.getvalue())
    except BaseException as exc:  # confinement failed; still report
        payload["error_message"] = f"{type(exc).__name__}: {exc}"
    try:
        conn.send(payload)
        conn.close()
    except Exception:
        os._exit(70)
    os._exit(0)


def execute(request: ExecRequest, memory_mb: int = DEFAULT_MEMORY_MB) -> ExecutionResult:
    """Run one request in a fresh worker and always return a result."""
    ctx = multiprocessing.get_context("fork")
    recv_end, send_end = ctx.Pipe(duplex=False)
    try:
        with tempfile.TemporaryDirectory(prefix="potexec-",
                                         ignore_cleanup_errors=True) as workdir:
            proc = ctx.Process(target=_worker,
                               args=(request.code, memory_mb, workdir, send_end),
                               daemon=True)
            proc.start()
            send_end.close()
            proc.join(request.timeout_ms / 1000.0)
            if proc.is_alive():
                proc.kill()
                proc.join()
                return ExecutionResult(
                    request.id, "timeout",
                    error_message=f"no result within {request.timeout_ms} ms")
            payload = None
            if recv_end.poll():
                try:
                    payload = recv_end.recv()
                except (EOFError, OSError):
                    payload = None
    finally:
        recv_end.close()
    if payload is None:
        return ExecutionResult(
            request.id, "error",
            error_message=f"worker crashed (exit code {proc.exitcode})")
    return ExecutionResult(request.id, payload["status"],
                           ans_repr=payload["ans_repr"],
                           stdout=payload["stdout"],
                           error_message=payload["error_message"])
