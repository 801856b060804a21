"""Line-delimited JSON service: one request per stdin line, one result per
stdout line, in order.  Pooling for concurrency is the caller's business —
each service process handles a single request at a time.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Any, Optional, TextIO

from .runner import DEFAULT_MEMORY_MB, DEFAULT_TIMEOUT_MS, ExecRequest, execute


def _error_response(request_id: Any, message: str) -> dict:
    return {"id": request_id, "status": "error", "ans_repr": None,
            "stdout": "", "error_message": message}


def handle_line(line: str, memory_mb: int = DEFAULT_MEMORY_MB) -> dict:
    """Turn one input line into one response object, whatever it takes.

    A malformed line yields an error response (with the request id when it
    can be salvaged) rather than killing the service: the peer may have other
    requests in flight.
    """
    try:
        obj = json.loads(line)
    except ValueError as exc:
        return _error_response(None, f"malformed request: {exc}")
    request_id = obj.get("id") if isinstance(obj, dict) else None
    try:
        if not isinstance(obj, dict):
            raise ValueError("request must be a JSON object")
        request = ExecRequest(
            id=request_id,
            code=obj["code"],
            timeout_ms=obj.get("timeout_ms", DEFAULT_TIMEOUT_MS))
    except (KeyError, ValueError, TypeError) as exc:
        return _error_response(request_id, f"malformed request: {exc}")
    try:
        return execute(request, memory_mb=memory_mb).to_json()
    except Exception as exc:  # e.g. fork pressure; stay up for the next line
        return _error_response(request_id, f"internal executor failure: {exc}")


def serve(stdin: TextIO, stdout: TextIO, memory_mb: int = DEFAULT_MEMORY_MB) -> None:
    for line in stdin:
        if not line.strip():
            continue
        response = handle_line(line, memory_mb=memory_mb)
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="potexec",
        description="Run answer programs from stdin (one JSON request per "
                    "line), writing one JSON result per line to stdout.")
    parser.add_argument("--memory-mb", type=int, default=DEFAULT_MEMORY_MB,
                        help="address-space cap per worker process "
                             "(default %(default)s)")
    args = parser.parse_args(argv)
    if args.memory_mb <= 0:
        parser.error("--memory-mb must be positive")
    try:
        serve(sys.stdin, sys.stdout, memory_mb=args.memory_mb)
    except BrokenPipeError:
        pass  # peer went away; nothing left to answer
    except KeyboardInterrupt:
        return 130
    return 0
