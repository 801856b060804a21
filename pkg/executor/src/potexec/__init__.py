"""potexec: isolated execution of model-generated answer programs."""

from .runner import (
    DEFAULT_MEMORY_MB,
    DEFAULT_TIMEOUT_MS,
    STDOUT_LIMIT,
    ExecRequest,
    ExecutionResult,
    execute,
    render_answer,
)
from .service import handle_line, main, serve

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_MEMORY_MB", "DEFAULT_TIMEOUT_MS", "STDOUT_LIMIT",
    "ExecRequest", "ExecutionResult", "execute", "render_answer",
    "handle_line", "main", "serve",
]
