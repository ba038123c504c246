"""
Terminal helpers for the CLI - colors and status lines.

Status lines go to stderr so stdout stays machine-readable JSON.
"""

import os
import sys
from typing import Any, Mapping, Sequence


class Colors:
    """ANSI color codes for terminal output."""
    GREEN = "\033[92m"
    RED = "\033[91m"
    YELLOW = "\033[93m"
    CYAN = "\033[96m"
    RESET = "\033[0m"
    BOLD = "\033[1m"
    DIM = "\033[2m"


# Shorthand alias
C = Colors


def use_color() -> bool:
    """Colors only on an interactive stderr and without NO_COLOR."""
    return sys.stderr.isatty() and "NO_COLOR" not in os.environ


def _paint(color: str, text: str) -> str:
    return f"{color}{text}{C.RESET}" if use_color() else text


def print_header(task: str, out_dir: str):
    """Print the task banner."""
    print(_paint(C.CYAN + C.BOLD, f"discrete-cbo {task}") + f"  -> {out_dir}", file=sys.stderr)


def print_error(message: str):
    print(_paint(C.RED, message), file=sys.stderr)


def print_success(message: str):
    print(_paint(C.GREEN, f"  {message}"), file=sys.stderr)


def print_warning(message: str):
    print(_paint(C.YELLOW, f"  Warning: {message}"), file=sys.stderr)


def print_info(message: str):
    print(_paint(C.DIM, f"  {message}"), file=sys.stderr)


def format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    return str(value)


def print_summary(title: str, values: Mapping[str, Any], keys: Sequence[str] = ()):
    """Aligned key/value block; keys limits and orders what is shown."""
    shown = [k for k in (keys or values.keys()) if k in values]
    if not shown:
        return
    width = max(len(k) for k in shown)
    print(_paint(C.BOLD, title), file=sys.stderr)
    for key in shown:
        print(f"  {key.ljust(width)}  {format_value(values[key])}", file=sys.stderr)
