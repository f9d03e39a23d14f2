"""
Configuration helpers.

Two sources feed configuration: `.env` files (loaded with python-dotenv) for
process-level knobs such as the worker count, and UTF-8 ``key = value`` files
for numerical settings such as tolerances and prior weights.
"""

import logging
import os
from pathlib import Path
from typing import Dict, Iterable, Union

from dotenv import load_dotenv

from .errors import ValidationError

logger = logging.getLogger(__name__)

THREADS_ENV_VAR = "HFLOW_THREADS"

_env_loaded = False


def load_environment(dotenv_path: Union[str, Path, None] = None) -> None:
    """Load `.env` once per process; existing environment variables win."""
    global _env_loaded
    if _env_loaded and dotenv_path is None:
        return
    load_dotenv(dotenv_path=dotenv_path, override=False)
    _env_loaded = True


def worker_threads() -> int:
    """
    Number of worker threads the library may use.

    Returns:
        The value of HFLOW_THREADS, at least 1. Defaults to 1.
    """
    load_environment()
    raw = os.getenv(THREADS_ENV_VAR, "1").strip()
    try:
        threads = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}")
    return max(1, threads)


def parse_key_value_lines(lines: Iterable[str], source: str = "<config>") -> Dict[str, str]:
    """
    Parse ``key = value`` lines.

    Blank lines and lines starting with ``#`` are ignored. A key may appear once.

    Args:
        lines: Text lines
        source: Name used in error messages

    Returns:
        Mapping of stripped keys to stripped values
    """
    entries: Dict[str, str] = {}
    for number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise ValidationError(f"{source}:{number}: expected 'key = value', got {text!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if not key:
            raise ValidationError(f"{source}:{number}: empty key")
        if key in entries:
            raise ValidationError(f"{source}:{number}: duplicate key {key!r}")
        entries[key] = value
    return entries


def read_key_value_file(path: Union[str, Path]) -> Dict[str, str]:
    """Read a ``key = value`` file from disk."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    entries = parse_key_value_lines(text.splitlines(), source=str(path))
    logger.debug(f"Read {len(entries)} config entries from {path}")
    return entries
