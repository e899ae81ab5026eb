"""
Core utilities: logging setup, configuration hashing and atomic result writes.
"""
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional

import xxhash

from src.utils.config import RUNTIME_CONFIG

logger = logging.getLogger(__name__)


def setup_logging(level: Optional[str] = None) -> None:
    """
    Configure logging for the application.

    Args:
        level: Logging level name; defaults to COVLAB_LOG_LEVEL or INFO
    """
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    log_file = RUNTIME_CONFIG["log_file"]
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, (level or RUNTIME_CONFIG["log_level"] or "INFO").upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def canonical_json(payload: Dict[str, Any]) -> str:
    """Serialize a mapping with sorted keys and no incidental whitespace."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(payload: Dict[str, Any]) -> str:
    """
    Hash a configuration mapping.

    Args:
        payload: JSON-serializable configuration

    Returns:
        Hex digest of xxhash64 over the canonical JSON form
    """
    return xxhash.xxh64(canonical_json(payload).encode("utf-8")).hexdigest()


def write_atomic(path: Path, content: str) -> None:
    """
    Write text to path through a temporary sibling file and an atomic rename.

    Args:
        path: Destination file
        content: Text to write

    Raises:
        OSError: If the file cannot be written; the temporary file is removed
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(content)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise
    logger.info(f"Wrote {len(content)} bytes to {path}")
