"""Versioned text files.

Every file starts with a one-line format tag ``budro-<kind> v<version>``;
the rest is JSON with sorted keys.  Python's float repr round-trips
exactly, so numbers survive a save/load cycle bit for bit.
"""
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataError

FORMAT_VERSION = 1


def format_tag(kind, version=FORMAT_VERSION):
    return f"budro-{kind} v{version}"


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    return value


def dumps(kind, payload):
    body = json.dumps(_plain(payload), sort_keys=True, indent=1, allow_nan=False)
    return f"{format_tag(kind)}\n{body}\n"


def loads(kind, text, source="<string>"):
    head, _, body = text.partition("\n")
    if head.strip() != format_tag(kind):
        raise DataError(f"{source}: expected format tag {format_tag(kind)!r}, found {head.strip()!r}")
    try:
        return json.loads(body)
    except json.JSONDecodeError as err:
        raise DataError(f"{source}: malformed {kind} file ({err})") from None


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, kind, payload):
    write_atomic(path, dumps(kind, payload))


def load(path, kind):
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    return loads(kind, path.read_text(encoding="utf-8"), source=str(path))
