"""Small file helpers shared by the CLI stages.

Every output is written atomically: full content to a temp file in the
target directory, then rename. A crashed run never leaves a half-written
partition or report behind.
"""

from __future__ import annotations

import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

from .errors import DataError


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


@contextmanager
def atomic_writer(path):
    """Open a text handle that lands at ``path`` only if the block succeeds.

    For outputs too large to build in memory; same temp-file-plus-rename
    contract as :func:`atomic_write_text`.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_key_file(path, keys) -> None:
    """One pair key per line, in the given order."""
    atomic_write_text(path, "".join(f"{key}\n" for key in keys))


def read_key_file(path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read key file {path}: {exc}") from exc
    return [line.strip() for line in text.splitlines() if line.strip()]
