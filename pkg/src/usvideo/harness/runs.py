"""Run-directory bookkeeping: the lock file, ``run.json`` records and content digests."""

from __future__ import annotations

import hashlib
import json
import os
import platform
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from usvideo import __version__
from usvideo.errors import DataError

LOCK_NAME = ".lock"
RUN_RECORD = "run.json"


@contextmanager
def run_lock(directory):
    """Exclusive ownership of ``directory`` for one command at a time."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DataError(f"{directory} is locked by another run (remove {lock} if that run died)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield directory
    finally:
        lock.unlink(missing_ok=True)


def directory_digest(directory, exclude=(LOCK_NAME,)) -> str:
    """SHA-256 over relative paths and bytes of every file, in sorted order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    h = hashlib.sha256()
    for path in sorted(p for p in directory.rglob("*") if p.is_file() and p.name not in exclude):
        rel = path.relative_to(directory).as_posix().encode()
        h.update(len(rel).to_bytes(4, "little") + rel)
        data = path.read_bytes()
        h.update(len(data).to_bytes(8, "little") + data)
    return h.hexdigest()


def write_run_record(directory, command: str, config: dict, argv: list[str], status: str, **extra) -> Path:
    """Write ``run.json`` (the latest command) and ``<command>.run.json`` (kept per command)."""
    record = {
        "command": command,
        "status": status,
        "seed": config["seed"],
        "config": config,
        "argv": argv,
        "package_version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        **extra,
    }
    text = json.dumps(record, indent=1, sort_keys=True) + "\n"
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{command}.{RUN_RECORD}").write_text(text, encoding="utf-8")
    path = directory / RUN_RECORD
    path.write_text(text, encoding="utf-8")
    return path
