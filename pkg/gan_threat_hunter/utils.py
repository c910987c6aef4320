"""
Utility functions: matrix validation and atomic artifact writes.
"""
import contextlib
import json
import os
import shutil
import tempfile
from pathlib import Path
from typing import Iterator, List, Tuple, Union

import numpy as np

PathLike = Union[str, Path]


def validate_matrix(matrix: np.ndarray, width: int) -> bool:
    """
    Validate that a feature matrix is 2-D, ``width`` columns wide and finite.

    Args:
        matrix: NumPy array to check
        width: Expected column count

    Returns:
        True if valid, False otherwise
    """
    if not isinstance(matrix, np.ndarray):
        return False
    if matrix.ndim != 2 or matrix.shape[1] != width:
        return False
    if not np.issubdtype(matrix.dtype, np.number):
        return False
    return bool(np.isfinite(matrix).all())


ARTIFACT_MODE = 0o644
DIRECTORY_MODE = 0o755


def _write_temp(target: Path, payload: bytes) -> str:
    """Write ``payload`` to a hidden sibling of ``target`` and return its path."""
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        # mkstemp creates 0600 files
        os.chmod(tmp, ARTIFACT_MODE)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise
    return tmp


def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    """Write to a temporary sibling, then rename over ``path``."""
    target = Path(path)
    tmp = _write_temp(target, payload)
    try:
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class StagedWrites:
    """
    Files that belong to one result, held as temporary siblings until commit.

    Nothing replaces a target until every payload has been written, so a
    failure part-way leaves all previous files in place.
    """

    def __init__(self):
        self._pending: List[Tuple[str, Path]] = []

    def write_bytes(self, path: PathLike, payload: bytes) -> Path:
        target = Path(path)
        self._pending.append((_write_temp(target, payload), target))
        return target

    def write_text(self, path: PathLike, text: str) -> Path:
        return self.write_bytes(path, text.encode("utf-8"))

    def write_json(self, path: PathLike, payload: dict) -> Path:
        return self.write_text(path, json_text(payload))

    @property
    def targets(self) -> List[Path]:
        return [target for _, target in self._pending]

    def commit(self) -> None:
        for tmp, target in self._pending:
            os.replace(tmp, target)
        self._pending = []

    def discard(self) -> None:
        for tmp, _ in self._pending:
            with contextlib.suppress(FileNotFoundError):
                os.unlink(tmp)
        self._pending = []


@contextlib.contextmanager
def staged_writes() -> Iterator[StagedWrites]:
    """Yield a StagedWrites that commits on clean exit and discards on error."""
    stage = StagedWrites()
    try:
        yield stage
    except BaseException:
        stage.discard()
        raise
    stage.commit()


def json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2) + "\n"


def write_json(path: PathLike, payload: dict) -> None:
    atomic_write_text(path, json_text(payload))


def read_json(path: PathLike) -> dict:
    with open(path, "r", encoding="utf8") as fh:
        return json.load(fh)


@contextlib.contextmanager
def atomic_directory(path: PathLike) -> Iterator[Path]:
    """
    Yield a temporary directory that replaces ``path`` on clean exit.

    On error the temporary directory is removed and ``path`` is untouched.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    # mkdtemp creates 0700 directories
    os.chmod(staging, DIRECTORY_MODE)
    if target.exists():
        # move the old tree aside first; a rename cannot replace a non-empty directory
        retired = Path(tempfile.mkdtemp(prefix=f".{target.name}.old.", dir=target.parent))
        os.replace(target, retired / target.name)
        os.replace(staging, target)
        shutil.rmtree(retired, ignore_errors=True)
    else:
        os.replace(staging, target)
