"""
Line-oriented key-value files: scene meta, dataset manifest and stage sidecars.

- ``meta`` / sidecar files: one ``key=value`` per line (dotted keys for nested
  values), parsed with python-dotenv like the pipeline config.
- ``manifest.txt``: one record per line, ``key=value`` pairs separated by single
  spaces; values never contain whitespace. Line order is the dataset order.
"""

from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from app.core.config import flatten_keys, nest_keys
from app.core.exceptions import ConfigParseError, FormatMismatchError, IoFailureError
from app.core.logging import log_file_operation
from app.models.pipeline import ManifestEntry
from app.models.scene import SceneMeta

PathLike = Union[str, Path]

MANIFEST_NAME = "manifest.txt"


def write_keyvalue_file(path: PathLike, values: Dict[str, Any]) -> None:
    """Write a (possibly nested) mapping as ``key=value`` lines."""
    path = Path(path)
    flat = flatten_keys(values)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{k}={v}\n" for k, v in flat.items()), encoding="utf-8")
    except OSError as e:
        raise IoFailureError(f"Cannot write {path}: {e}", {"path": str(path)}) from e
    log_file_operation("write", path, keys=len(flat))


def read_keyvalue_file(path: PathLike) -> Dict[str, Any]:
    """Read ``key=value`` lines back into a nested mapping of strings."""
    path = Path(path)
    if not path.is_file():
        raise IoFailureError(f"File not found: {path}", {"path": str(path)})
    try:
        flat = dotenv_values(path, interpolate=False)
    except (OSError, UnicodeDecodeError) as e:
        raise IoFailureError(f"Cannot read {path}: {e}", {"path": str(path)}) from e
    log_file_operation("read", path, keys=len(flat))
    return nest_keys(dict(flat))


def write_model(path: PathLike, model: BaseModel) -> None:
    """Persist a pydantic model as a key-value file."""
    write_keyvalue_file(path, model.model_dump(mode="json"))


def write_scene_meta(path: PathLike, meta: SceneMeta) -> None:
    write_model(path, meta)


def read_scene_meta(path: PathLike) -> SceneMeta:
    try:
        return SceneMeta.model_validate(read_keyvalue_file(path))
    except (ValidationError, ConfigParseError) as e:
        raise FormatMismatchError(f"Invalid scene meta {path}: {e}", {"path": str(path)}) from e


def format_manifest_line(entry: ManifestEntry) -> str:
    fields = entry.model_dump(mode="json", exclude_none=True)
    for key, value in fields.items():
        if any(ch.isspace() for ch in str(value)):
            raise FormatMismatchError(f"Manifest value for {key} contains whitespace")
    return " ".join(f"{key}={value}" for key, value in fields.items())


def parse_manifest_line(line: str, lineno: int = 0) -> ManifestEntry:
    fields: Dict[str, str] = {}
    for token in line.split():
        key, sep, value = token.partition("=")
        if not sep or not key:
            raise FormatMismatchError(
                f"Manifest line {lineno}: malformed token {token!r}", {"line": lineno}
            )
        fields[key] = value
    try:
        return ManifestEntry.model_validate(fields)
    except ValidationError as e:
        raise FormatMismatchError(
            f"Manifest line {lineno}: {e.errors()[0]['msg']}", {"line": lineno}
        ) from e


def write_manifest(root: PathLike, entries: Iterable[ManifestEntry]) -> Path:
    """Write ``manifest.txt`` under ``root`` in the given order."""
    path = Path(root) / MANIFEST_NAME
    lines = [format_manifest_line(entry) for entry in entries]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    except OSError as e:
        raise IoFailureError(f"Cannot write manifest {path}: {e}", {"path": str(path)}) from e
    log_file_operation("write", path, records=len(lines))
    return path


def read_manifest(root: PathLike, kind: Optional[str] = None) -> List[ManifestEntry]:
    """Read the manifest of a dataset; optionally keep one ``kind`` only."""
    path = Path(root) / MANIFEST_NAME
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailureError(f"Cannot read manifest {path}: {e}", {"path": str(path)}) from e

    entries = [
        parse_manifest_line(line, lineno)
        for lineno, line in enumerate(text.splitlines(), start=1)
        if line.strip()
    ]
    log_file_operation("read", path, records=len(entries))
    if kind is not None:
        entries = [e for e in entries if e.kind == kind]
    return entries
