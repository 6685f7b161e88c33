"""
Raster file formats.

- Masks: 8-bit single-channel PNG holding only 0 and 255.
- Images: 8-bit RGB PNG.
- Energy maps (``.egy``): 16-byte header ``b"EGY1"``, u32 width, u32 height,
  u32 endian flag, then row-major float32.
- Logits (``.lgt``): 20-byte header ``b"LGT1"``, u32 width, u32 height,
  u32 endian flag, u32 channels, then channel-major float32 ``(K, H, W)``.

The endian flag is ``0x01020304`` written in the byte order of the payload;
files are always written little-endian, either order is accepted on read.
"""

import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import cv2
import numpy as np

from app.core.exceptions import (
    BadMagicError,
    DimensionMismatchError,
    FormatMismatchError,
    IoFailureError,
    TruncatedFileError,
)
from app.core.logging import log_file_operation

PathLike = Union[str, Path]

ENERGY_MAGIC = b"EGY1"
LOGITS_MAGIC = b"LGT1"
ENDIAN_FLAG = 0x01020304


def _ensure_parent(path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoFailureError(f"Cannot create directory {path.parent}: {e}", {"path": str(path)}) from e


def _check_shape(array: np.ndarray, expected: Optional[Tuple[int, ...]], path: Path) -> None:
    if expected is not None and tuple(array.shape) != tuple(expected):
        raise DimensionMismatchError(
            f"{path.name}: shape {array.shape} != expected {expected}",
            {"path": str(path), "shape": list(array.shape), "expected": list(expected)},
        )


def _write_png(path: Path, array: np.ndarray) -> None:
    _ensure_parent(path)
    ok, encoded = cv2.imencode(".png", array)
    if not ok:
        raise IoFailureError(f"PNG encoding failed for {path}", {"path": str(path)})
    try:
        path.write_bytes(encoded.tobytes())
    except OSError as e:
        raise IoFailureError(f"Cannot write {path}: {e}", {"path": str(path)}) from e
    log_file_operation("write", path, shape=list(array.shape))


def _read_png(path: Path, flags: int) -> np.ndarray:
    try:
        data = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    except OSError as e:
        raise IoFailureError(f"Cannot read {path}: {e}", {"path": str(path)}) from e
    array = cv2.imdecode(data, flags)
    if array is None:
        raise FormatMismatchError(f"{path.name} is not a decodable PNG", {"path": str(path)})
    log_file_operation("read", path, shape=list(array.shape))
    return array


def write_mask(path: PathLike, mask: np.ndarray) -> None:
    """Write a boolean mask as a {0, 255} PNG."""
    path = Path(path)
    if mask.ndim != 2:
        raise FormatMismatchError("mask must be 2-D", {"path": str(path), "shape": list(mask.shape)})
    _write_png(path, np.where(mask.astype(bool), 255, 0).astype(np.uint8))


def read_mask(path: PathLike, expected_shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """Read a {0, 255} PNG into a boolean mask; any other value is rejected."""
    path = Path(path)
    raw = _read_png(path, cv2.IMREAD_UNCHANGED)
    if raw.ndim != 2 or raw.dtype != np.uint8:
        raise FormatMismatchError(
            f"{path.name}: mask must be 8-bit single channel",
            {"path": str(path), "shape": list(raw.shape), "dtype": str(raw.dtype)},
        )
    illegal = (raw != 0) & (raw != 255)
    if illegal.any():
        values = np.unique(raw[illegal])[:5].tolist()
        raise FormatMismatchError(
            f"{path.name}: mask values must be 0 or 255", {"path": str(path), "values": values}
        )
    _check_shape(raw, expected_shape, path)
    return raw == 255


def write_image(path: PathLike, image: np.ndarray) -> None:
    """Write an RGB uint8 image."""
    path = Path(path)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise FormatMismatchError("image must be HxWx3 uint8", {"path": str(path)})
    _write_png(path, cv2.cvtColor(image, cv2.COLOR_RGB2BGR))


def read_image(path: PathLike, expected_shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """Read an RGB image."""
    path = Path(path)
    bgr = _read_png(path, cv2.IMREAD_COLOR)
    image = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
    if expected_shape is not None:
        _check_shape(image, (*expected_shape, 3), path)
    return image


def read_rgba(path: PathLike) -> np.ndarray:
    """Read an RGBA sprite PNG (opaque if the file has no alpha channel)."""
    path = Path(path)
    raw = _read_png(path, cv2.IMREAD_UNCHANGED)
    if raw.ndim == 2:
        raw = cv2.cvtColor(raw, cv2.COLOR_GRAY2BGRA)
    elif raw.shape[2] == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2BGRA)
    if raw.dtype != np.uint8:
        raise FormatMismatchError(f"{path.name}: sprites must be 8-bit", {"path": str(path)})
    return cv2.cvtColor(raw, cv2.COLOR_BGRA2RGBA)


def _read_header(path: Path, magic: bytes, fields: int) -> Tuple[Tuple[int, ...], str, bytes]:
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise IoFailureError(f"Cannot read {path}: {e}", {"path": str(path)}) from e

    header_size = 4 + 4 * fields
    if len(blob) < header_size:
        raise TruncatedFileError(
            f"{path.name}: header needs {header_size} bytes, got {len(blob)}",
            {"path": str(path), "size": len(blob)},
        )
    if blob[:4] != magic:
        raise BadMagicError(
            f"{path.name}: bad magic {blob[:4]!r}, expected {magic!r}",
            {"path": str(path), "magic": blob[:4].hex()},
        )

    (flag,) = struct.unpack_from("<I", blob, 12)
    if flag == ENDIAN_FLAG:
        order = "<"
    elif flag == struct.unpack(">I", struct.pack("<I", ENDIAN_FLAG))[0]:
        order = ">"
    else:
        raise FormatMismatchError(f"{path.name}: bad endian flag {flag:#x}", {"path": str(path)})

    values = struct.unpack_from(f"{order}{fields}I", blob, 4)
    return values, order, blob[header_size:]


def _payload(path: Path, payload: bytes, order: str, shape: Tuple[int, ...]) -> np.ndarray:
    count = int(np.prod(shape))
    expected = count * 4
    if len(payload) < expected:
        raise TruncatedFileError(
            f"{path.name}: payload has {len(payload)} bytes, expected {expected}",
            {"path": str(path), "size": len(payload), "expected": expected},
        )
    if len(payload) > expected:
        raise FormatMismatchError(
            f"{path.name}: {len(payload) - expected} trailing bytes", {"path": str(path)}
        )
    array = np.frombuffer(payload, dtype=f"{order}f4", count=count).reshape(shape)
    return array.astype(np.float32)


def write_energy(path: PathLike, energy: np.ndarray) -> None:
    """Write an energy map in the EGY1 format."""
    path = Path(path)
    if energy.ndim != 2:
        raise FormatMismatchError("energy map must be 2-D", {"path": str(path)})
    height, width = energy.shape
    header = ENERGY_MAGIC + struct.pack("<III", width, height, ENDIAN_FLAG)
    _ensure_parent(path)
    try:
        path.write_bytes(header + np.ascontiguousarray(energy, dtype="<f4").tobytes())
    except OSError as e:
        raise IoFailureError(f"Cannot write {path}: {e}", {"path": str(path)}) from e
    log_file_operation("write", path, shape=[height, width])


def read_energy(path: PathLike, expected_shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """Read an EGY1 energy map."""
    path = Path(path)
    (width, height, _flag), order, payload = _read_header(path, ENERGY_MAGIC, 3)
    energy = _payload(path, payload, order, (height, width))
    _check_shape(energy, expected_shape, path)
    log_file_operation("read", path, shape=[height, width])
    return energy


def write_logits(path: PathLike, logits: np.ndarray) -> None:
    """Write ``(K, H, W)`` logits in the LGT1 format."""
    path = Path(path)
    if logits.ndim != 3:
        raise FormatMismatchError("logits must be (K, H, W)", {"path": str(path)})
    channels, height, width = logits.shape
    header = LOGITS_MAGIC + struct.pack("<IIII", width, height, ENDIAN_FLAG, channels)
    _ensure_parent(path)
    try:
        with path.open("wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(logits, dtype="<f4").tobytes())
    except OSError as e:
        raise IoFailureError(f"Cannot write {path}: {e}", {"path": str(path)}) from e
    log_file_operation("write", path, shape=[channels, height, width])


def read_logits(path: PathLike, expected_shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """Read LGT1 logits; ``expected_shape`` is the ``(H, W)`` raster size."""
    path = Path(path)
    (width, height, _flag, channels), order, payload = _read_header(path, LOGITS_MAGIC, 4)
    logits = _payload(path, payload, order, (channels, height, width))
    if expected_shape is not None:
        _check_shape(logits, (channels, *expected_shape), path)
    log_file_operation("read", path, shape=[channels, height, width])
    return logits
