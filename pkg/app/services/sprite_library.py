"""
Bundled lost-cargo sprite set.

The bundled sprites are drawn procedurally (deterministic, no binary assets);
extra RGBA PNG cut-outs can be loaded from a directory. A file ``<name>.png`` may
carry its physical size in the name as ``<name>_<width_cm>x<height_cm>.png``;
otherwise 0.5 m x 0.4 m is assumed.
"""

import re
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import cv2
import numpy as np

from app.core.exceptions import EmptySpriteError, SpriteNotFoundError
from app.core.logging import get_logger
from app.core.raster_io import read_rgba
from app.models.scene import Sprite

logger = get_logger(__name__)

NATIVE_WIDTH = 96

Color = Tuple[int, int, int]
Painter = Callable[[np.ndarray, Color], None]


def tighten(rgba: np.ndarray) -> np.ndarray:
    """Crop all-transparent border rows and columns."""
    alpha = rgba[:, :, 3]
    rows = np.flatnonzero(alpha.any(axis=1))
    cols = np.flatnonzero(alpha.any(axis=0))
    if rows.size == 0:
        raise EmptySpriteError("Sprite has no opaque pixel")
    return rgba[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1].copy()


def _shade(color: Color, factor: float) -> Color:
    return tuple(int(np.clip(c * factor, 0, 255)) for c in color)  # type: ignore[return-value]


def _paint_box(canvas: np.ndarray, color: Color) -> None:
    h, w = canvas.shape[:2]
    cv2.rectangle(canvas, (0, 0), (w - 1, h - 1), (*color, 255), -1)
    cv2.rectangle(canvas, (w // 2 - w // 12, 0), (w // 2 + w // 12, h - 1), (*_shade(color, 0.7), 255), -1)


def _paint_suitcase(canvas: np.ndarray, color: Color) -> None:
    h, w = canvas.shape[:2]
    top = h // 6
    cv2.rectangle(canvas, (w // 3, 0), (2 * w // 3, top), (*_shade(color, 0.5), 255), 3)
    cv2.rectangle(canvas, (0, top), (w - 1, h - 1), (*color, 255), -1)
    cv2.line(canvas, (0, (top + h) // 2), (w - 1, (top + h) // 2), (*_shade(color, 0.6), 255), 2)


def _paint_tire(canvas: np.ndarray, color: Color) -> None:
    h, w = canvas.shape[:2]
    center, axes = (w // 2, h // 2), (w // 2 - 1, h // 2 - 1)
    cv2.ellipse(canvas, center, axes, 0, 0, 360, (*color, 255), -1)
    cv2.ellipse(canvas, center, (axes[0] // 2, axes[1] // 2), 0, 0, 360, (*_shade(color, 1.8), 255), -1)


def _paint_stem(canvas: np.ndarray, color: Color) -> None:
    h, w = canvas.shape[:2]
    cv2.rectangle(canvas, (h // 4, 0), (w - 1, h - 1), (*color, 255), -1)
    cv2.ellipse(canvas, (h // 4, h // 2), (h // 4, h // 2 - 1), 0, 0, 360, (*_shade(color, 1.4), 255), -1)


def _paint_bag(canvas: np.ndarray, color: Color) -> None:
    h, w = canvas.shape[:2]
    cv2.ellipse(canvas, (w // 2, h // 2 + h // 10), (w // 2 - 1, h // 2 - h // 10 - 1), 0, 0, 360, (*color, 255), -1)
    cv2.ellipse(canvas, (w // 2, h // 6), (w // 8, h // 6), 0, 0, 360, (*_shade(color, 0.8), 255), -1)


def _paint_bucket(canvas: np.ndarray, color: Color) -> None:
    h, w = canvas.shape[:2]
    pts = np.array([[0, 0], [w - 1, 0], [w - 1 - w // 6, h - 1], [w // 6, h - 1]], dtype=np.int32)
    cv2.fillPoly(canvas, [pts], (*color, 255))
    cv2.line(canvas, (0, h // 8), (w - 1, h // 8), (*_shade(color, 0.6), 255), 2)


def _paint_pallet(canvas: np.ndarray, color: Color) -> None:
    h, w = canvas.shape[:2]
    slats = 5
    for i in range(slats):
        x0 = i * w // slats
        x1 = x0 + max(1, (w // slats) * 2 // 3)
        cv2.rectangle(canvas, (x0, 0), (x1, h - 1), (*color, 255), -1)
    cv2.rectangle(canvas, (0, 0), (w - 1, h // 5), (*_shade(color, 0.85), 255), -1)
    cv2.rectangle(canvas, (0, h - 1 - h // 5), (w - 1, h - 1), (*_shade(color, 0.85), 255), -1)


def _paint_cone(canvas: np.ndarray, color: Color) -> None:
    h, w = canvas.shape[:2]
    pts = np.array([[w // 2, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.int32)
    cv2.fillPoly(canvas, [pts], (*color, 255))
    cv2.line(canvas, (w // 3, 2 * h // 3), (2 * w // 3, 2 * h // 3), (240, 240, 240, 255), max(1, h // 10))


def _paint_canister(canvas: np.ndarray, color: Color) -> None:
    h, w = canvas.shape[:2]
    cv2.rectangle(canvas, (0, h // 5), (w - 1, h - 1), (*color, 255), -1)
    cv2.rectangle(canvas, (w // 5, 0), (w // 2, h // 5), (*color, 255), -1)
    cv2.rectangle(canvas, (2 * w // 3, 0), (w - 1 - w // 12, h // 6), (*_shade(color, 0.5), 255), -1)


def _paint_sack(canvas: np.ndarray, color: Color) -> None:
    h, w = canvas.shape[:2]
    cv2.ellipse(canvas, (w // 2, h // 2), (w // 2 - 1, h // 2 - 1), 0, 0, 360, (*color, 255), -1)
    cv2.ellipse(canvas, (w // 2, h // 2), (w // 3, h // 4), 0, 200, 340, (*_shade(color, 0.7), 255), 2)


PAINTERS: Dict[str, Painter] = {
    "box": _paint_box,
    "suitcase": _paint_suitcase,
    "tire": _paint_tire,
    "stem": _paint_stem,
    "bag": _paint_bag,
    "bucket": _paint_bucket,
    "pallet": _paint_pallet,
    "cone": _paint_cone,
    "canister": _paint_canister,
    "sack": _paint_sack,
}

# (kind, width m, height m, RGB)
BUNDLED: List[Tuple[str, float, float, Color]] = [
    ("box", 0.50, 0.40, (168, 124, 74)),
    ("box", 0.80, 0.50, (190, 150, 96)),
    ("box", 0.35, 0.30, (140, 100, 60)),
    ("box", 0.60, 0.60, (225, 225, 215)),
    ("suitcase", 0.50, 0.70, (30, 30, 36)),
    ("suitcase", 0.45, 0.60, (150, 20, 30)),
    ("suitcase", 0.40, 0.55, (40, 70, 160)),
    ("tire", 0.70, 0.25, (25, 25, 25)),
    ("tire", 0.60, 0.22, (35, 33, 30)),
    ("tire", 0.90, 0.35, (20, 20, 22)),
    ("stem", 1.00, 0.30, (110, 80, 50)),
    ("stem", 0.80, 0.25, (95, 70, 45)),
    ("stem", 0.60, 0.20, (125, 95, 60)),
    ("bag", 0.45, 0.40, (230, 230, 235)),
    ("bag", 0.40, 0.35, (20, 120, 60)),
    ("bag", 0.55, 0.45, (210, 180, 40)),
    ("bucket", 0.35, 0.40, (230, 120, 20)),
    ("bucket", 0.30, 0.35, (20, 90, 200)),
    ("pallet", 1.00, 0.15, (170, 140, 100)),
    ("pallet", 0.80, 0.15, (150, 120, 80)),
    ("cone", 0.35, 0.60, (250, 90, 20)),
    ("cone", 0.30, 0.50, (240, 70, 30)),
    ("canister", 0.35, 0.45, (200, 30, 30)),
    ("canister", 0.30, 0.40, (40, 140, 40)),
    ("sack", 0.60, 0.30, (200, 190, 160)),
    ("sack", 0.70, 0.35, (180, 170, 140)),
    ("box", 0.45, 0.25, (60, 60, 60)),
    ("tire", 0.50, 0.50, (30, 30, 30)),
    ("suitcase", 0.70, 0.45, (200, 200, 60)),
    ("bag", 0.30, 0.25, (90, 40, 120)),
    ("stem", 0.90, 0.40, (80, 60, 40)),
    ("bucket", 0.40, 0.30, (240, 240, 240)),
]


def draw_sprite(kind: str, width_m: float, height_m: float, color: Color) -> np.ndarray:
    """Rasterize one bundled sprite at native resolution."""
    width = NATIVE_WIDTH
    height = max(4, int(round(NATIVE_WIDTH * height_m / width_m)))
    canvas = np.zeros((height, width, 4), dtype=np.uint8)
    PAINTERS[kind](canvas, color)
    return tighten(canvas)


_SIZE_IN_NAME = re.compile(r"_(\d+)x(\d+)$")


class SpriteLibrary:
    """Sprite lookup by id; bundled sprites first, directory sprites after."""

    def __init__(self, sprite_dir: Optional[Path] = None):
        self._sprites: Dict[str, Sprite] = {}
        for index, (kind, width_m, height_m, color) in enumerate(BUNDLED):
            sprite_id = f"s{index:02d}_{kind}"
            self._sprites[sprite_id] = Sprite(
                sprite_id=sprite_id,
                rgba=draw_sprite(kind, width_m, height_m, color),
                nominal_width=width_m,
                nominal_height=height_m,
            )
        if sprite_dir is not None:
            self._load_directory(Path(sprite_dir))
        logger.debug("Sprite library ready", sprites=len(self._sprites))

    def _load_directory(self, sprite_dir: Path) -> None:
        for path in sorted(sprite_dir.glob("*.png")):
            match = _SIZE_IN_NAME.search(path.stem)
            width_m, height_m = (
                (int(match.group(1)) / 100, int(match.group(2)) / 100) if match else (0.5, 0.4)
            )
            sprite_id = f"x_{path.stem}"
            try:
                rgba = tighten(read_rgba(path))
            except EmptySpriteError:
                logger.warning("Skipping empty sprite", path=str(path))
                continue
            self._sprites[sprite_id] = Sprite(
                sprite_id=sprite_id, rgba=rgba, nominal_width=width_m, nominal_height=height_m
            )

    def __len__(self) -> int:
        return len(self._sprites)

    def ids(self) -> List[str]:
        """Sprite ids in library order."""
        return list(self._sprites)

    def get(self, sprite_id: str) -> Sprite:
        try:
            return self._sprites[sprite_id]
        except KeyError:
            raise SpriteNotFoundError(
                f"Unknown sprite: {sprite_id}", {"sprite_id": sprite_id}
            ) from None


@lru_cache(maxsize=4)
def get_sprite_library(sprite_dir: Optional[Path] = None) -> SpriteLibrary:
    """Shared library per sprite directory (one per worker process)."""
    return SpriteLibrary(sprite_dir)
