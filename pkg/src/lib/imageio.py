"""PPM frames and PGM masks/maps through Pillow."""

from pathlib import Path
from typing import BinaryIO

import numpy as np
from PIL import Image


def to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(values) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path: str | Path, frame: np.ndarray) -> None:
    """Save a 3×H×W frame with values in [0, 1]."""
    Image.fromarray(np.ascontiguousarray(to_uint8(frame).transpose(1, 2, 0))).save(path, format="PPM")


def read_ppm(source: str | Path | BinaryIO) -> np.ndarray:
    """Any image Pillow can open (a path or an open binary file) as a 3×H×W float frame."""
    with Image.open(source) as image:
        return np.asarray(image.convert("RGB"), dtype=np.float64).transpose(2, 0, 1) / 255.0


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    """Save an H×W uint8 array as 8-bit PGM."""
    Image.fromarray(np.asarray(gray, dtype=np.uint8)).save(path, format="PPM")


def read_pgm(path: str | Path) -> np.ndarray:
    with Image.open(path) as image:
        return np.asarray(image.convert("L"), dtype=np.uint8)


def write_mask(path: str | Path, mask: np.ndarray, threshold: float = 0.5) -> None:
    """Foreground (probability above `threshold`) is 255."""
    write_pgm(path, np.where(np.asarray(mask) > threshold, 255, 0).astype(np.uint8))


def normalize_map(values: np.ndarray) -> np.ndarray:
    """Min-max scale to 0..255; the maximum always maps to 255, so a constant map is all 255."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi <= lo:
        return np.full(values.shape, 255, dtype=np.uint8)
    return np.rint((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
