"""Image and contour writers for head fields, error maps and attention maps.

PGM output is binary 16-bit ("P5", maxval 65535, big-endian) with the linear
mapping value / vmax in [0, 1] -> [0, 65535], clipped at both ends.
"""

import csv
import logging
from pathlib import Path
from typing import Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

PGM_MAXVAL = 65535
CONTOUR_LEVELS = (0.9, 0.92, 0.94, 0.96, 0.98)

PathLike = Union[str, Path]


def _as_2d(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    while image.ndim > 2 and image.shape[0] == 1:
        image = image[0]
    if image.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {image.shape}")
    return image


def to_uint16(image: np.ndarray, vmax: float = 1.0) -> np.ndarray:
    """Map [0, vmax] linearly onto [0, 65535]."""
    if vmax <= 0:
        raise ValueError(f"vmax must be positive, got {vmax}")
    scaled = np.clip(_as_2d(image) / vmax, 0.0, 1.0)
    return np.rint(scaled * PGM_MAXVAL).astype(np.uint16)


def write_pgm(path: PathLike, image: np.ndarray, vmax: float = 1.0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = to_uint16(image, vmax)
    height, width = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n{PGM_MAXVAL}\n".encode("ascii"))
        f.write(pixels.astype(">u2").tobytes())
    return path


def read_pgm(path: PathLike) -> np.ndarray:
    """Read a 16-bit binary PGM written by write_pgm; returns uint16 (H, W)."""
    payload = Path(path).read_bytes()
    tokens = []
    offset = 0
    # magic, width, height, maxval separated by single whitespace
    while len(tokens) < 4:
        end = offset
        while payload[end : end + 1] not in (b" ", b"\n", b"\t", b"\r"):
            end += 1
        tokens.append(payload[offset:end].decode("ascii"))
        offset = end + 1
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != "P5" or maxval != PGM_MAXVAL:
        raise ValueError(f"not a 16-bit binary PGM: {magic} maxval {maxval}")
    data = np.frombuffer(payload, dtype=">u2", count=width * height, offset=offset)
    return data.reshape(height, width).astype(np.uint16)


def write_png(path: PathLike, image: np.ndarray, vmax: float = 1.0, cmap: str = "viridis") -> Path:
    """Colour-mapped PNG through matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt.imsave(path, _as_2d(image), cmap=cmap, vmin=0.0, vmax=vmax)
    return path


def write_image(path: PathLike, image: np.ndarray, vmax: float = 1.0, png: bool = False) -> list[Path]:
    """Write <path>.pgm, plus <path>.png when png is set."""
    path = Path(path)
    written = [write_pgm(path.with_suffix(".pgm"), image, vmax)]
    if png:
        written.append(write_png(path.with_suffix(".png"), image, vmax))
    return written


def contour_lines(field: np.ndarray, levels: Sequence[float] = CONTOUR_LEVELS) -> dict[float, list[np.ndarray]]:
    """Iso-lines per level as (n, 2) arrays of (x = column, y = row) points."""
    import contourpy

    z = _as_2d(field)
    generator = contourpy.contour_generator(z=z, line_type=contourpy.LineType.Separate)
    return {float(level): list(generator.lines(level)) for level in levels}


def write_contours_csv(
    path: PathLike, field: np.ndarray, levels: Sequence[float] = CONTOUR_LEVELS
) -> Path:
    """Write iso-lines as CSV rows (level, path, x, y); path numbers restart per level."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(("level", "path", "x", "y"))
        for level, lines in contour_lines(field, levels).items():
            for number, line in enumerate(lines):
                for x, y in line:
                    writer.writerow([level, number, repr(float(x)), repr(float(y))])
    return path
