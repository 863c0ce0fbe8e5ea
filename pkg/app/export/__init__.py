"""Image and contour export."""

from app.export.images import (
    CONTOUR_LEVELS,
    contour_lines,
    read_pgm,
    write_contours_csv,
    write_image,
    write_pgm,
    write_png,
)

__all__ = [
    "CONTOUR_LEVELS",
    "contour_lines",
    "read_pgm",
    "write_contours_csv",
    "write_image",
    "write_pgm",
    "write_png",
]
