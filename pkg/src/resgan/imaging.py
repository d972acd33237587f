"""Image-grid artifacts: binary portable graymap/pixmap tiling.

Grids pack uniform tiles row-major with one-pixel white separators and no
outer border, so an r x c grid of HxW tiles measures (r*H + r - 1) by
(c*W + c - 1). Pixels quantize by round-half-up: byte = floor(value*255 + 0.5).
The reader inverts the writer exactly, which is what makes grid files
verifiable at the byte level.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, FormatError, IoError, ShapeError

__all__ = ["quantize", "write_image_grid", "write_pnm", "read_pnm", "grid_from_images"]


def quantize(values):
    """Map [0,1] floats to bytes, round-half-up."""
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def grid_from_images(images, rows, cols, labels=None):
    """Assemble (K,C,H,W) tiles into one (H',W',C) byte canvas.

    With labels, tiles are regrouped so row r holds examples of class r
    (classes beyond `rows` are dropped, rows pad with blank tiles).
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4:
        raise ShapeError(f"expected (K,C,H,W) tiles, got {images.shape}")
    k, c, h, w = images.shape
    if c not in (1, 3):
        raise ConfigError(f"grids support 1- or 3-channel tiles, got {c}")
    if rows < 1 or cols < 1:
        raise ConfigError("grid needs at least one row and one column")

    if labels is not None:
        classes = np.argmax(np.asarray(labels), axis=1)
        picked = []
        for r in range(rows):
            members = np.nonzero(classes == r)[0][:cols]
            picked.append(members)
    else:
        picked = [np.arange(r * cols, min((r + 1) * cols, k)) for r in range(rows)]

    height = rows * h + rows - 1
    width = cols * w + cols - 1
    canvas = np.full((height, width, c), 255, dtype=np.uint8)
    for r in range(rows):
        for slot, idx in enumerate(picked[r]):
            tile = quantize(images[idx]).transpose(1, 2, 0)
            top, left = r * (h + 1), slot * (w + 1)
            canvas[top : top + h, left : left + w] = tile
    return canvas


def write_pnm(canvas, path):
    """Write an (H,W,1) or (H,W,3) byte canvas as binary PGM/PPM."""
    canvas = np.asarray(canvas, dtype=np.uint8)
    if canvas.ndim == 2:
        canvas = canvas[:, :, None]
    if canvas.ndim != 3 or canvas.shape[2] not in (1, 3):
        raise ShapeError(f"canvas must be (H,W,1|3), got {canvas.shape}")
    magic = b"P5" if canvas.shape[2] == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, canvas.shape[1], canvas.shape[0])
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(canvas.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write image to {path}: {exc}") from exc


def read_pnm(path):
    """Parse a binary PGM/PPM back to an (H,W,C) uint8 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    magic, width, height, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"not a binary graymap/pixmap: magic {magic!r}")
    if maxval != 255:
        raise FormatError(f"only 8-bit files supported, maxval {maxval}")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    body = raw[pos : pos + need]
    if len(body) != need:
        raise FormatError(f"truncated pixel data: want {need} bytes, have {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)


def write_image_grid(images, rows, cols, path, labels=None):
    """Tile images into a separator-lined grid file; see grid_from_images."""
    write_pnm(grid_from_images(images, rows, cols, labels), path)
