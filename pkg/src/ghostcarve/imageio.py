"""Scene and frame file formats: PGM (P2/P5) and plain-text 0/1 grids."""

from __future__ import annotations

import numpy as np

from .errors import SceneFormatError


def _pgm_tokens(data: bytes, path):
    """Header tokens of a PGM, skipping comments; yields (token, byte_offset)."""
    i = 0
    n = len(data)
    while i < n:
        c = data[i : i + 1]
        if c.isspace():
            i += 1
            continue
        if c == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace():
            i += 1
        yield data[start:i], start
    return


def read_pgm(path) -> np.ndarray:
    """Read P2/P5 grayscale as floats in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = _pgm_tokens(data, path)
    try:
        magic, off = next(tokens)
    except StopIteration:
        raise SceneFormatError("empty PGM file", path=path) from None
    if magic not in (b"P2", b"P5"):
        raise SceneFormatError(f"not a PGM file (magic {magic!r})", path=path, byte=off)
    header = []
    for _ in range(3):
        try:
            tok, off = next(tokens)
        except StopIteration:
            raise SceneFormatError("truncated PGM header", path=path, byte=len(data)) from None
        try:
            header.append(int(tok))
        except ValueError:
            raise SceneFormatError(
                f"non-numeric PGM header token {tok!r}", path=path, byte=off
            ) from None
    width, height, maxval = header
    if width < 1 or height < 1 or not (0 < maxval < 65536):
        raise SceneFormatError(
            f"bad PGM dimensions {width}x{height} maxval {maxval}", path=path
        )
    if magic == b"P2":
        vals = []
        for tok, off in tokens:
            try:
                vals.append(int(tok))
            except ValueError:
                raise SceneFormatError(
                    f"non-numeric P2 sample {tok!r}", path=path, byte=off
                ) from None
        if len(vals) != width * height:
            raise SceneFormatError(
                f"P2 raster has {len(vals)} samples, expected {width * height}", path=path
            )
        arr = np.asarray(vals, dtype=float)
    else:
        if maxval > 255:
            raise SceneFormatError("16-bit P5 rasters are not supported", path=path)
        # Raster starts one whitespace byte after the maxval token.
        raster_at = data.index(str(maxval).encode(), 2)
        raster_at += len(str(maxval)) + 1
        raster = data[raster_at : raster_at + width * height]
        if len(raster) != width * height:
            raise SceneFormatError(
                f"P5 raster has {len(raster)} bytes, expected {width * height}",
                path=path,
                byte=raster_at,
            )
        arr = np.frombuffer(raster, dtype=np.uint8).astype(float)
    if arr.max(initial=0) > maxval:
        raise SceneFormatError("sample exceeds declared maxval", path=path)
    return (arr / maxval).reshape(height, width)


def write_pgm(path, image: np.ndarray) -> None:
    """Write a [0, 1] float image as binary 8-bit PGM (P5)."""
    img = np.asarray(image, dtype=float)
    raster = np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    with open(path, "wb") as fh:
        fh.write(header + raster.tobytes())


def read_text_grid(path) -> np.ndarray:
    """Read a plain-text 0/1 grid; digits may be spaced or contiguous."""
    rows = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            tokens = stripped.split() if " " in stripped else list(stripped)
            row = []
            for tok in tokens:
                if tok not in ("0", "1"):
                    raise SceneFormatError(
                        f"grid token {tok!r} is not 0/1", path=path, line=lineno
                    )
                row.append(int(tok))
            if rows and len(row) != len(rows[0]):
                raise SceneFormatError(
                    f"row width {len(row)} differs from first row {len(rows[0])}",
                    path=path,
                    line=lineno,
                )
            rows.append(row)
    if not rows:
        raise SceneFormatError("grid file has no rows", path=path)
    return np.asarray(rows, dtype=float)


def write_text_grid(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    with open(path, "w") as fh:
        for row in img:
            fh.write("".join("1" if v >= 0.5 else "0" for v in row) + "\n")


def read_image(path) -> np.ndarray:
    """Dispatch on content: PGM magic or text grid. Floats in [0, 1]."""
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head in (b"P2", b"P5"):
        return read_pgm(path)
    return read_text_grid(path)
