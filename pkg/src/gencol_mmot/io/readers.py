"""Readers for image datasets, point clouds and written plans.

Pixel (row i, column j) of an H×W image sits at ((j + ½)/W, (H − i − ½)/H),
so row 0 is the top of the unit square. Zero pixels are dropped from the
support and intensities are normalized to unit mass.
"""

import csv
import gzip
import math
import struct
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from gencol_mmot.errors import InputFormatError, MarginalValidationError
from gencol_mmot.extract import WeightedPointCloud
from gencol_mmot.measures import DualPotentials, Marginal, SparsePlan

IDX3_MAGIC = 0x00000803
IDX3_HEADER = 16
GZIP_MAGIC = b"\x1f\x8b"


def _read_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == GZIP_MAGIC:
        return gzip.decompress(raw)
    return raw


def pixel_coordinates(height: int, width: int) -> np.ndarray:
    """(H·W, 2) coordinates of every pixel in row-major order."""
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    x = (cols.ravel() + 0.5) / width
    y = (height - rows.ravel() - 0.5) / height
    return np.column_stack([x, y])


def image_to_marginal(image: np.ndarray, label: str | None = None, source: str = "<image>") -> Marginal:
    """Normalized measure on the nonzero pixels of a 2-D intensity array."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise InputFormatError(source, f"expected a 2-D image, got shape {image.shape}")
    if np.any(image < 0) or not np.all(np.isfinite(image)):
        raise InputFormatError(source, "pixel intensities must be finite and nonnegative")
    flat = image.ravel()
    nonzero = np.flatnonzero(flat > 0)
    if nonzero.size == 0:
        raise InputFormatError(source, "empty measure: every pixel is zero")
    points = pixel_coordinates(*image.shape)[nonzero]
    masses = flat[nonzero] / math.fsum(flat[nonzero].tolist())
    return Marginal.create(points, masses, label=label)


def read_idx_images(
    path: str | Path,
    count: int | None = None,
    indices: Sequence[int] | None = None,
) -> list[Marginal]:
    """Images of an IDX3 file (optionally gzipped) as unit-square marginals.

    ``indices`` picks specific images; otherwise the first ``count`` (or all)
    are read. Both are checked against the image count in the header.
    """
    path = Path(path)
    raw = _read_bytes(path)
    if len(raw) < IDX3_HEADER:
        raise InputFormatError(str(path), f"truncated header ({len(raw)} bytes)", "offset 0")
    magic, n_images, n_rows, n_cols = struct.unpack(">IIII", raw[:IDX3_HEADER])
    if magic != IDX3_MAGIC:
        raise InputFormatError(str(path), f"bad magic number 0x{magic:08x}, expected 0x{IDX3_MAGIC:08x}", "offset 0")
    pixels = n_rows * n_cols
    expected = IDX3_HEADER + n_images * pixels
    if len(raw) < expected:
        raise InputFormatError(
            str(path),
            f"truncated pixel data: header announces {n_images} images of {n_rows}x{n_cols} "
            f"({expected} bytes), file has {len(raw)}",
            f"offset {len(raw)}",
        )

    if indices is None:
        if count is not None and not 0 < count <= n_images:
            raise ValueError(f"count must be in [1, {n_images}], got {count}")
        indices = range(n_images if count is None else count)
    for i in indices:
        if not 0 <= i < n_images:
            raise ValueError(f"image index {i} out of range for {n_images} images")

    data = np.frombuffer(raw, dtype=np.uint8, count=n_images * pixels, offset=IDX3_HEADER)
    images = data.reshape(n_images, n_rows, n_cols)
    out = []
    for i in indices:
        try:
            out.append(image_to_marginal(images[i], label=f"{path.name}[{i}]", source=str(path)))
        except InputFormatError as exc:
            raise InputFormatError(str(path), f"image {i}: empty measure", f"offset {IDX3_HEADER + i * pixels}") from exc
    return out


def _pgm_tokens(raw: bytes, count: int, path: str) -> tuple[list[int], int]:
    """First ``count`` whitespace-separated header integers and the offset after them."""
    tokens: list[int] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(raw):
            raise InputFormatError(path, "truncated header", f"offset {pos}")
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace() and raw[pos : pos + 1] != b"#":
            pos += 1
        token = raw[start:pos]
        try:
            tokens.append(int(token))
        except ValueError:
            raise InputFormatError(path, f"expected an integer, got {token!r}", f"offset {start}") from None
    return tokens, pos


def read_pgm_array(path: str | Path) -> np.ndarray:
    """Pixel array of a P2 (ASCII) or P5 (binary, 8- or 16-bit) PGM file."""
    path = Path(path)
    raw = _read_bytes(path)
    magic = raw[:2]
    if magic not in (b"P2", b"P5"):
        raise InputFormatError(str(path), f"not a grayscale PGM (magic {magic!r})", "offset 0")
    (width, height, maxval), pos = _pgm_tokens(raw[2:], 3, str(path))
    pos += 2
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise InputFormatError(str(path), f"invalid header {width}x{height} maxval {maxval}", "offset 2")
    n = width * height

    if magic == b"P5":
        pos += 1  # single whitespace byte before the raster
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        if len(raw) < pos + n * dtype.itemsize:
            raise InputFormatError(
                str(path), f"truncated raster: need {n * dtype.itemsize} bytes", f"offset {len(raw)}"
            )
        pixels = np.frombuffer(raw, dtype=dtype, count=n, offset=pos).astype(np.int64)
    else:
        values, _ = _pgm_tokens(raw[pos:], n, str(path))
        pixels = np.asarray(values, dtype=np.int64)

    if np.any(pixels > maxval):
        raise InputFormatError(str(path), f"pixel value exceeds maxval {maxval}")
    return pixels.reshape(height, width)


def read_pgm(path: str | Path, label: str | None = None) -> Marginal:
    path = Path(path)
    return image_to_marginal(read_pgm_array(path), label=label or path.stem, source=str(path))


def _csv_rows(path: Path):
    """Yield (line number, floats) skipping blank lines and one optional header."""
    with path.open(newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                yield lineno, [float(cell) for cell in row]
            except ValueError:
                if lineno == 1:
                    continue
                raise InputFormatError(str(path), f"non-numeric field in {row}", f"line {lineno}") from None


def _read_weighted_rows(path: Path, min_cols: int, max_cols: int | None) -> tuple[np.ndarray, np.ndarray, list[int]]:
    values: list[list[float]] = []
    lines: list[int] = []
    width = None
    for lineno, row in _csv_rows(path):
        if width is None:
            width = len(row)
            if width < min_cols or (max_cols is not None and width > max_cols):
                raise InputFormatError(str(path), f"expected {min_cols}..{max_cols} columns, got {width}", f"line {lineno}")
        elif len(row) != width:
            raise InputFormatError(str(path), f"expected {width} columns, got {len(row)}", f"line {lineno}")
        if not all(math.isfinite(v) for v in row):
            raise InputFormatError(str(path), "non-finite value", f"line {lineno}")
        if not row[-1] > 0:
            raise InputFormatError(str(path), f"mass must be positive, got {row[-1]!r}", f"line {lineno}")
        values.append(row)
        lines.append(lineno)
    if not values:
        raise InputFormatError(str(path), "empty measure: no data rows")
    arr = np.asarray(values, dtype=np.float64)
    return arr[:, :-1], arr[:, -1], lines


def read_csv_cloud(path: str | Path, normalize: bool = False, label: str | None = None) -> Marginal:
    """Marginal from CSV rows ``x[,y[,z]],mass``.

    Without ``normalize`` the masses must already sum to one within 1e-6.
    """
    path = Path(path)
    points, masses, _ = _read_weighted_rows(path, 2, 4)
    if normalize:
        masses = masses / math.fsum(masses.tolist())
    try:
        return Marginal.create(points, masses, label=label or path.stem)
    except MarginalValidationError as exc:
        raise InputFormatError(str(path), str(exc)) from exc


def read_cloud(path: str | Path) -> WeightedPointCloud:
    """Inverse of ``write_cloud``; masses are taken as written."""
    points, masses, _ = _read_weighted_rows(Path(path), 2, None)
    return WeightedPointCloud(points, masses)


def read_plan(path: str | Path, shape: Sequence[int] | None = None) -> SparsePlan:
    """Inverse of ``write_plan``. Without ``shape`` the smallest enclosing grid is used."""
    path = Path(path)
    configs, masses, lines = _read_weighted_rows(path, 2, None)
    for row, lineno in zip(configs, lines):
        if np.any(row < 0) or np.any(row != np.floor(row)):
            raise InputFormatError(str(path), f"configuration indices must be nonnegative integers, got {row.tolist()}", f"line {lineno}")
    idx = configs.astype(np.int64)
    if shape is None:
        shape = tuple(int(s) for s in idx.max(axis=0) + 1)
    entries: dict[tuple[int, ...], float] = {}
    for r, mass, lineno in zip(map(tuple, idx.tolist()), masses.tolist(), lines):
        if r in entries:
            raise InputFormatError(str(path), f"duplicate configuration {r}", f"line {lineno}")
        entries[r] = mass
    return SparsePlan(entries, tuple(shape))


def read_potentials(path: str | Path) -> DualPotentials:
    """Inverse of ``write_potentials``: rows ``k,index,value`` with k from 1."""
    path = Path(path)
    by_marginal: dict[int, dict[int, float]] = {}
    for lineno, row in _csv_rows(path):
        if len(row) != 3:
            raise InputFormatError(str(path), f"expected 3 columns, got {len(row)}", f"line {lineno}")
        k, i, value = int(row[0]), int(row[1]), row[2]
        if k < 1 or i < 0 or k != row[0] or i != row[1]:
            raise InputFormatError(str(path), f"bad marginal/index pair ({row[0]}, {row[1]})", f"line {lineno}")
        by_marginal.setdefault(k, {})[i] = value
    if not by_marginal:
        raise InputFormatError(str(path), "no potentials found")
    if sorted(by_marginal) != list(range(1, len(by_marginal) + 1)):
        raise InputFormatError(str(path), f"marginal numbers {sorted(by_marginal)} are not 1..N")
    u = []
    for k in range(1, len(by_marginal) + 1):
        values = by_marginal[k]
        if sorted(values) != list(range(len(values))):
            raise InputFormatError(str(path), f"marginal {k} has non-contiguous indices")
        u.append(np.array([values[i] for i in range(len(values))]))
    return DualPotentials(tuple(u))
