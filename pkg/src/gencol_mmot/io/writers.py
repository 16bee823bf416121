"""Deterministic writers for plans, clouds, rasters and run diagnostics.

Floats are written as ``{:.16e}`` (17 significant digits), which reads back
bit-identically.
"""

import csv
from collections.abc import Iterable
from pathlib import Path

import numpy as np
import orjson

from gencol_mmot.engine import ProgressRecord
from gencol_mmot.extract import WeightedPointCloud
from gencol_mmot.measures import DualPotentials, SparsePlan
from gencol_mmot.types import RunRecord

PGM_MAX = 65535


def fmt(x: float) -> str:
    return f"{x:.16e}"


def _writer(f):
    return csv.writer(f, delimiter=",", lineterminator="\n")


def write_plan(plan: SparsePlan, path: str | Path) -> Path:
    """Rows ``i1,...,iN,mass`` in lexicographic configuration order."""
    path = Path(path)
    with path.open("w", newline="") as f:
        w = _writer(f)
        w.writerow([f"i{k + 1}" for k in range(plan.n_marginals)] + ["mass"])
        for r, mass in sorted(plan.entries.items()):
            w.writerow([*r, fmt(mass)])
    return path


def write_cloud(cloud: WeightedPointCloud, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        w = _writer(f)
        w.writerow([f"x{k + 1}" for k in range(cloud.dim)] + ["mass"])
        for p, m in zip(cloud.points.tolist(), cloud.masses.tolist()):
            w.writerow([fmt(v) for v in p] + [fmt(m)])
    return path


def grid_to_image(grid: np.ndarray) -> np.ndarray:
    """Axis-indexed raster to image orientation (rows top to bottom)."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim == 1:
        return grid.reshape(1, -1)
    if grid.ndim == 2:
        return grid.T[::-1]
    raise ValueError(f"only 1-D and 2-D grids can be written as images, got {grid.ndim}-D")


def write_grid(grid: np.ndarray, path: str | Path) -> tuple[Path, Path]:
    """16-bit binary PGM scaled so the largest cell is 65535.

    The sidecar ``<name>.scale.txt`` holds the mass represented by 65535.
    """
    path = Path(path)
    image = grid_to_image(grid)
    peak = float(image.max()) if image.size else 0.0
    if np.any(image < 0):
        raise ValueError("grid values must be nonnegative")
    scaled = np.zeros(image.shape) if peak == 0 else image / peak * PGM_MAX
    pixels = np.rint(scaled).astype(">u2")
    height, width = image.shape
    with path.open("wb") as f:
        f.write(f"P5\n{width} {height}\n{PGM_MAX}\n".encode("ascii"))
        f.write(pixels.tobytes())
    scale_path = path.with_name(path.stem + ".scale.txt")
    scale_path.write_text(f"pixel_max={PGM_MAX}\nmass_at_pixel_max={fmt(peak)}\n")
    return path, scale_path


def write_mask(mask: np.ndarray, path: str | Path) -> Path:
    """Boolean raster as an 8-bit PGM (0 or 255)."""
    path = Path(path)
    image = grid_to_image(np.asarray(mask, dtype=np.float64))
    height, width = image.shape
    with path.open("wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(np.where(image > 0, 255, 0).astype(np.uint8).tobytes())
    return path


def write_potentials(potentials: DualPotentials, path: str | Path) -> Path:
    """Rows ``k,index,value`` with k counting marginals from 1."""
    path = Path(path)
    with path.open("w", newline="") as f:
        w = _writer(f)
        w.writerow(["k", "index", "value"])
        for k, u in enumerate(potentials.u, start=1):
            for i, v in enumerate(np.asarray(u).tolist()):
                w.writerow([k, i, fmt(v)])
    return path


def write_history(history: Iterable[tuple[int, float]], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as f:
        w = _writer(f)
        w.writerow(["iteration", "objective"])
        for it, obj in history:
            w.writerow([it, fmt(obj)])
    return path


class ProgressWriter:
    """Streams engine progress records to CSV; use as the engine's ``on_solve`` hook."""

    FIELDS = ["iteration", "omega_size", "support_size", "objective", "accepted"]

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._file = self.path.open("w", newline="")
        self._csv = _writer(self._file)
        self._csv.writerow(self.FIELDS)

    def __call__(self, record: ProgressRecord) -> None:
        self._csv.writerow(
            [record.iteration, record.omega_size, record.support_size, fmt(record.objective), record.accepted]
        )

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "ProgressWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_run_record(record: RunRecord, path: str | Path) -> Path:
    path = Path(path)
    payload = orjson.dumps(
        record.model_dump(mode="json"),
        option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY,
    )
    path.write_bytes(payload + b"\n")
    return path
