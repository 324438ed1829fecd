"""Observation space: pixel grids, images, observations, image export."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .reports import format_float

CHANNELS = 3


@dataclass(frozen=True)
class ImageGrid:
    """W x H grid of pixel centers ((j+0.5)/W, (k+0.5)/H) inside (0,1)^2.

    Pixels are indexed row-major: pixel (row k, column j) sits at k*W + j.
    """

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid needs width, height >= 1")

    @property
    def m(self) -> int:
        """Number of pixels (observation degrees of freedom per channel)."""
        return self.width * self.height

    @property
    def n_coords(self) -> int:
        return CHANNELS * self.m

    @cached_property
    def pixel_centers(self) -> np.ndarray:
        xs = (np.arange(self.width) + 0.5) / self.width
        ys = (np.arange(self.height) + 0.5) / self.height
        gx, gy = np.meshgrid(xs, ys)          # row-major: rows over y
        out = np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)
        out.setflags(write=False)
        return out

    @property
    def grid_id(self) -> str:
        return f"{self.width}x{self.height}"


@dataclass(frozen=True)
class Image:
    """(M, 3) channel intensities with the Euclidean norm over all entries."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != CHANNELS:
            raise ValueError("image values must have shape (M, 3)")
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("image contains non-finite entries")
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values * self.values)))

    def flat(self) -> np.ndarray:
        """Entries in (pixel, channel) row-major order, length 3M."""
        return self.values.reshape(-1)


@dataclass(frozen=True)
class Observation:
    """Observed image plus its grid; provenance records how it was made."""

    y_obs: Image
    grid: ImageGrid
    provenance: str | None = None

    def __post_init__(self):
        if self.y_obs.values.shape[0] != self.grid.m:
            raise ValueError(
                f"observation has {self.y_obs.values.shape[0]} pixels, "
                f"grid expects {self.grid.m}"
            )


def write_ppm(path, image: Image, grid: ImageGrid) -> None:
    """Binary PPM (P6, maxval 255); entries clamped to [0,1] then scaled."""
    if image.values.shape[0] != grid.m:
        raise ValueError("image/grid size mismatch")
    clamped = np.clip(image.values, 0.0, 1.0)
    bytes_ = np.round(clamped * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{grid.width} {grid.height}\n255\n".encode())
        fh.write(bytes_.reshape(grid.height, grid.width, CHANNELS).tobytes())


def write_image_csv(path, image: Image, grid: ImageGrid) -> None:
    """Lossless export as ``row,col,channel,value`` with 17-digit values."""
    if image.values.shape[0] != grid.m:
        raise ValueError("image/grid size mismatch")
    lines = ["row,col,channel,value"]
    vals = image.values
    for k in range(grid.height):
        for j in range(grid.width):
            p = k * grid.width + j
            for ch in range(CHANNELS):
                lines.append(f"{k},{j},{ch},{format_float(vals[p, ch])}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_image_csv(path, grid: ImageGrid) -> Image:
    vals = np.zeros((grid.m, CHANNELS))
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "row,col,channel,value":
            raise ValueError("unrecognised image CSV header")
        for line in fh:
            row, col, ch, val = line.strip().split(",")
            vals[int(row) * grid.width + int(col), int(ch)] = float(val)
    return Image(vals)


def aggregate_dof(grid: ImageGrid) -> float:
    """sqrt(3M) factor used when per-entry bounds are summed into norms."""
    return math.sqrt(grid.n_coords)
