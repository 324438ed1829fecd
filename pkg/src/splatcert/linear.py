"""Exactly analyzable linear stand-in for the splat renderer.

A linear oracle maps the flattened scene vector through a fixed weight
matrix W (3M x 9N).  Every constant the toolkit estimates has a closed form
here: blockwise sensitivities are block-column spectral norms, the misfit
curvature is the smallest singular value, and quadratic growth is global.
The estimators are validated against these closed forms before they are
trusted on the nonlinear renderer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import BLOCK_DIM, Scene
from .imaging import CHANNELS, Image, ImageGrid


@dataclass(frozen=True)
class LinearOracle:
    """Fixed linear forward map from scene coordinates to image entries."""

    weights: np.ndarray        # (3M, 9N)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] % CHANNELS != 0 or w.shape[1] % BLOCK_DIM != 0:
            raise ValueError("weights must be (3M, 9N)")
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("oracle weights must be finite")
        w = np.ascontiguousarray(w)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_blocks(self) -> int:
        return self.weights.shape[1] // BLOCK_DIM

    @property
    def m(self) -> int:
        return self.weights.shape[0] // CHANNELS

    def block_columns(self, index: int) -> np.ndarray:
        return self.weights[:, BLOCK_DIM * index:BLOCK_DIM * (index + 1)]

    def block_operator_norm(self, index: int) -> float:
        """Exact blockwise sensitivity: spectral norm of the block columns."""
        return float(np.linalg.svd(self.block_columns(index), compute_uv=False)[0])

    def sigma_min(self) -> float:
        return float(np.linalg.svd(self.weights, compute_uv=False)[-1])

    def sigma_max(self) -> float:
        return float(np.linalg.svd(self.weights, compute_uv=False)[0])

    def forward(self, mat: np.ndarray) -> np.ndarray:
        """Batched forward on scene matrices (..., N, 9) -> (..., M, 3)."""
        mat = np.asarray(mat, dtype=float)
        flat = mat.reshape(mat.shape[:-2] + (-1,))
        vals = flat @ self.weights.T
        return vals.reshape(mat.shape[:-2] + (self.m, CHANNELS))


def linear_apply(oracle: LinearOracle, scene: Scene) -> Image:
    if scene.dim != oracle.weights.shape[1]:
        raise ValueError(
            f"scene has {scene.dim} coordinates, oracle expects {oracle.weights.shape[1]}"
        )
    return Image(oracle.forward(scene.as_matrix()))


def random_linear_oracle(n_blocks: int, grid: ImageGrid, seed: int,
                         scale: float = 1.0) -> LinearOracle:
    rng = np.random.default_rng(seed)
    w = scale * rng.standard_normal((grid.n_coords, BLOCK_DIM * n_blocks))
    return LinearOracle(w)


def diagonal_embedding_oracle(diag: np.ndarray, grid: ImageGrid) -> LinearOracle:
    """W with ``diag`` on the leading square and zero padding below.

    Singular values equal |diag| exactly, which pins down the spectral
    estimators without any numerical slack.
    """
    diag = np.asarray(diag, dtype=float)
    d = diag.shape[0]
    if d % BLOCK_DIM != 0:
        raise ValueError("diagonal length must be a multiple of the block size")
    if grid.n_coords < d:
        raise ValueError("grid too small to embed the diagonal")
    w = np.zeros((grid.n_coords, d))
    w[:d, :d] = np.diag(diag)
    return LinearOracle(w)
