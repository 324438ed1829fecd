"""Additive Gaussian-splat image formation and its derivatives.

The forward operator evaluates, at every pixel p and channel ch,

    A(Z)(p)_ch = sum_i alpha_i * color_i_ch * exp(-0.5 (p-x_i)^T S_i (p-x_i))

with S_i the inverse of the 2x2 covariance [[a_i, b_i], [b_i, c_i]].  There
is no occlusion, compositing or kernel cutoff: the operator is a plain sum
over splats, which makes it additive in the block list and linear in colors
and opacities.

Accumulation over splats always runs in block-index order with per-element
additions, so results are bit-identical across runs, across batch shapes
and independent of any thread count.  No BLAS reduction is used anywhere in
this module.
"""

from __future__ import annotations

import numpy as np

from .domain import ALPHA, BLOCK_DIM, COLOR, Scene
from .imaging import CHANNELS, Image, ImageGrid, Observation


def _inverse_cov(a, b, c):
    det = a * c - b * b
    if np.any(det <= 0.0) or not np.all(np.isfinite(det)):
        raise FloatingPointError("covariance must be positive definite")
    return c / det, -b / det, a / det


def render_matrix(mat: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Render batched scene matrices (..., N, 9) to values (..., M, 3)."""
    mat = np.asarray(mat, dtype=float)
    n_blocks = mat.shape[-2]
    cx, cy = centers[:, 0], centers[:, 1]
    out = np.zeros(mat.shape[:-2] + (centers.shape[0], CHANNELS))
    for i in range(n_blocks):
        px = mat[..., i, 0:1]
        py = mat[..., i, 1:2]
        sa, sb, sc = _inverse_cov(mat[..., i, 2], mat[..., i, 3], mat[..., i, 4])
        dx = cx - px                       # (..., M)
        dy = cy - py
        q = (sa[..., None] * dx * dx
             + 2.0 * sb[..., None] * dx * dy
             + sc[..., None] * dy * dy)
        weight = mat[..., i, ALPHA, None] * np.exp(-0.5 * q)
        out += weight[..., :, None] * mat[..., i, None, COLOR]
    return out


def render(scene: Scene, grid: ImageGrid) -> Image:
    """Forward image of a scene on a pixel grid."""
    return Image(render_matrix(scene.as_matrix(), grid.pixel_centers))


def make_forward(grid: ImageGrid):
    """Batched forward callable: (..., N, 9) scene matrices -> (..., M, 3)."""
    centers = grid.pixel_centers

    def forward(mat: np.ndarray) -> np.ndarray:
        return render_matrix(mat, centers)

    return forward


def misfit(scene: Scene, obs: Observation) -> float:
    """Squared observation-space distance ||A(Z) - y_obs||^2 over 3M entries."""
    rendered = render_matrix(scene.as_matrix(), obs.grid.pixel_centers)
    resid = rendered - obs.y_obs.values
    return float(np.sum(resid * resid))


def jacobian(scene: Scene, grid: ImageGrid) -> np.ndarray:
    """Analytic Jacobian of the rendered image, shape (3M, 9N).

    Rows follow the flattened (pixel, channel) order of ``Image.flat``;
    columns follow scene coordinate order.  With u = S (p - x):

        d/dx      -> alpha * color_ch * k * u
        d/d(a,b,c)-> alpha * color_ch * k * (u1^2/2, u1*u2, u2^2/2)
        d/dcolor  -> alpha * k on the matching channel
        d/dalpha  -> color_ch * k
    """
    mat = scene.as_matrix()
    centers = grid.pixel_centers
    m = centers.shape[0]
    jac = np.zeros((m * CHANNELS, scene.dim))
    cx, cy = centers[:, 0], centers[:, 1]
    for i in range(scene.n_blocks):
        px, py = mat[i, 0], mat[i, 1]
        sa, sb, sc = _inverse_cov(mat[i, 2], mat[i, 3], mat[i, 4])
        color = mat[i, COLOR]
        alpha = mat[i, ALPHA]
        dx = cx - px
        dy = cy - py
        u1 = sa * dx + sb * dy
        u2 = sb * dx + sc * dy
        q = u1 * dx + u2 * dy
        k = np.exp(-0.5 * q)
        ak = alpha * k                                  # (M,)
        col0 = BLOCK_DIM * i

        def put(offset, per_pixel, channel_weights):
            block = per_pixel[:, None] * channel_weights[None, :]
            jac[:, col0 + offset] = block.reshape(-1)

        put(0, ak * u1, color)
        put(1, ak * u2, color)
        put(2, ak * 0.5 * u1 * u1, color)
        put(3, ak * u1 * u2, color)
        put(4, ak * 0.5 * u2 * u2, color)
        for ch in range(CHANNELS):
            e = np.zeros(CHANNELS)
            e[ch] = 1.0
            put(5 + ch, ak, e)
        put(8, k, color)
    return jac


def misfit_gradient(scene: Scene, obs: Observation) -> np.ndarray:
    """Analytic gradient of the misfit, length 9N.

    grad = 2 J^T r with r the flattened residual; the contraction uses an
    explicit pairwise sum instead of a matrix product to stay bit-stable
    under varying BLAS thread counts.
    """
    rendered = render_matrix(scene.as_matrix(), obs.grid.pixel_centers)
    resid = (rendered - obs.y_obs.values).reshape(-1)
    jac = jacobian(scene, obs.grid)
    return 2.0 * np.sum(jac * resid[:, None], axis=0)


def misfit_values(forward_values: np.ndarray, y_flat: np.ndarray) -> np.ndarray:
    """Batched misfits from rendered values (..., M, 3) against a flat target."""
    resid = forward_values.reshape(forward_values.shape[:-2] + (-1,)) - y_flat
    return np.sum(resid * resid, axis=-1)
