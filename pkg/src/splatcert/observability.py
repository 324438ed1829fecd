"""Local identifiability and resolution-dependent observability estimates.

Near a ground-truth scene the misfit gap grows quadratically,

    ||A(Z) - A(Z*)|| >= kappa * d2(Z, Z*)    for d2(Z, Z*) <= r0,

and the curvature constant kappa is estimated as the worst residual ratio
over sampled directions and radii.  The smallest singular value of the
Jacobian at the truth is the linearised version of the same constant; the
per-resolution observability constant divides out the sqrt(M) growth that
comes from accumulating pixel rows.

kappa is measured on the noiseless misfit (target = A(Z*)), so the reported
ratio is exactly the image-change per unit parameter distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import Scene, d2_matrix, project_matrix
from .forward import jacobian as gs_jacobian
from .forward import make_forward
from .imaging import ImageGrid

N_RADII = 8
N_BOTTOM_DIRS = 2
RELATIVE_KAPPA_FLOOR = 1e-5  # fraction of sigma_max below which growth is
                             # indistinguishable from a flat direction


@dataclass(frozen=True)
class QuadraticGrowth:
    """Worst-case residual ratio inside a ball around the truth."""

    kappa_hat: float
    certified: bool
    radius: float
    n_used: int


@dataclass(frozen=True)
class R0Estimate:
    value: float
    certified: bool
    kappa_at_r0: float


@dataclass(frozen=True)
class StabilityEstimate:
    """Curvature and observability summary at a ground-truth scene."""

    sigma_min: float
    lambda_eff: float
    kappa_hat: float
    r0_hat: float
    certified: bool
    grid_id: str
    n_samples: int

    def __post_init__(self):
        if self.sigma_min < 0.0:
            raise ValueError("sigma_min must be nonnegative")
        # Sampled curvature cannot beat the linearisation by more than slack.
        if self.kappa_hat > self.sigma_min * 1.05 + 1e-12:
            raise ValueError("kappa_hat exceeds sigma_min beyond tolerance")

    def to_dict(self) -> dict:
        return {
            "sigma_min": self.sigma_min,
            "lambda_eff": self.lambda_eff,
            "kappa_hat": self.kappa_hat,
            "r0_hat": self.r0_hat,
            "certified": self.certified,
            "grid_id": self.grid_id,
            "n_samples": self.n_samples,
        }

    @staticmethod
    def from_dict(doc: dict) -> "StabilityEstimate":
        return StabilityEstimate(
            sigma_min=float(doc["sigma_min"]),
            lambda_eff=float(doc["lambda_eff"]),
            kappa_hat=float(doc["kappa_hat"]),
            r0_hat=float(doc["r0_hat"]),
            certified=bool(doc["certified"]),
            grid_id=str(doc["grid_id"]),
            n_samples=int(doc["n_samples"]),
        )


def jacobian_sigma_min(z_star: Scene, grid: ImageGrid,
                       jac_matrix: np.ndarray | None = None) -> float:
    """Smallest singular value of the forward Jacobian at the truth.

    A degenerate scene (duplicate splats) gives a value near zero; this is
    reported, not raised.
    """
    if jac_matrix is None:
        jac_matrix = gs_jacobian(z_star, grid)
    return float(np.linalg.svd(jac_matrix, compute_uv=False)[-1])


def estimate_lambda_eff(z_star: Scene, grid: ImageGrid,
                        sigma_min: float | None = None) -> float:
    """Observability per sqrt(pixel count): sigma_min / sqrt(M)."""
    if sigma_min is None:
        sigma_min = jacobian_sigma_min(z_star, grid)
    return sigma_min / math.sqrt(grid.m)


def _unit_rows(raw: np.ndarray) -> np.ndarray:
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def verify_quadratic_growth(z_star: Scene, grid: ImageGrid, radius: float,
                            samples: int, seed: int,
                            forward=None, jac_matrix: np.ndarray | None = None,
                            kappa_floor: float | None = None) -> QuadraticGrowth:
    """Sampled check of residual growth in a d2-ball of the given radius.

    Points sit at radii log-spaced in [1e-4 * radius, radius].  Random unit
    directions are augmented with the Jacobian's flattest right-singular
    directions (both signs, every radius), so a near-null direction cannot
    be missed by chance.  kappa_hat is the minimum of
    ||A(Z) - A(Z*)|| / d2(Z, Z*) over all evaluated points.
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    if forward is None:
        forward = make_forward(grid)
    if jac_matrix is None:
        jac_matrix = gs_jacobian(z_star, grid)
    domain = z_star.domain
    dim = z_star.dim
    base = z_star.as_matrix()
    radii = np.geomspace(1e-4 * radius, radius, num=N_RADII)

    _, svals, vt = np.linalg.svd(jac_matrix, full_matrices=False)
    flat_dirs = vt[-N_BOTTOM_DIRS:]
    if kappa_floor is None:
        kappa_floor = RELATIVE_KAPPA_FLOOR * float(svals[0])

    dirs = [_unit_rows(rng.standard_normal((samples, dim)))]
    dir_radii = [radii[np.arange(samples) % N_RADII]]
    for v in flat_dirs:
        for sign in (1.0, -1.0):
            dirs.append(np.repeat(sign * v[None, :], N_RADII, axis=0))
            dir_radii.append(radii)
    all_dirs = np.concatenate(dirs)
    all_radii = np.concatenate(dir_radii)

    points = base[None, :, :] + (all_radii[:, None] * all_dirs).reshape(
        -1, z_star.n_blocks, 9)
    points = project_matrix(points, domain)
    dist = d2_matrix(points, base[None, :, :])
    keep = dist > 0.0
    n_used = int(np.sum(keep))
    if n_used == 0:
        return QuadraticGrowth(kappa_hat=0.0, certified=False,
                               radius=radius, n_used=0)
    delta = forward(points[keep]) - forward(base[None, :, :])
    norms = np.sqrt(np.sum(delta * delta, axis=(-2, -1)))
    kappa_hat = float(np.min(norms / dist[keep]))
    return QuadraticGrowth(kappa_hat=kappa_hat,
                           certified=kappa_hat > kappa_floor,
                           radius=radius, n_used=n_used)


def estimate_r0(z_star: Scene, grid: ImageGrid, fraction: float, seed: int,
                samples: int = 256, upper: float | None = None,
                forward=None, jac_matrix: np.ndarray | None = None) -> R0Estimate:
    """Largest radius (within a factor two) of verified quadratic growth.

    Halves the radius from the domain diameter until the sampled curvature
    reaches ``fraction`` of sigma_min; returns 0 (not certified) when even
    tiny radii fail, e.g. for scenes with a flat direction.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    if forward is None:
        forward = make_forward(grid)
    if jac_matrix is None:
        jac_matrix = gs_jacobian(z_star, grid)
    sigma_min = float(np.linalg.svd(jac_matrix, compute_uv=False)[-1])
    if upper is None:
        upper = z_star.domain.d2_diameter(z_star.n_blocks)
    floor = upper * 1e-6

    radius = upper
    level = 0
    while radius > floor:
        growth = verify_quadratic_growth(z_star, grid, radius, samples,
                                         seed=seed + level, forward=forward,
                                         jac_matrix=jac_matrix)
        if growth.certified and growth.kappa_hat >= fraction * sigma_min:
            return R0Estimate(value=radius, certified=True,
                              kappa_at_r0=growth.kappa_hat)
        radius *= 0.5
        level += 1
    return R0Estimate(value=0.0, certified=False, kappa_at_r0=0.0)


def estimate_stability(z_star: Scene, grid: ImageGrid, seed: int,
                       fraction: float = 0.5, samples: int = 256,
                       forward=None,
                       jac_matrix: np.ndarray | None = None) -> StabilityEstimate:
    """Full curvature/observability summary used by certification runs."""
    if jac_matrix is None and forward is None:
        jac_matrix = gs_jacobian(z_star, grid)
    sigma_min = jacobian_sigma_min(z_star, grid, jac_matrix=jac_matrix)
    lam = estimate_lambda_eff(z_star, grid, sigma_min=sigma_min)
    r0 = estimate_r0(z_star, grid, fraction, seed, samples=samples,
                     forward=forward, jac_matrix=jac_matrix)
    kappa_hat = r0.kappa_at_r0 if r0.certified else 0.0
    return StabilityEstimate(
        sigma_min=sigma_min,
        lambda_eff=lam,
        kappa_hat=kappa_hat,
        r0_hat=r0.value,
        certified=r0.certified,
        grid_id=grid.grid_id,
        n_samples=samples,
    )
