"""Certified sensitivity constants for the splat forward operator.

All analytic constants are conservative by construction: a per-pixel,
per-channel derivative supremum over the whole domain box is aggregated by
the crude sqrt(3M) factor.  They are meant to be *valid*, not tight; the
empirical estimators in this module measure how loose they are and certify
that no sampled perturbation ever exceeds them.

Per-pixel suprema, after whitening w = Sigma^(-1/2) (p - x):

    position: |grad| <= alpha*c * sup_t t e^(-t^2/2) / sqrt(lam_lo)
                      = alpha*c * e^(-1/2) / sqrt(lam_lo)
    covariance entries (a, b, c): derivative vector (u1^2/2, u1 u2, u2^2/2)
        with u = Sigma^(-1) (p-x); its norm is at most
        (3/4) * sup_t t^2 e^(-t^2/2) / lam_lo = (3/2) e^(-1) / lam_lo
        times alpha*c (the 3/4 covers the three stored entries).
    color:    kernel <= 1, one channel per coordinate -> alpha
    opacity:  kernel <= 1 times the per-channel color bound -> c

The blockwise constant is the sum of the four group constants, the global
one is their maximum over blocks, and the misfit constant is L = 2 B G
sqrt(N) with B the output-norm bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import domain as dom
from .domain import BLOCK_DIM, DomainBox
from .imaging import ImageGrid, aggregate_dof

_MIN_SCALE = 1e-6
_CHUNK = 2048


@dataclass(frozen=True)
class BlockConstantBreakdown:
    """Per-group sensitivity bounds; the block constant is their exact sum."""

    position: float
    covariance: float
    color: float
    alpha: float

    def __post_init__(self):
        for value in (self.position, self.covariance, self.color, self.alpha):
            if value < 0.0 or not np.isfinite(value):
                raise ValueError("sensitivity constants must be finite and >= 0")

    @property
    def block_constant(self) -> float:
        return self.position + self.covariance + self.color + self.alpha


@dataclass(frozen=True)
class ConstantsReport:
    """Certified constants plus the measured suprema that they dominate."""

    output_bound: float                         # B
    per_block: tuple[BlockConstantBreakdown, ...]
    block_constant_max: float                   # G = max_i G_i
    misfit_lipschitz: float                     # L = 2 B G sqrt(N)
    empirical_block: tuple[float, ...]
    empirical_misfit: float | None
    grid_id: str
    domain_id: str

    def __post_init__(self):
        n = len(self.per_block)
        if len(self.empirical_block) != n:
            raise ValueError("one empirical supremum per block required")
        g = max(b.block_constant for b in self.per_block)
        if g != self.block_constant_max:
            raise ValueError("block_constant_max must equal max per-block constant")
        if self.misfit_lipschitz != global_misfit_lipschitz(self.output_bound, g, n):
            raise ValueError("misfit_lipschitz must equal 2*B*G*sqrt(N)")

    @property
    def n_blocks(self) -> int:
        return len(self.per_block)

    @property
    def certified(self) -> bool:
        blocks_ok = all(
            emp <= ana.block_constant
            for emp, ana in zip(self.empirical_block, self.per_block)
        )
        misfit_ok = self.empirical_misfit is None or self.empirical_misfit <= self.misfit_lipschitz
        return blocks_ok and misfit_ok

    def to_dict(self) -> dict:
        return {
            "output_bound": self.output_bound,
            "per_block": [
                {
                    "position": b.position,
                    "covariance": b.covariance,
                    "color": b.color,
                    "alpha": b.alpha,
                    "block_constant": b.block_constant,
                }
                for b in self.per_block
            ],
            "block_constant_max": self.block_constant_max,
            "misfit_lipschitz": self.misfit_lipschitz,
            "empirical_block": list(self.empirical_block),
            "empirical_misfit": self.empirical_misfit,
            "certified": self.certified,
            "grid_id": self.grid_id,
            "domain_id": self.domain_id,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ConstantsReport":
        return ConstantsReport(
            output_bound=float(doc["output_bound"]),
            per_block=tuple(
                BlockConstantBreakdown(
                    position=float(b["position"]),
                    covariance=float(b["covariance"]),
                    color=float(b["color"]),
                    alpha=float(b["alpha"]),
                )
                for b in doc["per_block"]
            ),
            block_constant_max=float(doc["block_constant_max"]),
            misfit_lipschitz=float(doc["misfit_lipschitz"]),
            empirical_block=tuple(float(v) for v in doc["empirical_block"]),
            empirical_misfit=(None if doc["empirical_misfit"] is None
                              else float(doc["empirical_misfit"])),
            grid_id=str(doc["grid_id"]),
            domain_id=str(doc["domain_id"]),
        )


def analytic_output_bound(domain: DomainBox, n_blocks: int, grid: ImageGrid) -> float:
    """Certified bound on ||A(Z)||: sqrt(3M) * N * alpha_max * color_max.

    Every pixel/channel entry is at most N * alpha_max * color_max because
    each kernel value is at most one.
    """
    return aggregate_dof(grid) * n_blocks * domain.alpha_hi * domain.color_hi


def analytic_block_constants(domain: DomainBox, grid: ImageGrid) -> BlockConstantBreakdown:
    """Closed-form per-group sensitivity bounds over the domain box."""
    agg = aggregate_dof(grid)
    amax, cmax = domain.alpha_hi, domain.color_hi
    lam_lo = domain.cov_eig_lo
    return BlockConstantBreakdown(
        position=agg * amax * cmax * math.exp(-0.5) / math.sqrt(lam_lo),
        covariance=agg * amax * cmax * 1.5 * math.exp(-1.0) / lam_lo,
        color=agg * amax,
        alpha=agg * cmax,
    )


def global_misfit_lipschitz(output_bound: float, block_constant_max: float,
                            n_blocks: int) -> float:
    if output_bound < 0.0 or block_constant_max < 0.0 or n_blocks < 1:
        raise ValueError("need B, G >= 0 and N >= 1")
    return 2.0 * output_bound * block_constant_max * math.sqrt(n_blocks)


def _image_norms(values: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(values * values, axis=(-2, -1)))


def _fd_top_block_directions(forward, base: np.ndarray, index: int,
                             step: float) -> np.ndarray:
    """Top right-singular direction of the local block derivative, per base.

    Central differences on the 9 block coordinates give the local derivative
    as a map R^9 -> image space; its first right-singular vector is the
    steepest perturbation direction, which drives the supremum search.
    """
    count = base.shape[0]
    steps = step * (1.0 + np.abs(base[:, index, :]))        # (count, 9)
    stacked = np.repeat(base[:, None, :, :], 2 * BLOCK_DIM, axis=1)
    for j in range(BLOCK_DIM):
        stacked[:, 2 * j, index, j] += steps[:, j]
        stacked[:, 2 * j + 1, index, j] -= steps[:, j]
    vals = forward(stacked)                                  # (count, 18, M, 3)
    flat = vals.reshape(count, 2 * BLOCK_DIM, -1)
    cols = (flat[:, 0::2, :] - flat[:, 1::2, :]) / (2.0 * steps)[:, :, None]
    dirs = np.empty((count, BLOCK_DIM))
    for t in range(count):
        _, _, vt = np.linalg.svd(cols[t].T, full_matrices=False)
        dirs[t] = vt[0]
    return dirs


def empirical_block_lipschitz(forward, domain: DomainBox, n_blocks: int,
                              index: int, trials: int, seed: int,
                              informed_every: int = 8,
                              fd_step: float = 1e-6) -> float:
    """Measured supremum of ||A(Z) - A(Z')|| / ||Z_i - Z_i'|| over pairs
    differing only in block ``index``.

    Perturbation scales are log-uniform between 1e-6 and the block diameter;
    every ``informed_every``-th trial instead steps along the locally
    steepest direction found by finite differences, which makes the
    supremum converge to the true operator norm on linear forward maps.
    Deterministic for a fixed seed; zero-distance pairs are skipped.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= index < n_blocks:
        raise IndexError("block index out of range")
    rng = np.random.default_rng(seed)
    width = domain.block_diameter()

    supremum = 0.0
    done = 0
    while done < trials:
        count = min(_CHUNK, trials - done)
        base = dom.sample_block_matrix(domain, n_blocks, count, rng)
        raw = rng.standard_normal((count, BLOCK_DIM))
        dirs = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        scales = 10.0 ** rng.uniform(math.log10(_MIN_SCALE), math.log10(width),
                                     size=count)
        informed = np.arange(done, done + count) % informed_every == 0
        if np.any(informed):
            dirs[informed] = _fd_top_block_directions(forward, base[informed],
                                                      index, fd_step)
            scales[informed] = _MIN_SCALE

        perturbed = base.copy()
        moved = base[:, index, :] + scales[:, None] * dirs
        for t in range(count):
            perturbed[t, index, :] = dom._project_block_vector(moved[t], domain)
        dist = np.linalg.norm(perturbed[:, index, :] - base[:, index, :], axis=1)
        keep = dist > 0.0
        if np.any(keep):
            delta = forward(perturbed[keep]) - forward(base[keep])
            ratios = _image_norms(delta) / dist[keep]
            supremum = max(supremum, float(np.max(ratios)))
        done += count
    return supremum


def empirical_misfit_lipschitz(forward, y_flat: np.ndarray, domain: DomainBox,
                               n_blocks: int, trials: int, seed: int) -> float:
    """Measured supremum of |F(Z) - F(Z')| / d2(Z, Z') over scene pairs.

    Half the pairs are independent domain samples (large separations), half
    are small log-uniform perturbations of one sample (local behaviour).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    diameter = domain.d2_diameter(n_blocks)
    dim = n_blocks * BLOCK_DIM

    supremum = 0.0
    done = 0
    while done < trials:
        count = min(_CHUNK, trials - done)
        first = dom.sample_block_matrix(domain, n_blocks, count, rng)
        second = dom.sample_block_matrix(domain, n_blocks, count, rng)
        near = rng.random(count) < 0.5
        if np.any(near):
            raw = rng.standard_normal((count, dim))
            raw /= np.linalg.norm(raw, axis=1, keepdims=True)
            scales = 10.0 ** rng.uniform(math.log10(_MIN_SCALE),
                                         math.log10(diameter), size=count)
            shifted = first.reshape(count, dim) + scales[:, None] * raw
            shifted = shifted.reshape(count, n_blocks, BLOCK_DIM)
            second[near] = dom.project_matrix(shifted[near], domain)

        dist = dom.d2_matrix(first, second)
        keep = dist > 0.0
        if np.any(keep):
            fa = forward(first[keep]).reshape(int(np.sum(keep)), -1)
            fb = forward(second[keep]).reshape(int(np.sum(keep)), -1)
            misfit_a = np.sum((fa - y_flat) ** 2, axis=1)
            misfit_b = np.sum((fb - y_flat) ** 2, axis=1)
            ratios = np.abs(misfit_a - misfit_b) / dist[keep]
            supremum = max(supremum, float(np.max(ratios)))
        done += count
    return supremum


def build_constants_report(domain: DomainBox, n_blocks: int, grid: ImageGrid,
                           forward, seed: int, block_trials: int = 10_000,
                           pair_trials: int = 10_000,
                           y_flat: np.ndarray | None = None) -> ConstantsReport:
    """Analytic constants plus their measured counterparts in one report."""
    breakdown = analytic_block_constants(domain, grid)
    per_block = tuple(breakdown for _ in range(n_blocks))
    b = analytic_output_bound(domain, n_blocks, grid)
    g = max(bc.block_constant for bc in per_block)
    empirical = tuple(
        empirical_block_lipschitz(forward, domain, n_blocks, i, block_trials,
                                  seed=seed + i)
        for i in range(n_blocks)
    )
    empirical_misfit = None
    if y_flat is not None:
        empirical_misfit = empirical_misfit_lipschitz(
            forward, y_flat, domain, n_blocks, pair_trials, seed=seed + n_blocks)
    return ConstantsReport(
        output_bound=b,
        per_block=per_block,
        block_constant_max=g,
        misfit_lipschitz=global_misfit_lipschitz(b, g, n_blocks),
        empirical_block=empirical,
        empirical_misfit=empirical_misfit,
        grid_id=grid.grid_id,
        domain_id=domain.domain_id(),
    )


def oracle_constants_report(oracle, grid: ImageGrid, seed: int,
                            block_trials: int = 2000) -> ConstantsReport:
    """Closed-form constants for a linear oracle, with measured suprema.

    The per-block constant is the exact block-column spectral norm; the
    output bound is sigma_max times the largest feasible coordinate norm.
    """
    from .linear import LinearOracle

    assert isinstance(oracle, LinearOracle)
    n = oracle.n_blocks
    domain = DomainBox()
    lo, hi = domain.coordinate_bounds()
    corner = math.sqrt(n * float(np.sum(np.maximum(np.abs(lo), np.abs(hi)) ** 2)))
    norms = [oracle.block_operator_norm(i) for i in range(n)]
    per_block = tuple(
        BlockConstantBreakdown(position=s, covariance=0.0, color=0.0, alpha=0.0)
        for s in norms
    )
    b = oracle.sigma_max() * corner
    g = max(norms)
    empirical = tuple(
        empirical_block_lipschitz(oracle.forward, domain, n, i, block_trials,
                                  seed=seed + i)
        for i in range(n)
    )
    return ConstantsReport(
        output_bound=b,
        per_block=per_block,
        block_constant_max=g,
        misfit_lipschitz=global_misfit_lipschitz(b, g, n),
        empirical_block=empirical,
        empirical_misfit=None,
        grid_id=grid.grid_id,
        domain_id=domain.domain_id(),
    )
