"""Block-structured parameter domain for splat scenes.

A scene is an ordered list of N splats.  Each splat is a 9-coordinate block

    [px, py, a, b, c, r, g, bl, alpha]

holding a 2-D position, the entries (a, b, c) of the symmetric 2x2
covariance [[a, b], [b, c]], a 3-channel color and an opacity.  The domain
is a box on positions / colors / opacities plus an eigenvalue interval
[lam_lo, lam_hi] on the covariance, which keeps every splat uniformly
non-degenerate.  Distances between scenes use the product Euclidean metric

    d2(Z, Z')^2 = sum_i || Z_i - Z_i' ||^2

over the 9N concatenated coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

BLOCK_DIM = 9
POS = slice(0, 2)
COV = slice(2, 5)
COLOR = slice(5, 8)
ALPHA = 8

_CLIP_ROUNDS = 64


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DomainBox:
    """Compact box domain for splat parameters.

    ``cov_eig_lo`` must be positive: covariance eigenvalues are confined to
    [cov_eig_lo, cov_eig_hi], bounding every splat's inverse covariance.
    """

    position_lo: float = 0.0
    position_hi: float = 1.0
    color_lo: float = 0.0
    color_hi: float = 1.0
    alpha_lo: float = 0.0
    alpha_hi: float = 1.0
    cov_eig_lo: float = 1e-3
    cov_eig_hi: float = 1e-1

    def __post_init__(self):
        pairs = [
            (self.position_lo, self.position_hi),
            (self.color_lo, self.color_hi),
            (self.alpha_lo, self.alpha_hi),
            (self.cov_eig_lo, self.cov_eig_hi),
        ]
        if not all(np.isfinite(v) for pair in pairs for v in pair):
            raise ValueError("domain bounds must be finite")
        if not all(lo < hi for lo, hi in pairs):
            raise ValueError("every lower bound must be strictly below its upper bound")
        if self.cov_eig_lo <= 0.0:
            raise ValueError("cov_eig_lo must be positive (non-degenerate splats)")

    def coordinate_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate box [lo, hi] enclosing one feasible block.

        The covariance slots use the implied entry ranges: diagonal entries
        lie in [lam_lo, lam_hi] and |b| <= (lam_hi - lam_lo) / 2 whenever the
        eigenvalues do.
        """
        b_max = 0.5 * (self.cov_eig_hi - self.cov_eig_lo)
        lo = np.array([self.position_lo, self.position_lo,
                       self.cov_eig_lo, -b_max, self.cov_eig_lo,
                       self.color_lo, self.color_lo, self.color_lo,
                       self.alpha_lo])
        hi = np.array([self.position_hi, self.position_hi,
                       self.cov_eig_hi, b_max, self.cov_eig_hi,
                       self.color_hi, self.color_hi, self.color_hi,
                       self.alpha_hi])
        return lo, hi

    def block_diameter(self) -> float:
        lo, hi = self.coordinate_bounds()
        return float(np.sqrt(np.sum((hi - lo) ** 2)))

    def d2_diameter(self, n_blocks: int) -> float:
        """Upper bound on d2 between any two feasible scenes with n_blocks."""
        return math.sqrt(n_blocks) * self.block_diameter()

    def domain_id(self) -> str:
        from .reports import short_hash
        return short_hash([self.position_lo, self.position_hi,
                           self.color_lo, self.color_hi,
                           self.alpha_lo, self.alpha_hi,
                           self.cov_eig_lo, self.cov_eig_hi])


@dataclass(frozen=True)
class SplatBlock:
    """One splat: position, covariance entries (a, b, c), color, opacity."""

    position: np.ndarray
    cov: np.ndarray
    color: np.ndarray
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(self.position))
        object.__setattr__(self, "cov", _frozen(self.cov))
        object.__setattr__(self, "color", _frozen(self.color))
        if self.position.shape != (2,) or self.cov.shape != (3,) or self.color.shape != (3,):
            raise ValueError("block needs position (2,), cov (3,), color (3,)")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.cov, self.color, [self.alpha]])

    @staticmethod
    def from_vector(vec: np.ndarray) -> "SplatBlock":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (BLOCK_DIM,):
            raise ValueError(f"block vector must have {BLOCK_DIM} coordinates")
        return SplatBlock(position=vec[POS], cov=vec[COV], color=vec[COLOR],
                          alpha=float(vec[ALPHA]))


@dataclass(frozen=True)
class Scene:
    """Ordered collection of splat blocks over a common domain box."""

    blocks: tuple[SplatBlock, ...]
    domain: DomainBox

    def __post_init__(self):
        if len(self.blocks) < 1:
            raise ValueError("a scene needs at least one block")
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def dim(self) -> int:
        return BLOCK_DIM * len(self.blocks)

    def as_matrix(self) -> np.ndarray:
        """Blocks stacked as an (N, 9) array in block order."""
        return np.stack([b.as_vector() for b in self.blocks])

    def as_vector(self) -> np.ndarray:
        return self.as_matrix().reshape(-1)

    @staticmethod
    def from_matrix(mat: np.ndarray, domain: DomainBox) -> "Scene":
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2 or mat.shape[1] != BLOCK_DIM:
            raise ValueError("scene matrix must have shape (N, 9)")
        return Scene(tuple(SplatBlock.from_vector(row) for row in mat), domain)


def cov_eigenvalues(a: float, b: float, c: float) -> tuple[float, float]:
    """Eigenvalues (smallest, largest) of [[a, b], [b, c]].

    The b == 0 branch returns the diagonal entries themselves so that
    diagonal matrices are handled without any rounding.
    """
    if b == 0.0:
        return (a, c) if a <= c else (c, a)
    h = 0.5 * (a + c)
    r = math.hypot(0.5 * (a - c), b)
    return h - r, h + r


def clip_cov_entries(a: float, b: float, c: float, lo: float, hi: float) -> tuple[float, float, float]:
    """Clip the eigenvalues of [[a, b], [b, c]] into [lo, hi], keeping eigenvectors.

    Feasible input is returned bit-identically.  After a clip the result is
    re-checked with the same eigenvalue routine and nudged inward by single
    ulps until it passes, so applying the function twice is exactly the same
    as applying it once.
    """
    if not (np.isfinite(a) and np.isfinite(b) and np.isfinite(c)):
        raise FloatingPointError("non-finite covariance entries")
    e1, e2 = cov_eigenvalues(a, b, c)
    if lo <= e1 and e2 <= hi:
        return a, b, c
    if b == 0.0:
        return min(max(a, lo), hi), 0.0, min(max(c, lo), hi)
    # Eigenvector of the larger eigenvalue; the (b, e2 - a) form is exact on
    # the characteristic equation and never degenerates for b != 0.
    vx, vy = b, e2 - a
    nrm = math.hypot(vx, vy)
    cs, sn = vx / nrm, vy / nrm
    t1 = min(max(e1, lo), hi)
    t2 = min(max(e2, lo), hi)
    for _ in range(_CLIP_ROUNDS):
        a2 = t2 * cs * cs + t1 * sn * sn
        b2 = (t2 - t1) * cs * sn
        c2 = t2 * sn * sn + t1 * cs * cs
        m1, m2 = cov_eigenvalues(a2, b2, c2)
        if lo <= m1 and m2 <= hi:
            return a2, b2, c2
        # Recomputed eigenvalues can sit a few ulps outside after rounding;
        # move the targets strictly inward and rebuild.
        if m1 < lo:
            t1 = np.nextafter(t1, np.inf)
        if m2 > hi:
            t2 = np.nextafter(t2, -np.inf)
    raise FloatingPointError("covariance clip did not stabilise")


def _project_block_vector(vec: np.ndarray, domain: DomainBox) -> np.ndarray:
    if not np.all(np.isfinite(vec)):
        raise FloatingPointError("non-finite block coordinates")
    out = vec.copy()
    out[POS] = np.clip(vec[POS], domain.position_lo, domain.position_hi)
    out[COV] = clip_cov_entries(vec[2], vec[3], vec[4], domain.cov_eig_lo, domain.cov_eig_hi)
    out[COLOR] = np.clip(vec[COLOR], domain.color_lo, domain.color_hi)
    out[ALPHA] = min(max(vec[ALPHA], domain.alpha_lo), domain.alpha_hi)
    return out


def project_to_domain(scene: Scene) -> Scene:
    """Project every block onto the domain box (idempotent, bit-exact)."""
    mat = scene.as_matrix()
    projected = np.stack([_project_block_vector(row, scene.domain) for row in mat])
    return Scene.from_matrix(projected, scene.domain)


def project_matrix(mat: np.ndarray, domain: DomainBox) -> np.ndarray:
    """Array-level projection used by samplers and estimators."""
    flat = mat.reshape(-1, BLOCK_DIM)
    out = np.stack([_project_block_vector(row, domain) for row in flat])
    return out.reshape(mat.shape)


def block_is_feasible(vec: np.ndarray, domain: DomainBox) -> bool:
    e1, e2 = cov_eigenvalues(vec[2], vec[3], vec[4])
    return bool(
        np.all(vec[POS] >= domain.position_lo) and np.all(vec[POS] <= domain.position_hi)
        and np.all(vec[COLOR] >= domain.color_lo) and np.all(vec[COLOR] <= domain.color_hi)
        and domain.alpha_lo <= vec[ALPHA] <= domain.alpha_hi
        and domain.cov_eig_lo <= e1 and e2 <= domain.cov_eig_hi
    )


def scene_is_feasible(scene: Scene) -> bool:
    return all(block_is_feasible(row, scene.domain) for row in scene.as_matrix())


def d2_distance(scene_a: Scene, scene_b: Scene) -> float:
    """Root-sum-square distance over matching blocks."""
    if scene_a.n_blocks != scene_b.n_blocks:
        raise ValueError(
            f"scenes have {scene_a.n_blocks} and {scene_b.n_blocks} blocks; "
            "the metric needs matching block lists"
        )
    diff = scene_a.as_matrix() - scene_b.as_matrix()
    return float(np.sqrt(np.sum(diff * diff)))


def d2_matrix(mat_a: np.ndarray, mat_b: np.ndarray) -> np.ndarray:
    """d2 between batched scene matrices (..., N, 9) -> (...)."""
    diff = mat_a - mat_b
    return np.sqrt(np.sum(diff * diff, axis=(-2, -1)))


def sample_block_matrix(domain: DomainBox, n_blocks: int, count: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Draw (count, n_blocks, 9) feasible blocks.

    Covariances come from eigenvalues uniform in [lam_lo, lam_hi] and a
    uniform rotation angle; the assembled entries are passed through the
    covariance clip so rounding can never push an eigenvalue outside the
    interval.
    """
    shape = (count, n_blocks)
    pos = rng.uniform(domain.position_lo, domain.position_hi, size=shape + (2,))
    eigs = rng.uniform(domain.cov_eig_lo, domain.cov_eig_hi, size=shape + (2,))
    theta = rng.uniform(0.0, np.pi, size=shape)
    color = rng.uniform(domain.color_lo, domain.color_hi, size=shape + (3,))
    alpha = rng.uniform(domain.alpha_lo, domain.alpha_hi, size=shape)

    cs, sn = np.cos(theta), np.sin(theta)
    l1, l2 = eigs[..., 0], eigs[..., 1]
    a = l1 * cs * cs + l2 * sn * sn
    b = (l1 - l2) * cs * sn
    c = l1 * sn * sn + l2 * cs * cs

    mat = np.empty(shape + (BLOCK_DIM,))
    mat[..., POS] = pos
    mat[..., 2], mat[..., 3], mat[..., 4] = a, b, c
    mat[..., COLOR] = color
    mat[..., ALPHA] = alpha
    for idx in np.ndindex(shape):
        mat[idx][COV] = clip_cov_entries(mat[idx][2], mat[idx][3], mat[idx][4],
                                         domain.cov_eig_lo, domain.cov_eig_hi)
    return mat


def sample_scenes(domain: DomainBox, n_blocks: int, seed: int, count: int) -> list[Scene]:
    """Deterministic list of feasible random scenes for a fixed seed."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return []
    rng = np.random.default_rng(seed)
    mats = sample_block_matrix(domain, n_blocks, count, rng)
    return [Scene.from_matrix(m, domain) for m in mats]


def perturb_block(scene: Scene, index: int, delta: np.ndarray) -> Scene:
    """Shift block ``index`` by ``delta`` and re-project it; others unchanged."""
    if not 0 <= index < scene.n_blocks:
        raise IndexError(f"block index {index} out of range for {scene.n_blocks} blocks")
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (BLOCK_DIM,):
        raise ValueError(f"delta must have {BLOCK_DIM} coordinates")
    moved = _project_block_vector(scene.blocks[index].as_vector() + delta, scene.domain)
    blocks = list(scene.blocks)
    blocks[index] = SplatBlock.from_vector(moved)
    return Scene(tuple(blocks), scene.domain)


# -- serialization ----------------------------------------------------------

def scene_to_json(scene: Scene) -> str:
    """Structured text form; floats carry 17 significant digits and therefore
    round-trip bit-exactly."""
    from .reports import dumps_17g
    doc = {
        "domain": {
            "position": [scene.domain.position_lo, scene.domain.position_hi],
            "color": [scene.domain.color_lo, scene.domain.color_hi],
            "alpha": [scene.domain.alpha_lo, scene.domain.alpha_hi],
            "cov_eig": [scene.domain.cov_eig_lo, scene.domain.cov_eig_hi],
        },
        "blocks": [
            {
                "position": list(b.position),
                "cov": list(b.cov),
                "color": list(b.color),
                "alpha": b.alpha,
            }
            for b in scene.blocks
        ],
    }
    return dumps_17g(doc)


def scene_from_json(text: str) -> Scene:
    doc = json.loads(text)
    dom = doc["domain"]
    domain = DomainBox(
        position_lo=dom["position"][0], position_hi=dom["position"][1],
        color_lo=dom["color"][0], color_hi=dom["color"][1],
        alpha_lo=dom["alpha"][0], alpha_hi=dom["alpha"][1],
        cov_eig_lo=dom["cov_eig"][0], cov_eig_hi=dom["cov_eig"][1],
    )
    blocks = tuple(
        SplatBlock(position=np.array(b["position"]), cov=np.array(b["cov"]),
                   color=np.array(b["color"]), alpha=float(b["alpha"]))
        for b in doc["blocks"]
    )
    return Scene(blocks, domain)
