"""Surface normals in (u, v, d) space and the robust quadratic disparity surface."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._kernels import inlier_residual_sum, plane_pca_normals, score_surface
from .errors import DegenerateFieldError, DegenerateGeometryError, DegenerateInputError
from .grid import DisparityMap, centered_grid
from .ransac import inlier_ratio, select_trial, tolerance_schedule

# Symmetric grid stencils: k -> (row, col) offsets, center excluded.
STENCILS = {
    4: [(-1, 0), (0, -1), (0, 1), (1, 0)],
    8: [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)],
    24: [(dr, dc) for dr in range(-2, 3) for dc in range(-2, 3) if (dr, dc) != (0, 0)],
}


@dataclass(frozen=True)
class NormalField:
    normals: np.ndarray  # (H, W, 3), NaN where undefined
    defined: np.ndarray  # (H, W) bool
    k: int

    @cached_property
    def _vectors(self) -> np.ndarray:
        return self.normals[self.defined]

    def vectors(self) -> np.ndarray:
        """Defined normals as an (n, 3) array in raster order."""
        return self._vectors


@dataclass(frozen=True)
class OptimalNormal:
    n_hat: np.ndarray
    phi1: float
    phi2: float
    energy: float


@dataclass(frozen=True)
class QuadraticSurface:
    """``g(u,v) = c0 + c1 u + c2 v + c3 u^2 + c4 v^2 + c5 u v`` in centered coordinates."""

    c: np.ndarray
    inlier_ratio: float
    tolerance_final: float
    block_size: int
    n_blocks: int = 0
    inlier_mask: np.ndarray | None = field(default=None, repr=False)

    def evaluate(self, u, v):
        c0, c1, c2, c3, c4, c5 = self.c
        return c0 + c1 * u + c2 * v + c3 * u * u + c4 * v * v + c5 * u * v

    def model_disparity(self, shape: tuple[int, int]) -> np.ndarray:
        uu, vv = centered_grid(shape[1], shape[0])
        return self.evaluate(uu, vv)


def estimate_normals(dmap: DisparityMap, mask=None, k: int = 8) -> NormalField:
    """PlanePCA normals from each pixel and its ``k`` grid neighbours.

    Only pixels whose whole stencil lies inside ``mask`` (and the valid
    mask) get a normal. With symmetric stencils the centered scatter matrix
    is ``[[s, 0, a], [0, s, b], [a, b, c]]`` with ``s = sum(du^2)``, so its
    smallest eigenvector is ``(-a, -b, s - lambda_min)`` in closed form,
    already oriented to ``n_d > 0``.
    """
    if k not in STENCILS:
        raise ValueError(f"neighborhood size k must be one of {sorted(STENCILS)}")
    offsets = np.array(STENCILS[k], dtype=np.int64)
    pad = int(np.abs(offsets).max())
    m = dmap.valid if mask is None else dmap.valid & np.asarray(mask, dtype=bool)
    mp = np.pad(m, pad, constant_values=False)
    dp = np.pad(np.where(dmap.valid, dmap.data, 0.0), pad)
    normals, defined = plane_pca_normals(
        dp, mp, np.ascontiguousarray(offsets[:, 0]), np.ascontiguousarray(offsets[:, 1]), pad
    )
    return NormalField(normals, defined, k)


def _spherical(phi1: float, phi2: float) -> np.ndarray:
    return np.array(
        [math.sin(phi1) * math.cos(phi2), math.sin(phi1) * math.sin(phi2), math.cos(phi1)]
    )


def optimal_normal(field_or_vectors) -> OptimalNormal:
    """Direction minimizing ``E2 = -sum_i n_i . n_hat`` over the unit sphere.

    ``phi2 = arctan(sum n_v / sum n_u) + k pi`` for k in {0, 1}; each branch
    fixes ``phi1`` through ``tan(phi1) = (sum n_u cos phi2 + sum n_v sin phi2) / sum n_d``
    and the lower-energy candidate wins.
    """
    if isinstance(field_or_vectors, NormalField):
        vecs = field_or_vectors.vectors()
    else:
        vecs = np.asarray(field_or_vectors, dtype=np.float64).reshape(-1, 3)
    if vecs.shape[0] == 0:
        raise DegenerateFieldError("empty normal field")
    su, sv, sd = vecs.sum(axis=0)
    total = np.array([su, sv, sd])
    scale = np.abs(vecs).sum()
    if np.linalg.norm(total) <= 1e-12 * scale:
        raise DegenerateFieldError("normals cancel out, no optimal direction")

    if su != 0:
        base = math.atan(sv / su)
    else:
        base = math.pi / 2 if sv != 0 else 0.0
    candidates = []
    for kk in (0, 1):
        phi2 = math.fmod(base + kk * math.pi, 2 * math.pi)
        if phi2 < 0:
            phi2 += 2 * math.pi
        num = su * math.cos(phi2) + sv * math.sin(phi2)
        if sd == 0:
            phi1s = [math.pi / 2]
        elif num == 0:
            phi1s = [0.0, math.pi]
        else:
            phi1s = [math.fmod(math.atan(num / sd) + math.pi, math.pi)]
        for phi1 in phi1s:
            n_hat = _spherical(phi1, phi2)
            candidates.append((-float(n_hat @ total), phi1, phi2, n_hat))
    candidates.sort(key=lambda t: t[0])
    best = candidates[0]
    for other in candidates[1:]:
        if abs(other[0] - best[0]) <= 1e-12 * scale and not np.allclose(other[3], best[3]):
            raise DegenerateFieldError("two spherical branches give the same energy")
    return OptimalNormal(best[3], best[1], best[2], best[0])


def filter_by_normal(field: NormalField, n_hat, eps_n: float = math.pi / 36) -> np.ndarray:
    """Pixels whose normal lies within ``eps_n`` of ``n_hat`` (closed threshold)."""
    if not 0 < eps_n < math.pi / 2:
        raise ValueError("eps_n must lie in (0, pi/2)")
    n = np.asarray(n_hat.n_hat if isinstance(n_hat, OptimalNormal) else n_hat, dtype=np.float64)
    keep = np.zeros(field.defined.shape, dtype=bool)
    vecs = field.vectors()
    dots = np.clip(vecs @ n, -1.0, 1.0)
    angle = np.arccos(dots)
    keep[field.defined] = (angle <= eps_n) | (dots >= math.cos(eps_n))
    return keep


def _surface_design(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(u), u, v, u * u, v * v, u * v])


def _unscale(coef: np.ndarray, sc: float) -> np.ndarray:
    return coef / np.array([1.0, sc, sc, sc * sc, sc * sc, sc * sc])


def fit_quadratic(u, v, d) -> np.ndarray:
    """Least-squares surface coefficients (orthogonal solver, scaled coordinates)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    sc = max(float(np.abs(u).max(initial=0)), float(np.abs(v).max(initial=0)), 1.0)
    W = _surface_design(u / sc, v / sc)
    coef, _, rank, _ = np.linalg.lstsq(W, np.asarray(d, dtype=np.float64), rcond=None)
    if rank < 6:
        raise DegenerateGeometryError("rank-deficient quadratic surface fit")
    return _unscale(coef, sc)


def _blocks(mask: np.ndarray, r: int):
    rows, cols = np.nonzero(mask)
    nbx = -(-mask.shape[1] // r)
    block = (rows // r) * nbx + (cols // r)
    order = np.argsort(block, kind="stable")
    counts = np.bincount(block)
    occupied = np.nonzero(counts)[0]
    starts = np.concatenate([[0], np.cumsum(counts)])[occupied]
    return rows[order], cols[order], starts, counts[occupied]


def fit_surface(
    dmap: DisparityMap,
    inlier_mask,
    r: int = 125,
    t: int = 50,
    eps_c0: float = 4.0,
    s: int = 4,
    seed: int | np.random.Generator = 42,
) -> QuadraticSurface:
    """Block-sampled RANSAC fit of the quadratic disparity surface.

    The map is cut into ``r x r`` blocks; every trial draws one masked pixel
    per occupied block, fits the six coefficients, and is scored by the
    inlier/outlier ratio over all masked pixels at each tolerance of the
    halving schedule starting from ``eps_c0``.
    """
    if r < 1:
        raise ValueError("block size r must be >= 1")
    mask = dmap.valid & np.asarray(inlier_mask, dtype=bool)
    rows, cols, starts, counts = _blocks(mask, r)
    if counts.size < 6:
        raise DegenerateInputError(f"only {counts.size} blocks hold masked pixels, need 6")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    tols = tolerance_schedule(eps_c0, s)
    tols_arr = np.asarray(tols, dtype=np.float64)

    sc = max((dmap.width - 1) / 2, (dmap.height - 1) / 2, 1.0)
    un = (cols - (dmap.width - 1) / 2) / sc
    vn = (rows - (dmap.height - 1) / 2) / sc
    d = np.ascontiguousarray(dmap.data[rows, cols])
    n = d.size
    # raster-ordered copy for scoring, grouped by row
    r_rows, r_cols = np.nonzero(mask)
    r_un = (r_cols - (dmap.width - 1) / 2) / sc
    r_d = np.ascontiguousarray(dmap.data[r_rows, r_cols])
    occupied = np.nonzero(np.bincount(r_rows, minlength=dmap.height))[0]
    row_v = (occupied - (dmap.height - 1) / 2) / sc
    row_start = np.searchsorted(r_rows, np.append(occupied, dmap.height))

    models, etas, scaled = [], [], []
    attempts = 0
    while len(models) < t and attempts < 20 * t:
        attempts += 1
        pick = starts + (rng.random(counts.size) * counts).astype(np.int64)
        W = _surface_design(un[pick], vn[pick])
        coef, _, rank, _ = np.linalg.lstsq(W, d[pick], rcond=None)
        if rank < 6:
            continue
        counts_in = score_surface(row_v, row_start, r_un, r_d, coef, tols_arr)
        etas.append([inlier_ratio(int(c), n - int(c)) for c in counts_in])
        scaled.append(coef)
        models.append(_unscale(coef, sc))
    if not models:
        raise DegenerateGeometryError("every RANSAC sample was rank-deficient")
    sel = select_trial(
        np.array(etas),
        models,
        lambda i: inlier_residual_sum(row_v, row_start, r_un, r_d, scaled[i], tols_arr[-1]),
    )
    coef = scaled[sel.trial]
    c0, c1, c2, c3, c4, c5 = coef
    resid = np.abs(d - (c0 + un * (c1 + c3 * un + c5 * vn) + vn * (c2 + c4 * vn)))
    inliers = np.zeros(dmap.shape, dtype=bool)
    keep = resid <= tols[-1]
    inliers[rows[keep], cols[keep]] = True
    return QuadraticSurface(
        c=models[sel.trial],
        inlier_ratio=etas[sel.trial][-1],
        tolerance_final=float(tols[-1]),
        block_size=r,
        n_blocks=int(counts.size),
        inlier_mask=inliers,
    )
