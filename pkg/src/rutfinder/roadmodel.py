"""Road disparity projection model from the y-disparity histogram.

The map is rotated by the estimated roll, every valid pixel is binned by
(disparity bin, rotated row), and a dynamic program traces the strongest
monotone path through the histogram. A multi-tolerance RANSAC over the path
points yields the parabola coefficients ``alpha`` of ``d = a0 + a1 y + a2 y^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import band_refit
from .errors import DegenerateGeometryError, DegenerateInputError
from .grid import DisparityMap, rotated_y
from .ransac import inlier_ratio, select_trial, tolerance_schedule
from .rollangle import RollEstimate, fit_energy


@dataclass(frozen=True)
class YDisparityMap:
    """Counts indexed ``bins[d_index, row_index]``.

    Disparity bin ``i`` is centered on ``(d_first + i) * d_bin_width`` and row
    ``j`` on the rotated coordinate ``y_first + j``.
    """

    bins: np.ndarray
    d_bin_width: float
    d_first: int
    y_first: int

    @property
    def d_centers(self) -> np.ndarray:
        return (self.d_first + np.arange(self.bins.shape[0])) * self.d_bin_width

    @property
    def rows(self) -> np.ndarray:
        return self.y_first + np.arange(self.bins.shape[1])

    @property
    def d_min(self) -> float:
        return float(self.d_centers[0])

    @property
    def d_max(self) -> float:
        return float(self.d_centers[-1])


@dataclass(frozen=True)
class TargetPath:
    d: np.ndarray
    y: np.ndarray
    counts: np.ndarray = field(repr=False)
    energy: float = 0.0

    def __len__(self) -> int:
        return len(self.d)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.d.tolist(), self.y.tolist()))

    def supported(self) -> "TargetPath":
        """Drop path points that sit on empty histogram cells."""
        keep = self.counts > 0
        return TargetPath(self.d[keep], self.y[keep], self.counts[keep], self.energy)


@dataclass(frozen=True)
class RoadProjectionModel:
    alpha: np.ndarray
    theta: float
    inlier_ratio: float = math.inf

    def evaluate(self, y):
        a0, a1, a2 = self.alpha
        return a0 + a1 * y + a2 * y * y

    def model_disparity(self, dmap: DisparityMap) -> np.ndarray:
        uu, vv = dmap.centered_grid()
        return self.evaluate(rotated_y(uu, vv, self.theta))


def build_ydisparity(
    dmap: DisparityMap,
    theta: float,
    d_bin_width: float = 1.0,
    d_range: tuple[float, float] | None = None,
) -> YDisparityMap:
    """Histogram of (round(d / width), round(rotated y)) over valid pixels.

    With ``d_range`` given, pixels whose bin center falls outside it are left out.
    """
    if d_bin_width <= 0:
        raise ValueError("d_bin_width must be positive")
    px = dmap.pixels
    if px.d.size == 0:
        raise DegenerateInputError("empty disparity map")
    yi = np.rint(rotated_y(px.u, px.v, theta)).astype(np.int64)
    di = np.rint(px.d / d_bin_width).astype(np.int64)
    if d_range is not None:
        lo = math.ceil(d_range[0] / d_bin_width - 1e-9)
        hi = math.floor(d_range[1] / d_bin_width + 1e-9)
        keep = (di >= lo) & (di <= hi)
        di, yi = di[keep], yi[keep]
        if di.size == 0:
            raise DegenerateInputError("no disparities inside d_range")
    d_first, y_first = int(di.min()), int(yi.min())
    shape = (int(di.max()) - d_first + 1, int(yi.max()) - y_first + 1)
    flat = (di - d_first) * shape[1] + (yi - y_first)
    bins = np.bincount(flat, minlength=shape[0] * shape[1]).reshape(shape)
    return YDisparityMap(bins, float(d_bin_width), d_first, y_first)


def extract_path(ydisp: YDisparityMap, smoothness: float = 16.0, tau_max: int = 10) -> TargetPath:
    """Minimum-energy monotone path, one row per disparity bin.

    ``E(d, y) = -m(d, y) + min_{0 <= tau <= tau_max} [E(d + 1, y + tau) + smoothness * tau]``,
    solved backwards from the largest disparity bin; the path starts at the
    lowest-energy row of the smallest bin and follows the stored steps.
    Ties resolve to the lowest row and the smallest step.
    """
    if smoothness < 0:
        raise ValueError("smoothness must be >= 0")
    if tau_max < 1:
        raise ValueError("tau_max must be >= 1")
    m = ydisp.bins
    if not m.any():
        raise DegenerateInputError("all-zero y-disparity histogram")
    n_d, n_y = m.shape
    neg = -m.astype(np.float64)
    energy = np.empty((n_d, n_y))
    step = np.zeros((n_d, n_y), dtype=np.int64)
    energy[-1] = neg[-1]
    for i in range(n_d - 2, -1, -1):
        nxt = energy[i + 1]
        best = nxt.copy()  # tau = 0
        best_tau = np.zeros(n_y, dtype=np.int64)
        for tau in range(1, min(tau_max, n_y - 1) + 1):
            cand = np.full(n_y, np.inf)
            cand[: n_y - tau] = nxt[tau:] + smoothness * tau
            better = cand < best
            best[better] = cand[better]
            best_tau[better] = tau
        energy[i] = neg[i] + best
        step[i] = best_tau
    y_idx = np.empty(n_d, dtype=np.int64)
    y_idx[0] = int(np.argmin(energy[0]))
    for i in range(n_d - 1):
        y_idx[i + 1] = y_idx[i] + step[i, y_idx[i]]
    d_idx = np.arange(n_d)
    return TargetPath(
        d=ydisp.d_centers.astype(np.float64),
        y=(ydisp.y_first + y_idx).astype(np.float64),
        counts=m[d_idx, y_idx],
        energy=float(energy[0, y_idx[0]]),
    )


def path_energy(ydisp: YDisparityMap, y_rows, smoothness: float) -> float:
    """Energy of an explicit path given its row coordinate per disparity bin."""
    idx = np.asarray(y_rows, dtype=np.int64) - ydisp.y_first
    steps = np.diff(idx)
    return float(-ydisp.bins[np.arange(len(idx)), idx].sum() + smoothness * steps.sum())


def _parabola_design(y: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones_like(y), y, y * y])


def estimate_alpha(
    path: TargetPath,
    t: int = 50,
    p: int = 3,
    eps_alpha: float = 4.0,
    s: int = 4,
    seed: int | np.random.Generator = 42,
    theta: float = 0.0,
) -> RoadProjectionModel:
    """RANSAC fit of ``d = a0 + a1 y + a2 y^2`` over the target path.

    Each of ``t`` successful trials fits ``p`` random path points; samples
    with fewer than three distinct rows are redrawn and do not count.
    """
    if p < 3:
        raise ValueError("p must be >= 3")
    order = np.lexsort((path.y, path.d))
    d = np.asarray(path.d, dtype=np.float64)[order]
    y = np.asarray(path.y, dtype=np.float64)[order]
    n = d.size
    if n < p:
        raise DegenerateInputError(f"path has {n} points, need at least {p}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    tols = tolerance_schedule(eps_alpha, s)
    V = _parabola_design(y)

    models, etas, res_sums = [], [], []
    attempts = 0
    while len(models) < t and attempts < 20 * t:
        attempts += 1
        idx = rng.choice(n, size=p, replace=False)
        try:
            alpha, _ = fit_energy(y[idx], d[idx])
        except DegenerateGeometryError:
            continue
        resid = np.abs(d - V @ alpha)
        row = []
        for tol in tols:
            n_in = int(np.count_nonzero(resid <= tol))
            row.append(inlier_ratio(n_in, n - n_in))
        models.append(alpha)
        etas.append(row)
        res_sums.append(float(resid[resid <= tols[-1]].sum()))
    if not models:
        raise DegenerateGeometryError("every RANSAC sample was degenerate")
    sel = select_trial(np.array(etas), models, np.array(res_sums))
    return RoadProjectionModel(models[sel.trial], theta, etas[sel.trial][-1])


def refine_alpha(
    dmap: DisparityMap,
    model: RoadProjectionModel,
    eps_alpha: float = 4.0,
    s: int = 4,
) -> tuple[RoadProjectionModel, np.ndarray]:
    """Re-fit ``alpha`` on the map's own pixels with a shrinking inlier band.

    For each tolerance ``eps_alpha / 2**(j-1)`` the pixels within it of the
    current model are least-squares fit. Returns the refined model and the
    final inlier mask.
    """
    rows, cols, u, v, d = dmap.pixels
    y = rotated_y(u, v, model.theta)
    tols = tolerance_schedule(eps_alpha, s)
    # work in z = y / scale so the refit stays well conditioned
    scale = max(float(np.abs(y).max()), 1.0)
    a0, a1, a2 = (float(x) for x in model.alpha)
    b0, b1, b2, _ = band_refit(y / scale, d, a0, a1 * scale, a2 * scale * scale, tols)
    alpha = np.array([b0, b1 / scale, b2 / scale**2])
    keep = np.abs(d - (alpha[0] + alpha[1] * y + alpha[2] * y * y)) <= tols[-1]
    n_in = int(np.count_nonzero(keep))
    mask = np.zeros(dmap.shape, dtype=bool)
    mask[rows[keep], cols[keep]] = True
    return RoadProjectionModel(alpha, model.theta, inlier_ratio(n_in, d.size - n_in)), mask


@dataclass(frozen=True)
class RoadModelResult:
    model: RoadProjectionModel
    roll: RollEstimate
    ydisparity: YDisparityMap = field(repr=False)
    path: TargetPath = field(repr=False)
    inliers: np.ndarray | None = field(repr=False, default=None)
    rolls: tuple = ()


def estimate_road_model(dmap: DisparityMap, config=None, timer=None) -> RoadModelResult:
    """Roll angle, y-disparity path and RANSAC parabola for one frame.

    With ``config.refine_alpha`` the parabola is re-fit on the map's pixels;
    each of ``config.roll_refinements`` rounds then re-estimates the roll on
    the pixels that agree with the current model, searching within
    ``config.roll_refine_window`` of the previous angle, and repeats the fit,
    so potholes stop pulling on the roll estimate.
    """
    from .config import RunConfig
    from .rollangle import estimate_roll

    cfg = config or RunConfig()
    run = timer.run if timer is not None else (lambda _stage, fn, *a, **k: fn(*a, **k))
    roi = None
    bracket = None
    rolls = []
    for round_ in range(cfg.roll_refinements + 1):
        roll = run(
            "roll",
            estimate_roll,
            dmap,
            cfg.eps_theta,
            cfg.prescan_count,
            roi=roi,
            stride=cfg.roll_stride,
            bracket=bracket,
        )
        rolls.append(roll)
        ydisp = run("ydisparity", build_ydisparity, dmap, roll.theta, cfg.d_bin_width)
        path = run("path", extract_path, ydisp, cfg.smoothness, cfg.tau_max)
        model = run(
            "alpha",
            estimate_alpha,
            path.supported(),
            cfg.ransac_iterations,
            cfg.sample_size,
            cfg.eps_alpha,
            cfg.halvings,
            cfg.seed,
            roll.theta,
        )
        inliers = None
        if cfg.refine_alpha or round_ < cfg.roll_refinements:
            refined, inliers = run("alpha", refine_alpha, dmap, model, cfg.eps_alpha, cfg.halvings)
            if cfg.refine_alpha:
                model = refined
        if round_ < cfg.roll_refinements:
            if np.count_nonzero(inliers) < 3:
                break
            roi = inliers
            bracket = (roll.theta - cfg.roll_refine_window, roll.theta + cfg.roll_refine_window)
    return RoadModelResult(model, roll, ydisp, path, inliers, tuple(rolls))
