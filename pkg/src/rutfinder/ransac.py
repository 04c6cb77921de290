"""Multi-tolerance RANSAC bookkeeping shared by the road and surface fits.

Each trial is scored at tolerances ``eps / 2**(j-1)`` for ``j = 1..s`` with
the inlier/outlier ratio ``eta``. The winning trial is found by scanning
columns from the loosest tolerance: stop at the first column whose highest
``eta`` is held by a single distinct model. If every column stays ambiguous,
the lowest inlier residual sum at the final tolerance decides, then the
lowest trial index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ETA_RTOL = 1e-12


def tolerance_schedule(eps: float, s: int) -> np.ndarray:
    if eps <= 0 or s < 1:
        raise ValueError("need eps > 0 and s >= 1")
    return eps / 2.0 ** np.arange(s)


def inlier_ratio(n_inlier: int, n_outlier: int) -> float:
    """``n_inlier / n_outlier``; an outlier-free trial ranks above any finite ratio."""
    if n_outlier == 0:
        return float("inf")
    return n_inlier / n_outlier


@dataclass(frozen=True)
class Selection:
    trial: int
    column: int  # 0-based column that decided, == s - 1 when tie-broken
    tie_broken: bool


def _eta_equal(a: float, b: float) -> bool:
    if np.isinf(a) or np.isinf(b):
        return a == b
    return abs(a - b) <= ETA_RTOL * max(abs(a), abs(b))


def select_trial(eta: np.ndarray, models: list[np.ndarray], residual_sums) -> Selection:
    """Pick the winning trial from a ``(trials, s)`` table of ratios.

    ``models`` holds each trial's coefficient vector; trials with bitwise
    identical coefficients count as one model. ``residual_sums`` is the sum
    of absolute inlier residuals at the final tolerance, either as an array
    or as a function of the trial index, called only when a tie needs it.
    """
    eta = np.asarray(eta, dtype=np.float64)
    n_trials, s = eta.shape
    if n_trials == 0:
        raise ValueError("no trials to select from")
    leaders: list[int] = []
    for j in range(s):
        col = eta[:, j]
        best = col.max()
        leaders = [i for i in range(n_trials) if _eta_equal(col[i], best)]
        distinct = {models[i].tobytes() for i in leaders}
        if len(distinct) == 1:
            return Selection(leaders[0], j, False)
    if callable(residual_sums):
        res = {i: float(residual_sums(i)) for i in leaders}
    else:
        res = np.asarray(residual_sums, dtype=np.float64)
    winner = min(leaders, key=lambda i: (res[i], i))
    return Selection(winner, s - 1, True)
