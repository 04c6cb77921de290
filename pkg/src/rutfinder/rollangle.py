"""Roll-angle estimation by golden section search on the column-fit energy.

For a candidate roll ``theta`` every valid pixel is rotated to
``y = v cos(theta) - u sin(theta)`` and the disparities are least-squares fit
by a parabola in ``y``. The residual sum of squares is smallest when the
rotation undoes the rig roll, because each rotated row then carries a single
road disparity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._kernels import parabola_fit, rotated_parabola_energy
from .errors import DegenerateGeometryError
from .grid import DisparityMap

KAPPA = (math.sqrt(5.0) - 1.0) / 2.0
DEFAULT_EPS_THETA = math.pi / 18000.0
SUBSAMPLE_THRESHOLD = 1_000_000


class ColumnFitSample(NamedTuple):
    y: float
    d: float


@dataclass(frozen=True)
class RollEstimate:
    theta: float
    energy: float
    iterations: int
    brackets: tuple[tuple[float, float], ...] = field(default=(), repr=False)


def fit_energy(y, d) -> tuple[np.ndarray, float]:
    """Least-squares parabola ``d ~ a0 + a1 y + a2 y^2`` and its residual energy.

    Returns ``(alpha, energy)``. Raises :class:`DegenerateGeometryError` with
    fewer than three distinct ``y`` values.
    """
    y = np.ascontiguousarray(y, dtype=np.float64).ravel()
    d = np.ascontiguousarray(d, dtype=np.float64).ravel()
    if y.shape != d.shape:
        raise ValueError("y and d must have the same length")
    if y.size < 3 or (y.size <= 64 and np.unique(y).size < 3):
        raise DegenerateGeometryError("parabola fit needs at least 3 distinct y values")
    center = 0.5 * (y.max() + y.min())
    scale = 0.5 * (y.max() - y.min()) or 1.0
    b0, b1, b2, energy, ok = parabola_fit((y - center) / scale, d)
    if not ok:
        raise DegenerateGeometryError("parabola fit needs at least 3 distinct y values")
    # back from z = (y - center) / scale
    alpha = np.array(
        [
            b0 - b1 * center / scale + b2 * center**2 / scale**2,
            b1 / scale - 2.0 * b2 * center / scale**2,
            b2 / scale**2,
        ]
    )
    return alpha, float(energy)


class _RollProblem:
    """Valid-pixel coordinates prepared once for many energy evaluations."""

    def __init__(self, dmap: DisparityMap, roi=None, stride: int | None = None):
        px = dmap.pixels
        keep = np.ones(px.d.size, dtype=bool) if roi is None else np.asarray(roi, dtype=bool)[px.rows, px.cols]
        if stride is None:
            stride = 2 if np.count_nonzero(keep) > SUBSAMPLE_THRESHOLD else 1
        if stride < 1:
            raise ValueError("stride must be >= 1")
        if stride > 1:
            keep &= (px.rows % stride == 0) & (px.cols % stride == 0)
        if np.count_nonzero(keep) < 3:
            raise DegenerateGeometryError("fewer than 3 valid pixels for the roll fit")
        u, v = px.u[keep], px.v[keep]
        self.scale = max(math.hypot(np.abs(u).max(), np.abs(v).max()), 1.0)
        self.u = u / self.scale
        self.v = v / self.scale
        self.d = px.d[keep]
        self.stride = stride

    def energy(self, theta: float) -> float:
        *_, energy, ok = rotated_parabola_energy(self.u, self.v, self.d, math.cos(theta), math.sin(theta))
        if not ok:
            raise DegenerateGeometryError("rotated rows take fewer than 3 distinct y values")
        return float(energy)

    def safe_energy(self, theta: float) -> float:
        try:
            return self.energy(theta)
        except DegenerateGeometryError:
            return math.inf


def energy_at(dmap: DisparityMap, theta: float, roi=None, stride: int | None = 1) -> float:
    """Minimum parabola-fit energy of the map rotated by ``theta``.

    ``stride=None`` subsamples every other row/column on maps with more than
    a million valid pixels; the default ``1`` uses every valid pixel.
    """
    return _RollProblem(dmap, roi, stride).energy(theta)


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi/2, pi/2]; the energy has period pi."""
    t = math.fmod(theta + math.pi / 2, math.pi)
    if t <= 0:
        t += math.pi
    return t - math.pi / 2


def golden_section(f, lo: float, hi: float, eps: float):
    """Shrink [lo, hi] by the golden ratio until its width is at most ``eps``.

    Probes follow ``t3 = k lo + (1-k) hi`` and ``t4 = k hi + (1-k) lo``; the
    surviving interior probe is reused on the next step. Returns the final
    bracket, the shrink count and the list of brackets after every step.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    a, b = lo, hi
    brackets = [(a, b)]
    if b - a <= eps:
        return a, b, 0, brackets
    t3 = KAPPA * a + (1 - KAPPA) * b
    t4 = KAPPA * b + (1 - KAPPA) * a
    e3, e4 = f(t3), f(t4)
    n = 0
    while b - a > eps:
        if e3 > e4:
            a = t3
            t3, e3 = t4, e4
            t4 = KAPPA * b + (1 - KAPPA) * a
            e4 = f(t4)
        else:
            b = t4
            t4, e4 = t3, e3
            t3 = KAPPA * a + (1 - KAPPA) * b
            e3 = f(t3)
        n += 1
        brackets.append((a, b))
    return a, b, n, brackets


def estimate_roll(
    dmap: DisparityMap,
    eps_theta: float = DEFAULT_EPS_THETA,
    prescan_count: int = 16,
    roi=None,
    stride: int | None = None,
    bracket: tuple[float, float] | None = None,
) -> RollEstimate:
    """Estimate the roll angle in (-pi/2, pi/2].

    With ``prescan_count > 0`` the energy is first probed at that many equally
    spaced angles and the search bracket narrowed to the neighbours of the
    best probe; ``prescan_count=0`` searches the whole interval. An explicit
    ``bracket`` replaces both and is searched directly.
    """
    if eps_theta <= 0:
        raise ValueError("eps_theta must be positive")
    if prescan_count < 0:
        raise ValueError("prescan_count must be >= 0")
    problem = _RollProblem(dmap, roi, stride)
    f = problem.safe_energy

    lo, hi = -math.pi / 2, math.pi / 2
    if bracket is not None:
        lo, hi = bracket
        if not hi > lo:
            raise ValueError("bracket must satisfy lo < hi")
    elif prescan_count > 0:
        step = math.pi / prescan_count
        probes = [lo + (i + 1) * step for i in range(prescan_count)]
        energies = [f(t) for t in probes]
        if all(math.isinf(e) for e in energies):
            raise DegenerateGeometryError("degenerate geometry at every probed angle")
        best = int(np.argmin(energies))
        half = min(step, math.pi / 2)
        lo, hi = probes[best] - half, probes[best] + half

    a, b, n, brackets = golden_section(f, lo, hi, eps_theta)
    theta = wrap_angle(0.5 * (a + b))
    energy = f(theta)
    if math.isinf(energy):
        raise DegenerateGeometryError("degenerate geometry at every probed angle")
    return RollEstimate(theta, energy, n, tuple(brackets))
