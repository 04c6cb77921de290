"""Disparity transformation and Otsu extraction of undamaged road pixels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeTransformError, NoThresholdError
from .grid import DisparityMap
from .roadmodel import RoadProjectionModel


@dataclass(frozen=True)
class TransformedMap:
    values: np.ndarray  # NaN at invalid pixels
    valid: np.ndarray
    delta: float
    model: RoadProjectionModel

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class OtsuResult:
    threshold: float
    inter_class_variance: float
    p0: float
    p1: float
    mu0: float
    mu1: float
    undamaged_mask: np.ndarray = field(repr=False)
    boundary: int = 0
    bin_edges: np.ndarray = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            "threshold": self.threshold,
            "inter_class_variance": self.inter_class_variance,
            "p0": self.p0,
            "p1": self.p1,
            "mu0": self.mu0,
            "mu1": self.mu1,
            "boundary": self.boundary,
            "bin_range": [float(self.bin_edges[0]), float(self.bin_edges[-1])],
        }


def transform_disparities(dmap: DisparityMap, model: RoadProjectionModel, delta: float = 30.0) -> TransformedMap:
    """``model(y) - d + delta`` per valid pixel; potholes come out above ``delta``."""
    out = model.model_disparity(dmap) - dmap.data + delta
    out[~dmap.valid] = np.nan
    vals = out[dmap.valid]
    neg = vals < 0
    if neg.any():
        raise NegativeTransformError(int(np.count_nonzero(neg)), float(vals.min()))
    return TransformedMap(out, dmap.valid.copy(), float(delta), model)


def histogram(values: np.ndarray, bins: int):
    """Uniform histogram over [min, max]; returns (bin index per value, edges)."""
    lo, hi = float(values.min()), float(values.max())
    if not hi > lo:
        raise NoThresholdError("constant transformed map, no threshold exists")
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    return idx, edges


def between_class_variance(counts: np.ndarray, sums: np.ndarray) -> np.ndarray:
    """sigma^2 for every boundary k = 1..bins-1 (class 0 = bins below k).

    Each bin contributes its count and the sum of its raw values, so class
    means are exact. Boundaries leaving a class empty score -1.
    """
    n = counts.sum()
    n0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(sums)[:-1]
    n1 = np.cumsum(counts[::-1])[::-1][1:]
    s1 = np.cumsum(sums[::-1])[::-1][1:]
    score = np.full(n0.shape, -1.0)
    ok = (n0 > 0) & (n1 > 0)
    p0 = n0[ok] / n
    p1 = n1[ok] / n
    diff = s0[ok] / n0[ok] - s1[ok] / n1[ok]
    score[ok] = p0 * p1 * diff * diff
    return score


def otsu_segment(tmap: TransformedMap, histogram_bins: int = 256) -> OtsuResult:
    """Threshold maximizing the inter-class variance of the transformed map.

    The undamaged class is the low class: a depression lowers the measured
    disparity and so raises its transformed value.
    """
    vals = tmap.values[tmap.valid]
    if vals.size < 2:
        raise NoThresholdError("fewer than two valid transformed disparities")
    idx, edges = histogram(vals, histogram_bins)
    counts = np.bincount(idx, minlength=histogram_bins)
    sums = np.bincount(idx, weights=vals, minlength=histogram_bins)
    score = between_class_variance(counts, sums)
    k = int(np.argmax(score)) + 1
    if score[k - 1] < 0:
        raise NoThresholdError("histogram has a single occupied bin")
    # boundaries separated only by empty bins give the same split; take the middle one
    end = k
    while end < histogram_bins - 1 and counts[end] == 0:
        end += 1
    k = (k + end) // 2
    low = idx < k
    n = vals.size
    n0 = int(np.count_nonzero(low))
    mu0 = float(vals[low].mean())
    mu1 = float(vals[~low].mean())
    p0 = n0 / n
    p1 = (n - n0) / n
    mask = np.zeros(tmap.shape, dtype=bool)
    mask[tmap.valid] = low
    return OtsuResult(
        threshold=float(edges[k]),
        inter_class_variance=float(score[k - 1]),
        p0=p0,
        p1=p1,
        mu0=mu0,
        mu1=mu1,
        undamaged_mask=mask,
        boundary=k,
        bin_edges=edges,
    )
