"""Transformation spread, pixel metrics and the (eps_d, w) parameter sweep."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .detect import EIGHT, clean_and_label, fill_holes
from .errors import DegenerateInputError, DisparityIOError


def sigma_d(values) -> float:
    """Population standard deviation of transformed disparities."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("sigma_d needs at least two values")
    mean = x.sum() / x.size
    return float(np.sqrt(np.sum((x - mean) ** 2) / x.size))


@dataclass(frozen=True)
class MetricsReport:
    n_tp: int
    n_fp: int
    n_fn: int
    n_tn: int
    precision: float | None
    recall: float | None
    f_score: float | None
    accuracy: float | None
    sigma_d: float | None = None
    n_pd: int | None = None
    n_pd_detected: int | None = None

    @property
    def n_evaluated(self) -> int:
        return self.n_tp + self.n_fp + self.n_fn + self.n_tn

    @property
    def delta_n_pd(self) -> int | None:
        if self.n_pd is None or self.n_pd_detected is None:
            return None
        return abs(self.n_pd_detected - self.n_pd)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["delta_n_pd"] = self.delta_n_pd
        return d


def _div(a: int, b: int) -> float | None:
    return a / b if b else None


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int, **extra) -> MetricsReport:
    precision = _div(tp, tp + fp)
    recall = _div(tp, tp + fn)
    if precision is not None and recall is not None and precision + recall > 0:
        f = 2 * precision * recall / (precision + recall)
    elif precision is not None and recall is not None:
        f = 0.0
    else:
        f = None
    return MetricsReport(tp, fp, fn, tn, precision, recall, f, _div(tp + tn, tp + fp + fn + tn), **extra)


def pixel_metrics(pred, gt, eval_mask=None, **extra) -> MetricsReport:
    """Confusion counts over ``eval_mask`` (default: every pixel).

    Ratios with a zero denominator come back as ``None``.
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    m = np.ones(pred.shape, dtype=bool) if eval_mask is None else np.asarray(eval_mask, dtype=bool)
    if m.shape != pred.shape:
        raise ValueError(f"shape mismatch: eval_mask {m.shape} vs {pred.shape}")
    tp = int(np.count_nonzero(pred & gt & m))
    fp = int(np.count_nonzero(pred & ~gt & m))
    fn = int(np.count_nonzero(~pred & gt & m))
    tn = int(np.count_nonzero(~pred & ~gt & m))
    return metrics_from_counts(tp, fp, fn, tn, **extra)


def aggregate(reports) -> MetricsReport:
    """Pooled confusion counts and summed pothole counts over frames."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    tp = sum(r.n_tp for r in reports)
    fp = sum(r.n_fp for r in reports)
    fn = sum(r.n_fn for r in reports)
    tn = sum(r.n_tn for r in reports)
    n_pd = sum(r.n_pd for r in reports) if all(r.n_pd is not None for r in reports) else None
    det = (
        sum(r.n_pd_detected for r in reports)
        if all(r.n_pd_detected is not None for r in reports)
        else None
    )
    return metrics_from_counts(tp, fp, fn, tn, n_pd=n_pd, n_pd_detected=det)


def count_components(mask) -> int:
    """8-connected component count."""
    _, n = ndimage.label(np.asarray(mask, dtype=bool), structure=EIGHT)
    return int(n)


# -- sweep -------------------------------------------------------------------


def sweep_values(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive arithmetic range, robust to float accumulation."""
    if step <= 0 or hi < lo:
        raise ValueError("need step > 0 and hi >= lo")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 10)


@dataclass(frozen=True)
class SweepResult:
    eps_d: np.ndarray
    w: np.ndarray
    delta: np.ndarray  # (len(eps_d), len(w)) summed |detected - expected|
    counts: np.ndarray = None  # (frames, len(eps_d), len(w))

    @property
    def minimum(self) -> int:
        return int(self.delta.min())

    @property
    def argmin(self) -> list[tuple[float, int]]:
        """Every minimizing (eps_d, w) pair in row-major order."""
        i, j = np.nonzero(self.delta == self.delta.min())
        return [(float(self.eps_d[a]), int(self.w[b])) for a, b in zip(i, j)]

    def write_csv(self, path) -> None:
        try:
            with open(path, "w", newline="") as fh:
                out = csv.writer(fh, lineterminator="\n")
                out.writerow(["eps_d", "w", "sum_delta_n_pd"])
                for a, e in enumerate(self.eps_d):
                    for b, w in enumerate(self.w):
                        out.writerow([f"{e:.10g}", int(w), int(self.delta[a, b])])
        except OSError as exc:
            raise DisparityIOError(f"cannot write {path}: {exc}") from exc


def frame_counts(depth: np.ndarray, valid: np.ndarray, eps_values, w_values) -> np.ndarray:
    """Pothole count for every (eps_d, w) on one frame's depth residual map.

    Equivalent to ``clean_and_label(valid & (depth > eps_d), w).count``.
    Components are labeled once per ``eps_d``; when hole filling merges or
    swallows nothing with every candidate kept, it cannot do so for any
    subset either, and the count is just the number of components >= w.
    """
    depth = np.asarray(depth, dtype=np.float64)
    out = np.zeros((len(eps_values), len(w_values)), dtype=np.int64)
    w_arr = np.asarray(w_values, dtype=np.int64)
    w_min = int(w_arr.min())
    for a, eps in enumerate(eps_values):
        with np.errstate(invalid="ignore"):
            marked = valid & (depth > eps)
        labels, n = ndimage.label(marked, structure=EIGHT)
        if n == 0:
            continue
        sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
        big = sizes >= w_min
        keep_all = np.zeros(n + 1, dtype=bool)
        keep_all[1:] = big
        kept = keep_all[labels]
        n_big = int(np.count_nonzero(big))
        if n_big == 0:
            continue
        if count_components(fill_holes(kept)) == n_big:
            out[a] = (sizes[None, :] >= w_arr[:, None]).sum(axis=1)
        else:
            cache: dict[int, int] = {}
            for b, w in enumerate(w_arr):
                n_kept = int(np.count_nonzero(sizes >= w))
                if n_kept not in cache:
                    cache[n_kept] = clean_and_label(marked, int(w)).count if n_kept else 0
                out[a, b] = cache[n_kept]
    return out


def param_sweep(
    frames,
    eps_d_range=(3.0, 8.5, 0.1),
    w_range=(100, 5000, 100),
) -> SweepResult:
    """Brute-force (eps_d, w) search.

    ``frames`` yields ``(depth, valid, expected_count)`` where ``depth`` is
    the frame's fitted surface minus its disparities; the surface fit does
    not depend on either parameter, so it is computed once per frame.
    """
    eps_values = sweep_values(*eps_d_range)
    w_values = sweep_values(*w_range).astype(np.int64)
    per_frame = []
    expected = []
    for depth, valid, n_expected in frames:
        per_frame.append(frame_counts(depth, valid, eps_values, w_values))
        expected.append(int(n_expected))
    if not per_frame:
        raise DegenerateInputError("empty dataset")
    counts = np.stack(per_frame)
    delta = np.abs(counts - np.asarray(expected)[:, None, None]).sum(axis=0)
    return SweepResult(eps_values, w_values, delta, counts)


def load_frame_set(directory, suffix: str) -> dict[str, Path]:
    """Map stem -> path for files named ``<stem><suffix>`` in ``directory``."""
    d = Path(directory)
    if not d.is_dir():
        raise DisparityIOError(f"no such directory: {d}")
    return {p.name[: -len(suffix)]: p for p in sorted(d.glob(f"*{suffix}"))}
