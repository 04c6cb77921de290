"""Pothole extraction: residual thresholding, component labeling, point clouds."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, DisparityIOError, RutfinderError
from .grid import DisparityMap

EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class LabelStats:
    label: int
    pixels: int
    bbox: tuple[int, int, int, int]  # min_col, min_row, max_col, max_row
    mean_depth: float | None


@dataclass(frozen=True)
class PotholeLabelMap:
    labels: np.ndarray
    stats: tuple[LabelStats, ...] = ()

    @property
    def count(self) -> int:
        return len(self.stats)

    @property
    def mask(self) -> np.ndarray:
        return self.labels > 0


@dataclass(frozen=True)
class StereoGeometry:
    focal_length: float
    baseline: float

    def __post_init__(self):
        if self.focal_length <= 0 or self.baseline <= 0:
            raise ValueError("focal_length and baseline must be positive")


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (n, 3) metres
    labels: np.ndarray  # (n,) 0 = road
    disparities: np.ndarray = field(repr=False, default=None)

    def __len__(self) -> int:
        return len(self.points)


def residual_mask(dmap: DisparityMap, surface, eps_d: float = 6.2) -> np.ndarray:
    """Valid pixels lying more than ``eps_d`` below the modeled surface."""
    if eps_d <= 0:
        raise ValueError("eps_d must be positive")
    resid = depression_depth(dmap, surface)
    with np.errstate(invalid="ignore"):
        return dmap.valid & (resid > eps_d)


def depression_depth(dmap: DisparityMap, surface) -> np.ndarray:
    """``g(u, v) - d(u, v)``; NaN at invalid pixels."""
    return surface.model_disparity(dmap.shape) - dmap.data


def _relabel_raster(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Renumber labels 1..N by each label's first pixel in raster order."""
    flat = labels.ravel()
    present, first = np.unique(flat, return_index=True)
    keep = present > 0
    present, first = present[keep], first[keep]
    order = present[np.argsort(first)]
    lut = np.zeros(int(flat.max(initial=0)) + 1, dtype=np.int32)
    lut[order] = np.arange(1, order.size + 1, dtype=np.int32)
    return lut[labels], int(order.size)


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Set background regions (4-connected) that do not reach the border."""
    bg, n = ndimage.label(~mask)
    if n == 0:
        return mask.copy()
    border = np.zeros(n + 1, dtype=bool)
    for edge in (bg[0], bg[-1], bg[:, 0], bg[:, -1]):
        border[edge] = True
    border[0] = True
    return mask | ~border[bg]


def clean_and_label(mask, w: int = 3100, depth=None) -> PotholeLabelMap:
    """Drop 8-connected components under ``w`` pixels, fill their holes, relabel.

    Holes are background regions (4-connected) enclosed by a component.
    ``depth`` (g - d per pixel, NaN where unknown) feeds the per-label mean.
    """
    if w < 1:
        raise ValueError("w must be >= 1")
    mask = np.asarray(mask, dtype=bool)
    labels, n = ndimage.label(mask, structure=EIGHT)
    if n:
        sizes = np.bincount(labels.ravel(), minlength=n + 1)
        big = sizes >= w
        big[0] = False
        kept = big[labels]
    else:
        kept = mask & False
    filled = fill_holes(kept)
    labels, _ = ndimage.label(filled, structure=EIGHT)
    labels, n = _relabel_raster(labels)
    return PotholeLabelMap(labels.astype(np.int32), _label_stats(labels, n, depth))


def _label_stats(labels: np.ndarray, n: int, depth) -> tuple[LabelStats, ...]:
    if n == 0:
        return ()
    idx = np.arange(1, n + 1)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    slices = ndimage.find_objects(labels, max_label=n)
    means: list[float | None] = [None] * n
    if depth is not None:
        depth = np.asarray(depth, dtype=np.float64)
        finite = np.isfinite(depth)
        lab_f = np.where(finite, labels, 0)
        sums = np.bincount(lab_f.ravel(), weights=np.where(finite, depth, 0).ravel(), minlength=n + 1)
        cnts = np.bincount(lab_f.ravel(), minlength=n + 1)
        means = [float(sums[i] / cnts[i]) if cnts[i] else None for i in idx]
    out = []
    for i, sl in zip(idx, slices):
        bbox = (sl[1].start, sl[0].start, sl[1].stop - 1, sl[0].stop - 1)
        out.append(LabelStats(int(i), int(sizes[i]), tuple(int(x) for x in bbox), means[i - 1]))
    return tuple(out)


def extract_pointcloud(
    dmap: DisparityMap,
    geom: StereoGeometry,
    labels: PotholeLabelMap,
    include_road: bool = False,
) -> PointCloud:
    """``X = u T/d, Y = v T/d, Z = f T/d`` for labeled (and optionally road) pixels.

    Points come in label order, raster order within a label; road points
    (label 0) follow when requested.
    """
    lab = labels.labels
    sel = lab > 0
    if include_road:
        sel = sel | dmap.valid
    if np.any(sel & ~dmap.valid):
        # filled holes carry no disparity measurement
        sel &= dmap.valid
    rows, cols = np.nonzero(sel)
    tags = lab[rows, cols]
    order = np.lexsort((np.arange(rows.size), np.where(tags > 0, tags, np.iinfo(np.int32).max)))
    rows, cols, tags = rows[order], cols[order], tags[order]
    d = dmap.data[rows, cols]
    if np.any(~(d > 0)):
        raise DegenerateInputError("zero or missing disparity among exported pixels")
    u = cols - (dmap.width - 1) / 2
    v = rows - (dmap.height - 1) / 2
    tc = geom.baseline
    pts = np.column_stack([u * tc / d, v * tc / d, geom.focal_length * tc / d])
    return PointCloud(pts, tags.astype(np.int32), d)


def write_ply(path, cloud: PointCloud) -> None:
    """ASCII PLY with x, y, z (float) and label (int) vertex properties."""
    header = (
        "ply\nformat ascii 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\nproperty float y\nproperty float z\nproperty int label\n"
        "end_header\n"
    )
    try:
        with open(path, "w") as fh:
            fh.write(header)
            for (x, y, z), lab in zip(cloud.points.tolist(), cloud.labels.tolist()):
                fh.write(f"{x!r} {y!r} {z!r} {lab}\n")
    except OSError as exc:
        raise DisparityIOError(f"cannot write {path}: {exc}") from exc


def read_ply(path) -> PointCloud:
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise DisparityIOError(f"cannot read {path}: {exc}") from exc
    end = lines.index("end_header")
    body = [ln.split() for ln in lines[end + 1 :] if ln.strip()]
    pts = np.array([[float(x) for x in b[:3]] for b in body]).reshape(-1, 3)
    labs = np.array([int(b[3]) for b in body], dtype=np.int32)
    return PointCloud(pts, labs)


@dataclass
class StageTimer:
    timings: dict = field(default_factory=dict)

    def run(self, stage: str, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except RutfinderError as exc:
            exc.stage = exc.stage or stage
            raise
        finally:
            self.timings[stage] = self.timings.get(stage, 0.0) + time.perf_counter() - start


@dataclass(frozen=True)
class Detection:
    labels: PotholeLabelMap
    surface: object
    report: dict
    transformed: object = field(repr=False, default=None)
    otsu: object = field(repr=False, default=None)
    normal: object = field(repr=False, default=None)
    fit_mask: np.ndarray | None = field(repr=False, default=None)
    depth: np.ndarray | None = field(repr=False, default=None)


def _ratio(eta: float):
    return "inf" if np.isinf(eta) else float(eta)


def detect_potholes(dmap: DisparityMap, model, config=None, timer: StageTimer | None = None) -> Detection:
    """Transform, segment, filter normals, fit the surface and label potholes.

    Stage errors are re-raised with ``exc.stage`` naming the failing stage.
    """
    from .config import RunConfig
    from .surface import estimate_normals, filter_by_normal, fit_surface, optimal_normal
    from .transform import otsu_segment, transform_disparities

    cfg = config or RunConfig()
    timer = timer or StageTimer()
    tmap = timer.run("transform", transform_disparities, dmap, model, cfg.delta)
    otsu = timer.run("otsu", otsu_segment, tmap, cfg.otsu_bins)
    normals = timer.run("normals", estimate_normals, dmap, otsu.undamaged_mask, cfg.neighborhood)
    best = timer.run("normals", optimal_normal, normals)
    keep = timer.run("normals", filter_by_normal, normals, best, cfg.eps_n)
    surface = timer.run(
        "surface",
        fit_surface,
        dmap,
        keep,
        cfg.block_size,
        cfg.ransac_iterations,
        cfg.eps_c0,
        cfg.halvings,
        cfg.seed,
    )
    depth = timer.run("residual", depression_depth, dmap, surface)
    with np.errstate(invalid="ignore"):
        marked = dmap.valid & (depth > cfg.eps_d)
    w = cfg.effective_min_pixels(dmap.shape)
    labels = timer.run("label", clean_and_label, marked, w, depth)
    report = {
        "theta": float(model.theta),
        "alpha": [float(x) for x in model.alpha],
        "road_inlier_ratio": _ratio(model.inlier_ratio),
        "otsu": otsu.summary(),
        "normals": {
            "n_hat": [float(x) for x in best.n_hat],
            "phi1": best.phi1,
            "phi2": best.phi2,
            "energy": best.energy,
            "defined": int(np.count_nonzero(normals.defined)),
            "kept": int(np.count_nonzero(keep)),
        },
        "surface": {
            "c": [float(x) for x in surface.c],
            "inlier_ratio": _ratio(surface.inlier_ratio),
            "tolerance_final": surface.tolerance_final,
            "block_size": surface.block_size,
            "n_blocks": surface.n_blocks,
        },
        "eps_d": cfg.eps_d,
        "min_pixels": w,
        "marked_pixels": int(np.count_nonzero(marked)),
        "potholes": [
            {
                "label": s.label,
                "pixels": s.pixels,
                "bbox": list(s.bbox),
                "mean_depth": s.mean_depth,
            }
            for s in labels.stats
        ],
    }
    return Detection(labels, surface, report, tmap, otsu, best, keep, depth)
