"""One-frame driver and the per-frame output files.

Files written for a frame ``<stem>``:

    <stem>_transformed.pfm   transformed disparities, NaN at invalid pixels
    <stem>_undamaged.png     Otsu's undamaged-road class (0/255)
    <stem>_labels.png        pothole labels, 8-bit paletted (16-bit past 255)
    <stem>_potholes.csv      per-label statistics
    <stem>_potholes.ply      pothole point cloud, ASCII
    <stem>_report.json       roll, road model, detection summary, config

Reports carry no timings or thread counts, so reruns are byte-identical;
those live in :attr:`FrameResult.timings`.
"""

from __future__ import annotations

import colorsys
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .config import RunConfig
from .detect import Detection, StageTimer, StereoGeometry, detect_potholes, extract_pointcloud, write_ply
from .errors import DisparityIOError
from .grid import DisparityMap, write_mask_png, write_pfm
from .roadmodel import RoadModelResult, estimate_road_model
from .rollangle import estimate_roll

OUTPUT_SUFFIXES = (
    "_transformed.pfm",
    "_undamaged.png",
    "_labels.png",
    "_potholes.csv",
    "_potholes.ply",
    "_report.json",
)
ROLL_ONLY_SUFFIXES = ("_report.json",)


@dataclass(frozen=True)
class FrameResult:
    name: str
    report: dict
    road: RoadModelResult | None = field(default=None, repr=False)
    detection: Detection | None = field(default=None, repr=False)
    timings: dict = field(default_factory=dict)


def _num(x):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def process_frame(dmap: DisparityMap, config: RunConfig | None = None, name: str = "frame", roll_only: bool = False) -> FrameResult:
    """Run the full detector (or only the roll estimate) on one map."""
    cfg = config or RunConfig()
    timer = StageTimer()
    report = {"frame": name, "shape": list(dmap.shape), "valid_pixels": dmap.n_valid}
    if roll_only:
        roll = timer.run("roll", estimate_roll, dmap, cfg.eps_theta, cfg.prescan_count, stride=cfg.roll_stride)
        report["roll"] = {"theta": roll.theta, "energy": roll.energy, "iterations": roll.iterations}
        report["config"] = cfg.to_dict()
        return FrameResult(name, report, timings=dict(timer.timings))

    road = estimate_road_model(dmap, cfg, timer)
    det = detect_potholes(dmap, road.model, cfg, timer)
    report["roll"] = {
        "theta": road.roll.theta,
        "energy": road.roll.energy,
        "iterations": road.roll.iterations,
        "rounds": [r.theta for r in road.rolls],
    }
    report["road_model"] = {
        "alpha": [float(a) for a in road.model.alpha],
        "theta": road.model.theta,
        "inlier_ratio": _num(road.model.inlier_ratio),
        "path_points": len(road.path),
    }
    report["detection"] = {k: v for k, v in det.report.items() if k not in ("theta", "alpha", "road_inlier_ratio")}
    report["pothole_count"] = det.labels.count
    report["config"] = cfg.to_dict()
    return FrameResult(name, report, road, det, dict(timer.timings))


def _palette() -> list[int]:
    pal = [0, 0, 0]
    for i in range(1, 256):
        r, g, b = colorsys.hsv_to_rgb((i * 0.618033988749895) % 1.0, 0.85, 0.95)
        pal += [int(r * 255), int(g * 255), int(b * 255)]
    return pal


def write_label_png(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    try:
        if labels.max(initial=0) <= 255:
            img = Image.fromarray(labels.astype(np.uint8), mode="P")
            img.putpalette(_palette())
        else:
            img = Image.fromarray(labels.astype(np.uint16))
        img.save(path, optimize=False)
    except OSError as exc:
        raise DisparityIOError(f"cannot write {path}: {exc}") from exc


def read_label_png(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.array(img).astype(np.int32)
    except OSError as exc:
        raise DisparityIOError(f"cannot read {path}: {exc}") from exc


def write_stats_csv(path, det: Detection) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "pixels", "min_col", "min_row", "max_col", "max_row", "mean_depth"])
            for s in det.labels.stats:
                depth = "" if s.mean_depth is None else repr(s.mean_depth)
                w.writerow([s.label, s.pixels, *s.bbox, depth])
    except OSError as exc:
        raise DisparityIOError(f"cannot write {path}: {exc}") from exc


def _dump_json(path, obj) -> None:
    try:
        Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")
    except OSError as exc:
        raise DisparityIOError(f"cannot write {path}: {exc}") from exc


def _ydisparity_png(path, bins: np.ndarray, path_rows: np.ndarray | None) -> None:
    # rows of the image = rotated y, columns = disparity bin
    img = np.log1p(bins.T.astype(np.float64))
    if img.max() > 0:
        img = img / img.max()
    rgb = np.repeat((img * 255).astype(np.uint8)[..., None], 3, axis=2)
    if path_rows is not None:
        rgb[path_rows, np.arange(bins.shape[0])] = (255, 0, 0)
    Image.fromarray(rgb).save(path)


def write_debug(out_dir, stem: str, dmap: DisparityMap, result: FrameResult) -> list[Path]:
    out = Path(out_dir)
    written = []
    road, det = result.road, result.detection
    if road is not None:
        p = out / f"{stem}_ydisparity.png"
        rows = (road.path.y - road.ydisparity.y_first).astype(np.int64)
        _ydisparity_png(p, road.ydisparity.bins, rows)
        written.append(p)
        p = out / f"{stem}_path.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["d", "y", "count"])
            for d, y, c in zip(road.path.d.tolist(), road.path.y.tolist(), road.path.counts.tolist()):
                w.writerow([repr(d), repr(y), c])
        written.append(p)
    if det is not None:
        p = out / f"{stem}_surface.pfm"
        write_pfm(p, det.surface.model_disparity(dmap.shape))
        written.append(p)
        p = out / f"{stem}_depth.pfm"
        write_pfm(p, det.depth)
        written.append(p)
        p = out / f"{stem}_fitmask.png"
        write_mask_png(p, det.fit_mask)
        written.append(p)
    return written


def write_outputs(
    out_dir,
    stem: str,
    dmap: DisparityMap,
    result: FrameResult,
    config: RunConfig | None = None,
    dump_debug: bool = False,
) -> list[Path]:
    """Write the frame's output files; returns the paths in a fixed order."""
    cfg = config or RunConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    det = result.detection
    if det is None:
        p = out / f"{stem}_report.json"
        _dump_json(p, result.report)
        return [p]
    paths = [out / f"{stem}{s}" for s in OUTPUT_SUFFIXES]
    write_pfm(paths[0], det.transformed.values)
    write_mask_png(paths[1], det.otsu.undamaged_mask)
    write_label_png(paths[2], det.labels.labels)
    write_stats_csv(paths[3], det)
    cloud = extract_pointcloud(dmap, StereoGeometry(cfg.focal_length, cfg.baseline), det.labels)
    write_ply(paths[4], cloud)
    _dump_json(paths[5], result.report)
    if dump_debug:
        paths += write_debug(out, stem, dmap, result)
    return paths


def warmup() -> None:
    """Load the compiled kernels by running the detector on a tiny frame."""
    from .synth import Pothole, SceneSpec, render

    spec = SceneSpec(
        width=96,
        height=64,
        potholes=(Pothole(0.0, 5.0, 20.0, 12.0, 15.0),),
        noise_sigma=0.05,
        seed=1,
    )
    dmap, _ = render(spec)
    try:
        process_frame(dmap, RunConfig(min_pixels=50, block_size=16))
    except Exception:  # noqa: BLE001 - compilation side effect is all that matters
        pass
