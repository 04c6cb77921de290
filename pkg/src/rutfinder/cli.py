"""``rutfinder`` command line: detect, synth, eval, sweep, roll.

Exit codes: 0 ok, 2 usage, 3 IO (including mismatched frame sets),
4 degenerate input. Batches keep going past a failing frame and exit with
the most severe code seen.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import DegenerateInputError, DisparityIOError, RutfinderError
from .grid import load_disparity, read_mask_png, read_pfm

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DEGENERATE = 0, 2, 3, 4
FRAME_SUFFIXES = (".pfm", ".png")


class UsageError(Exception):
    pass


def _threads(value: int | None) -> int:
    if value is None:
        env = os.environ.get("RUTFINDER_THREADS")
        if env is None:
            return 1
        try:
            value = int(env)
        except ValueError as exc:
            raise UsageError(f"RUTFINDER_THREADS must be an integer, got {env!r}") from exc
    if value < 1:
        raise UsageError("thread count must be >= 1")
    return value


def build_config(args) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise DisparityIOError(f"no such config file: {path}")
        try:
            cfg = RunConfig.load(path)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    try:
        return cfg.updated(
            seed=getattr(args, "seed", None),
            eps_d=getattr(args, "eps_d", None),
            min_pixels=getattr(args, "min_pixels", None),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def collect_frames(inputs) -> list[Path]:
    """Expand files, directories and benchmark roots into a sorted frame list.

    Raises :class:`DisparityIOError` naming every missing input before any
    work starts.
    """
    frames: list[Path] = []
    missing = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            root = p / "frames" if (p / "manifest.json").is_file() else p
            found = sorted(q for q in root.iterdir() if q.suffix.lower() in FRAME_SUFFIXES and q.is_file())
            if not found:
                missing.append(f"{p} (no frames)")
            frames += found
        elif p.is_file():
            frames.append(p)
        else:
            missing.append(str(p))
    if missing:
        raise DisparityIOError("missing input: " + ", ".join(missing))
    stems = [f.stem for f in frames]
    dupes = sorted({s for s in stems if stems.count(s) > 1})
    if dupes:
        raise UsageError("duplicate frame names: " + ", ".join(dupes))
    return frames


def _classify(exc: Exception) -> int:
    if isinstance(exc, (DisparityIOError, OSError)):
        return EXIT_IO
    if isinstance(exc, (DegenerateInputError, ValueError)):
        return EXIT_DEGENERATE
    raise exc


def _describe(exc: Exception) -> str:
    stage = getattr(exc, "stage", None)
    kind = "io error" if _classify(exc) == EXIT_IO else "degenerate input"
    return f"{kind}{f' [{stage}]' if stage else ''}: {exc}"


def _run_detect(frames, out_dir, cfg, threads, roll_only, dump_debug, timings, fmt, scale):
    from .pipeline import process_frame, warmup, write_outputs

    warmup()

    def work(path: Path):
        try:
            dmap = load_disparity(path, format=fmt, scale=scale)
            result = process_frame(dmap, cfg, name=path.name, roll_only=roll_only)
            if timings:
                result.report["runtime"] = {"threads": threads, "timings": result.timings}
            written = write_outputs(out_dir, path.stem, dmap, result, cfg, dump_debug)
            return path, result, written, None
        except (RutfinderError, OSError, ValueError) as exc:
            return path, None, [], exc

    if threads == 1:
        outcomes = [work(f) for f in frames]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, frames))
    code = EXIT_OK
    for path, result, _written, exc in outcomes:
        if exc is not None:
            code = max(code, _classify(exc))
            print(f"{path.name}: {_describe(exc)}", file=sys.stderr)
        elif roll_only:
            print(f"{path.name}: theta={result.report['roll']['theta']:.9f}")
        else:
            print(f"{path.name}: {result.report['pothole_count']} pothole(s)")
    return code


def cmd_detect(args) -> int:
    cfg = build_config(args)
    threads = _threads(args.threads)
    frames = collect_frames(args.inputs)
    return _run_detect(
        frames, Path(args.output), cfg, threads, args.roll_only, args.dump_debug, args.timings, args.format, args.scale
    )


def cmd_roll(args) -> int:
    from .rollangle import estimate_roll

    cfg = build_config(args)
    frames = collect_frames(args.inputs)
    code = EXIT_OK
    print("frame,theta,energy,iterations")
    for path in frames:
        try:
            dmap = load_disparity(path, format=args.format, scale=args.scale)
            r = estimate_roll(dmap, cfg.eps_theta, cfg.prescan_count, stride=cfg.roll_stride)
            print(f"{path.name},{r.theta!r},{r.energy!r},{r.iterations}")
        except (RutfinderError, OSError, ValueError) as exc:
            code = max(code, _classify(exc))
            print(f"{path.name}: {_describe(exc)}", file=sys.stderr)
    return code


def cmd_synth(args) -> int:
    from .synth import make_benchmark

    lo, hi = args.potholes
    if lo < 0 or hi < lo:
        raise UsageError("--potholes needs 0 <= LO <= HI")
    out = make_benchmark(args.output, args.n, args.preset, args.seed, (lo, hi), args.width, args.height)
    print(f"wrote {args.n} {args.preset} frame(s) to {out}")
    return EXIT_OK


def _gt_entries(gt_dir: Path) -> dict[str, dict]:
    """stem -> {mask, spec (optional), n_potholes (optional)}."""
    from .synth import load_manifest

    entries = {}
    if (gt_dir / "manifest.json").is_file():
        for e in load_manifest(gt_dir)["frames"]:
            stem = Path(e["frame"]).stem
            entries[stem] = {
                "mask": gt_dir / e["mask"],
                "spec": gt_dir / e["spec"] if e.get("spec") else None,
                "n_potholes": e.get("n_potholes"),
            }
        return entries
    if not gt_dir.is_dir():
        raise DisparityIOError(f"no such directory: {gt_dir}")
    for p in sorted(gt_dir.glob("*_mask.png")):
        stem = p.name[: -len("_mask.png")]
        spec = gt_dir / f"{stem}_spec.json"
        entries[stem] = {"mask": p, "spec": spec if spec.is_file() else None, "n_potholes": None}
    return entries


def cmd_eval(args) -> int:
    from .evaluation import aggregate, count_components, load_frame_set, pixel_metrics, sigma_d
    from .pipeline import read_label_png
    from .synth import SceneSpec, render

    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    preds = load_frame_set(pred_dir, "_labels.png")
    gts = _gt_entries(gt_dir)
    only_pred = sorted(set(preds) - set(gts))
    only_gt = sorted(set(gts) - set(preds))
    if only_pred or only_gt or not preds:
        parts = []
        if only_gt:
            parts.append("missing predictions for: " + ", ".join(only_gt))
        if only_pred:
            parts.append("missing ground truth for: " + ", ".join(only_pred))
        if not preds:
            parts.append("no predictions found")
        raise DisparityIOError("frame sets differ; " + "; ".join(parts))

    frames = {}
    reports = []
    for stem in sorted(preds):
        labels = read_label_png(preds[stem])
        gt = read_mask_png(gts[stem]["mask"])
        if labels.shape != gt.shape:
            raise DisparityIOError(f"{stem}: prediction {labels.shape} and ground truth {gt.shape} differ in shape")
        tpath = pred_dir / f"{stem}_transformed.pfm"
        transformed = read_pfm(tpath) if tpath.is_file() else None
        valid = np.isfinite(transformed) if transformed is not None else np.ones(gt.shape, dtype=bool)
        spec_path = gts[stem]["spec"]
        n_pd = gts[stem]["n_potholes"]
        sd = None
        if spec_path is not None:
            spec = SceneSpec.from_dict(json.loads(Path(spec_path).read_text()))
            n_pd = len(spec.potholes) if n_pd is None else n_pd
            if transformed is not None:
                _, truth = render(spec)
                road = truth.road_mask & valid
                if np.count_nonzero(road) >= 2:
                    sd = sigma_d(transformed[road])
        if n_pd is None:
            n_pd = count_components(gt)
        rep = pixel_metrics(labels > 0, gt, valid, sigma_d=sd, n_pd=int(n_pd), n_pd_detected=int(labels.max(initial=0)))
        reports.append(rep)
        frames[stem] = rep.to_dict()
    total = aggregate(reports)
    sds = [r.sigma_d for r in reports if r.sigma_d is not None]
    summary = total.to_dict()
    summary["sigma_d"] = float(np.mean(sds)) if sds else None
    summary["delta_n_pd"] = int(sum(r.delta_n_pd for r in reports))
    summary["frames_count_correct"] = int(sum(r.delta_n_pd == 0 for r in reports))
    out = {"frames": frames, "total": summary, "n_frames": len(reports)}
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.output:
        try:
            Path(args.output).write_text(text)
        except OSError as exc:
            raise DisparityIOError(f"cannot write {args.output}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .evaluation import param_sweep
    from .pipeline import process_frame, warmup
    from .synth import load_manifest

    cfg = build_config(args)
    threads = _threads(args.threads)
    root = Path(args.dataset)
    manifest = load_manifest(root)
    entries = manifest["frames"]
    if not entries:
        raise DegenerateInputError("empty dataset")
    missing = [e["frame"] for e in entries if not (root / e["frame"]).is_file()]
    if missing:
        raise DisparityIOError("missing frames: " + ", ".join(missing))
    warmup()

    def work(e):
        dmap = load_disparity(root / e["frame"])
        res = process_frame(dmap, cfg, name=e["frame"])
        return res.detection.depth, dmap.valid, e["n_potholes"]

    if threads == 1:
        frames = [work(e) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            frames = list(pool.map(work, entries))
    result = param_sweep(frames, tuple(args.eps_d_range), tuple(args.w_range))
    if args.output:
        result.write_csv(args.output)
    pairs = result.argmin
    eps_vals = sorted({e for e, _ in pairs})
    w_vals = sorted({w for _, w in pairs})
    summary = {
        "grid": [len(result.eps_d), len(result.w)],
        "min_sum_delta_n_pd": result.minimum,
        "n_minimizers": len(pairs),
        "first_minimizer": {"eps_d": pairs[0][0], "w": pairs[0][1]},
        "eps_d_span": [eps_vals[0], eps_vals[-1]],
        "w_span": [w_vals[0], w_vals[-1]],
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _add_common(p, frames=True):
    p.add_argument("--config", metavar="PATH", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="RANSAC seed")
    p.add_argument("--eps-d", type=float, dest="eps_d", help="depth threshold in pixels")
    p.add_argument("--min-pixels", type=int, dest="min_pixels", help="smallest pothole in pixels")
    if frames:
        p.add_argument("--format", choices=("pfm", "png16"), help="input format (default: from suffix)")
        p.add_argument("--scale", type=float, default=1 / 256, help="png16 disparity per code (default 1/256)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rutfinder", description="Pothole detection from dense disparity maps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect potholes in disparity frames")
    p.add_argument("inputs", nargs="+", help="frame files, directories or benchmark roots")
    p.add_argument("-o", "--output", required=True, help="output directory")
    _add_common(p)
    p.add_argument("--threads", type=int, help="worker threads (env RUTFINDER_THREADS, default 1)")
    p.add_argument("--roll-only", action="store_true", help="estimate the roll angle only")
    p.add_argument("--dump-debug", action="store_true", help="also write intermediate products")
    p.add_argument("--timings", action="store_true", help="add stage timings to reports (not reproducible)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("roll", help="print the roll angle of each frame")
    p.add_argument("inputs", nargs="+")
    _add_common(p)
    p.set_defaults(func=cmd_roll)

    p = sub.add_parser("synth", help="write a synthetic benchmark")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--preset", choices=("easy", "noisy", "rolled"), required=True)
    p.add_argument("-n", type=int, default=10, help="frame count")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--potholes", type=int, nargs=2, default=(1, 3), metavar=("LO", "HI"))
    p.add_argument("--width", type=int, default=600)
    p.add_argument("--height", type=int, default=400)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--pred", required=True, help="detect output directory")
    p.add_argument("--gt", required=True, help="benchmark root or directory of <stem>_mask.png")
    p.add_argument("-o", "--output", help="metrics JSON (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="brute-force (eps_d, w) search over a benchmark")
    p.add_argument("dataset", help="benchmark root with manifest.json")
    p.add_argument("-o", "--output", help="grid CSV")
    _add_common(p, frames=False)
    p.add_argument("--threads", type=int)
    p.add_argument("--eps-d-range", type=float, nargs=3, default=(3.0, 8.5, 0.1), metavar=("LO", "HI", "STEP"))
    p.add_argument("--w-range", type=float, nargs=3, default=(100, 5000, 100), metavar=("LO", "HI", "STEP"))
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "synth" and args.n < 1:
        parser.error("-n must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rutfinder: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RutfinderError, OSError, ValueError) as exc:
        code = _classify(exc)
        print(f"rutfinder: {_describe(exc)}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
