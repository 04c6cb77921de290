"""Synthetic disparity frames with known road model, roll and potholes.

The road follows ``d = a0 + a1 y + a2 y^2`` in the rotated row coordinate.
Each pothole is an elliptical quartic bowl ``depth * (1 - rho^2)^2`` that is
zero with zero slope at its rim. Ground-truth pothole masks mark pixels whose
injected depth reaches ``gt_depth_threshold``, which is how deep a depression
has to be before it counts as damage.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DisparityIOError
from .grid import DisparityMap, centered_grid, rotated_y, write_mask_png, write_pfm

DEFAULT_ALPHA = (40.0, 0.15, 5e-5)

PRESETS = {
    "easy": {"noise_sigma": 0.0, "max_roll": 0.0, "invalid_fraction": 0.0},
    "noisy": {"noise_sigma": 0.1, "max_roll": 0.0, "invalid_fraction": 0.01},
    "rolled": {"noise_sigma": 0.1, "max_roll": 0.15, "invalid_fraction": 0.01},
}


@dataclass(frozen=True)
class Pothole:
    u: float
    v: float
    a: float
    b: float
    depth: float


@dataclass(frozen=True)
class SceneSpec:
    width: int = 600
    height: int = 400
    alpha_true: tuple[float, float, float] = DEFAULT_ALPHA
    theta_true: float = 0.0
    potholes: tuple[Pothole, ...] = ()
    noise_sigma: float = 0.0
    invalid_fraction: float = 0.0
    seed: int = 0
    gt_depth_threshold: float = 6.2

    def validate(self) -> None:
        if self.width < 3 or self.height < 3:
            raise ValueError("frame must be at least 3x3")
        if not -math.pi / 2 < self.theta_true <= math.pi / 2:
            raise ValueError("theta_true must lie in (-pi/2, pi/2]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.invalid_fraction < 1:
            raise ValueError("invalid_fraction must lie in [0, 1)")
        hu, hv = (self.width - 1) / 2, (self.height - 1) / 2
        for p in self.potholes:
            if p.depth <= 0 or p.a < 1 or p.b < 1:
                raise ValueError(f"bad pothole {p}")
            if abs(p.u) + p.a > hu + 1e-9 or abs(p.v) + p.b > hv + 1e-9:
                raise ValueError(f"pothole {p} extends outside the frame")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha_true"] = list(self.alpha_true)
        d["potholes"] = [asdict(p) for p in self.potholes]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["alpha_true"] = tuple(float(x) for x in d["alpha_true"])
        d["potholes"] = tuple(Pothole(**p) for p in d.get("potholes", ()))
        return cls(**d)


@dataclass(frozen=True)
class GroundTruth:
    pothole_mask: np.ndarray
    pothole_masks: tuple[np.ndarray, ...]
    road_mask: np.ndarray
    depth: np.ndarray = field(repr=False)
    theta_true: float = 0.0
    alpha_true: tuple[float, float, float] = DEFAULT_ALPHA

    @property
    def n_potholes(self) -> int:
        return len(self.pothole_masks)


def road_disparity(spec: SceneSpec) -> np.ndarray:
    uu, vv = centered_grid(spec.width, spec.height)
    y = rotated_y(uu, vv, spec.theta_true)
    a0, a1, a2 = spec.alpha_true
    return a0 + a1 * y + a2 * y * y


def _bowl(spec: SceneSpec, p: Pothole) -> np.ndarray:
    uu, vv = centered_grid(spec.width, spec.height)
    rho2 = ((uu - p.u) / p.a) ** 2 + ((vv - p.v) / p.b) ** 2
    return np.where(rho2 < 1.0, p.depth * (1.0 - rho2) ** 2, 0.0)


def render(spec: SceneSpec) -> tuple[DisparityMap, GroundTruth]:
    """Render a disparity frame and its ground truth; a pure function of ``spec``."""
    spec.validate()
    road = road_disparity(spec)
    if road.min() <= 0:
        raise ValueError("road model produces non-positive disparities in this frame")
    bowls = [_bowl(spec, p) for p in spec.potholes]
    depth = np.sum(bowls, axis=0) if bowls else np.zeros_like(road)
    d = road - depth
    rng = np.random.default_rng(spec.seed)
    if spec.noise_sigma > 0:
        d = d + rng.normal(0.0, spec.noise_sigma, size=d.shape)
    valid = np.ones(d.shape, dtype=bool)
    if spec.invalid_fraction > 0:
        valid &= rng.random(d.shape) >= spec.invalid_fraction
    if d[valid].min() <= 0:
        raise ValueError("potholes or noise drive disparities to <= 0")
    masks = tuple(b >= spec.gt_depth_threshold for b in bowls)
    union = np.zeros(d.shape, dtype=bool)
    for m in masks:
        union |= m
    gt = GroundTruth(
        pothole_mask=union,
        pothole_masks=masks,
        road_mask=depth == 0,
        depth=depth,
        theta_true=spec.theta_true,
        alpha_true=spec.alpha_true,
    )
    return DisparityMap(d, valid), gt


def frame_seed(master_seed: int, index: int, stream: int) -> int:
    return int(np.random.SeedSequence([master_seed, index, stream]).generate_state(1, np.uint64)[0])


def _place_potholes(
    rng: np.random.Generator, width: int, height: int, n: int, road: np.ndarray | None = None
) -> tuple[Pothole, ...]:
    """Non-overlapping bowls sized to the frame height.

    With ``road`` given, a bowl is only accepted where the road disparity
    under its footprint stays at least 10 above its depth.
    """
    hu, hv = (width - 1) / 2, (height - 1) / 2
    k = height / 400.0
    placed: list[Pothole] = []
    gap = 20.0 * k
    margin = 10.0 * k
    for _ in range(n):
        for _attempt in range(1000):
            a = rng.uniform(35.0, 60.0) * k
            b = rng.uniform(25.0, 40.0) * k
            if hu - a - margin <= 0 or hv - b - margin <= 0:
                raise ValueError("frame too small for the pothole size range")
            u = rng.uniform(-(hu - a - margin), hu - a - margin)
            v = rng.uniform(-(hv - b - margin), hv - b - margin)
            depth = rng.uniform(14.0, 20.0)
            clear = all(
                abs(u - q.u) > a + q.a + gap or abs(v - q.v) > b + q.b + gap for q in placed
            )
            if clear and road is not None:
                r0, r1 = int(hv + v - b), int(np.ceil(hv + v + b)) + 1
                c0, c1 = int(hu + u - a), int(np.ceil(hu + u + a)) + 1
                clear = road[max(r0, 0) : r1, max(c0, 0) : c1].min() >= depth + 10.0
            if clear:
                placed.append(Pothole(round(u, 3), round(v, 3), round(a, 3), round(b, 3), round(depth, 3)))
                break
        else:
            raise ValueError(f"could not place {n} non-overlapping potholes")
    return tuple(placed)


def preset_spec(
    difficulty: str,
    master_seed: int,
    index: int,
    n_potholes: tuple[int, int] = (1, 3),
    width: int = 600,
    height: int = 400,
) -> SceneSpec:
    """Scene for frame ``index`` of a benchmark; deterministic in its arguments."""
    if difficulty not in PRESETS:
        raise ValueError(f"unknown difficulty {difficulty!r}; choose from {sorted(PRESETS)}")
    preset = PRESETS[difficulty]
    rng = np.random.default_rng(frame_seed(master_seed, index, 0))
    lo, hi = n_potholes
    n = int(rng.integers(lo, hi + 1))
    # taller frames see more of the road: same slope, offset keeps d > 0
    alpha = (
        round(rng.uniform(38.0, 42.0) * height / 400.0, 4),
        round(rng.uniform(0.14, 0.16), 6),
        round(rng.uniform(3e-5, 6e-5), 9),
    )
    roll = preset["max_roll"]
    theta = round(rng.uniform(-roll, roll), 6) if roll > 0 else 0.0
    road = road_disparity(SceneSpec(width=width, height=height, alpha_true=alpha, theta_true=theta))
    return SceneSpec(
        width=width,
        height=height,
        alpha_true=alpha,
        theta_true=theta,
        potholes=_place_potholes(rng, width, height, n, road),
        noise_sigma=preset["noise_sigma"],
        invalid_fraction=preset["invalid_fraction"],
        seed=frame_seed(master_seed, index, 1),
    )


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def make_benchmark(
    out_dir,
    n_frames: int,
    difficulty: str,
    seed: int = 42,
    n_potholes: tuple[int, int] = (1, 3),
    width: int = 600,
    height: int = 400,
) -> Path:
    """Write ``n_frames`` rendered frames plus ground truth under ``out_dir``.

    Layout: ``frames/NNNN.pfm``, ``gt/NNNN_mask.png``, ``gt/NNNN_spec.json``
    and ``manifest.json``.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if difficulty not in PRESETS:
        raise ValueError(f"unknown difficulty {difficulty!r}; choose from {sorted(PRESETS)}")
    out = Path(out_dir)
    try:
        (out / "frames").mkdir(parents=True, exist_ok=True)
        (out / "gt").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DisparityIOError(f"cannot create {out}: {exc}") from exc
    entries = []
    for i in range(n_frames):
        spec = preset_spec(difficulty, seed, i, n_potholes, width, height)
        dmap, gt = render(spec)
        stem = f"{i:04d}"
        write_pfm(out / "frames" / f"{stem}.pfm", dmap.data)
        write_mask_png(out / "gt" / f"{stem}_mask.png", gt.pothole_mask)
        try:
            (out / "gt" / f"{stem}_spec.json").write_text(_dump_json(spec.to_dict()))
        except OSError as exc:
            raise DisparityIOError(str(exc)) from exc
        entries.append(
            {
                "index": i,
                "seed": spec.seed,
                "frame": f"frames/{stem}.pfm",
                "mask": f"gt/{stem}_mask.png",
                "spec": f"gt/{stem}_spec.json",
                "n_potholes": len(spec.potholes),
            }
        )
    manifest = {
        "difficulty": difficulty,
        "master_seed": seed,
        "n_frames": n_frames,
        "n_potholes": list(n_potholes),
        "width": width,
        "height": height,
        "frames": entries,
    }
    try:
        (out / "manifest.json").write_text(_dump_json(manifest))
    except OSError as exc:
        raise DisparityIOError(str(exc)) from exc
    return out


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DisparityIOError(f"cannot read manifest {path}: {exc}") from exc


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
