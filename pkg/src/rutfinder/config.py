"""Run configuration: every tunable with its default, JSON round-trip."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

REFERENCE_SHAPE = (1028, 1720)


@dataclass(frozen=True)
class RunConfig:
    # roll angle
    eps_theta: float = math.pi / 18000
    prescan_count: int = 16
    roll_stride: int | None = None
    roll_refinements: int = 1
    roll_refine_window: float = 0.05
    # road projection model
    d_bin_width: float = 1.0
    smoothness: float = 16.0
    tau_max: int = 10
    ransac_iterations: int = 50
    sample_size: int = 3
    eps_alpha: float = 4.0
    halvings: int = 4
    refine_alpha: bool = True
    # transformation and undamaged-area extraction
    delta: float = 30.0
    otsu_bins: int = 256
    # surface normals and surface fit
    neighborhood: int = 8
    eps_n: float = math.pi / 36
    block_size: int = 125
    eps_c0: float = 4.0
    # detection
    eps_d: float = 6.2
    min_pixels: int = 3100
    # read min_pixels as a count on a REFERENCE_SHAPE frame and rescale by area
    scale_min_pixels: bool = False
    # point cloud geometry
    focal_length: float = 700.0
    baseline: float = 0.12
    seed: int = 42

    def __post_init__(self):
        if self.eps_theta <= 0:
            raise ValueError("eps_theta must be positive")
        if self.prescan_count < 0 or self.roll_refinements < 0:
            raise ValueError("prescan_count and roll_refinements must be >= 0")
        if self.roll_stride is not None and self.roll_stride < 1:
            raise ValueError("roll_stride must be >= 1")
        if not 0 < self.roll_refine_window <= math.pi / 2:
            raise ValueError("roll_refine_window must lie in (0, pi/2]")
        if self.d_bin_width <= 0 or self.smoothness < 0 or self.tau_max < 1:
            raise ValueError("bad y-disparity / path parameters")
        if self.ransac_iterations < 1 or self.sample_size < 3 or self.halvings < 1:
            raise ValueError("bad RANSAC parameters")
        if self.eps_alpha <= 0 or self.eps_c0 <= 0 or self.eps_d <= 0:
            raise ValueError("tolerances must be positive")
        if self.otsu_bins < 2 or self.block_size < 1 or self.min_pixels < 1:
            raise ValueError("otsu_bins >= 2, block_size >= 1, min_pixels >= 1 required")
        if not 0 < self.eps_n < math.pi / 2:
            raise ValueError("eps_n must lie in (0, pi/2)")
        if self.focal_length <= 0 or self.baseline <= 0:
            raise ValueError("focal_length and baseline must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def effective_min_pixels(self, shape: tuple[int, int]) -> int:
        if self.scale_min_pixels:
            return scale_min_pixels(self.min_pixels, shape)
        return self.min_pixels

    def updated(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)


def scale_min_pixels(min_pixels: int, shape: tuple[int, int], reference=REFERENCE_SHAPE) -> int:
    """Rescale a component-size threshold tuned on ``reference``-sized frames."""
    ratio = (shape[0] * shape[1]) / (reference[0] * reference[1])
    return max(1, int(round(min_pixels * ratio)))
