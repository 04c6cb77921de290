"""Disparity grid types, centered/rotated coordinates and file IO.

Raster indices are (row, col) into numpy arrays of shape (height, width).
Centered coordinates put the origin at the map center::

    u = col - (width - 1) / 2
    v = row - (height - 1) / 2

so even-sized maps have a half-pixel origin and the coordinate set is
symmetric about zero.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image

from .errors import AllInvalidError, DisparityIOError

KITTI_SCALE = 1.0 / 256.0


@dataclass(frozen=True)
class DisparityMap:
    """Dense subpixel disparities with an explicit validity mask.

    Invalid entries of ``data`` hold NaN; callers must consult ``valid``.
    Both arrays are read-only.
    """

    data: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if data.ndim != 2 or data.shape != valid.shape:
            raise ValueError(
                f"data {data.shape} and valid {valid.shape} must be equal 2-D shapes"
            )
        if data.shape[0] < 3 or data.shape[1] < 3:
            raise ValueError(f"map must be at least 3x3, got {data.shape}")
        vals = data[valid]
        if not (np.all(np.isfinite(vals)) and np.all(vals > 0)):
            raise ValueError("every valid disparity must be finite and > 0")
        data[~valid] = np.nan
        data.flags.writeable = False
        valid.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_array(cls, data, valid=None) -> "DisparityMap":
        """Wrap an array; without ``valid``, finite positive entries are valid."""
        data = np.asarray(data, dtype=np.float64)
        if valid is None:
            with np.errstate(invalid="ignore"):
                valid = np.isfinite(data) & (data > 0)
        return cls(data, valid)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def n_valid(self) -> int:
        return int(np.count_nonzero(self.valid))

    def centered_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (u, v) arrays of the map's shape."""
        return centered_grid(self.width, self.height)

    @cached_property
    def pixels(self) -> "ValidPixels":
        """Raster-ordered coordinates and disparities of the valid pixels."""
        rows, cols = np.nonzero(self.valid)
        arrays = (
            rows,
            cols,
            cols - (self.width - 1) / 2,
            rows - (self.height - 1) / 2,
            np.ascontiguousarray(self.data[rows, cols]),
        )
        for a in arrays:
            a.flags.writeable = False
        return ValidPixels(*arrays)


class ValidPixels(NamedTuple):
    rows: np.ndarray
    cols: np.ndarray
    u: np.ndarray
    v: np.ndarray
    d: np.ndarray


@dataclass(frozen=True)
class CenteredCoords:
    u: float
    v: float


@dataclass(frozen=True)
class RotatedCoords:
    x: float
    y: float


def to_centered(col: int, row: int, width: int, height: int) -> CenteredCoords:
    if not (0 <= col < width and 0 <= row < height):
        raise IndexError(f"({col}, {row}) outside a {width}x{height} map")
    return CenteredCoords(col - (width - 1) / 2, row - (height - 1) / 2)


def to_raster(c: CenteredCoords, width: int, height: int) -> tuple[int, int]:
    """Inverse of :func:`to_centered`; returns (col, row)."""
    col = c.u + (width - 1) / 2
    row = c.v + (height - 1) / 2
    if col != int(col) or row != int(row):
        raise ValueError(f"{c} does not fall on a pixel of a {width}x{height} map")
    return int(col), int(row)


def centered_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    u = np.arange(width, dtype=np.float64) - (width - 1) / 2
    v = np.arange(height, dtype=np.float64) - (height - 1) / 2
    uu, vv = np.meshgrid(u, v)
    return uu, vv


def rotate_coords(c: CenteredCoords, theta: float) -> RotatedCoords:
    ct, st = math.cos(theta), math.sin(theta)
    return RotatedCoords(c.u * ct + c.v * st, c.v * ct - c.u * st)


def rotated_y(u, v, theta: float):
    """Vectorized rotated vertical coordinate y = v cos(theta) - u sin(theta)."""
    return v * math.cos(theta) - u * math.sin(theta)


# -- PFM ---------------------------------------------------------------------

_PFM_HEADER = re.compile(rb"^(Pf|PF)\s+(\d+)\s+(\d+)\s+(\S+)\s", re.DOTALL)


def read_pfm(path) -> np.ndarray:
    """Read a grayscale PFM into a float32 (height, width) array, top row first."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DisparityIOError(f"cannot read {path}: {exc}") from exc
    m = _PFM_HEADER.match(raw)
    if m is None:
        raise DisparityIOError(f"{path}: not a PFM file")
    kind, width, height, scale = m.group(1), int(m.group(2)), int(m.group(3)), m.group(4)
    if kind != b"Pf":
        raise DisparityIOError(f"{path}: only grayscale 'Pf' PFM is supported")
    try:
        scale = float(scale)
    except ValueError as exc:
        raise DisparityIOError(f"{path}: bad PFM scale {scale!r}") from exc
    dtype = "<f4" if scale < 0 else ">f4"
    body = raw[m.end():]
    expected = width * height * 4
    if len(body) != expected:
        raise DisparityIOError(
            f"{path}: dimension mismatch, header says {width}x{height} "
            f"({expected} bytes) but body has {len(body)} bytes"
        )
    arr = np.frombuffer(body, dtype=dtype).reshape(height, width)
    # PFM scanlines run bottom to top
    return np.flipud(arr).astype(np.float32)


def write_pfm(path, array) -> None:
    """Write a 2-D array as little-endian grayscale PFM (NaN preserved)."""
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("PFM writer expects a 2-D array")
    height, width = arr.shape
    header = f"Pf\n{width} {height}\n-1.0\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(np.flipud(arr)).tobytes())
    except OSError as exc:
        raise DisparityIOError(f"cannot write {path}: {exc}") from exc


# -- PNG ---------------------------------------------------------------------


def read_png16(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode not in ("I;16", "I;16B", "I;16L", "I"):
                raise DisparityIOError(f"{path}: expected 16-bit grayscale PNG, got {img.mode}")
            arr = np.array(img)
    except OSError as exc:
        raise DisparityIOError(f"cannot read {path}: {exc}") from exc
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 65535:
        raise DisparityIOError(f"{path}: values outside the 16-bit range")
    return arr.astype(np.uint16)


def write_png16(path, dmap: DisparityMap, scale: float = KITTI_SCALE, sentinel: int = 0) -> None:
    """Encode disparities as round(d / scale); invalid pixels get ``sentinel``."""
    codes = np.full(dmap.shape, sentinel, dtype=np.int64)
    q = np.rint(dmap.data[dmap.valid] / scale).astype(np.int64)
    if q.size and (q.min() < 0 or q.max() > 65535):
        raise ValueError("disparities do not fit the 16-bit fixed-point range")
    if np.any(q == sentinel):
        raise ValueError("a valid disparity encodes to the invalid sentinel")
    codes[dmap.valid] = q
    try:
        Image.fromarray(codes.astype(np.uint16)).save(path, format="PNG")
    except OSError as exc:
        raise DisparityIOError(f"cannot write {path}: {exc}") from exc


def read_mask_png(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.array(img.convert("L"))
    except OSError as exc:
        raise DisparityIOError(f"cannot read {path}: {exc}") from exc
    return arr > 127


def write_mask_png(path, mask) -> None:
    """8-bit PNG, 0 = background, 255 = foreground."""
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    try:
        Image.fromarray(arr, mode="L").save(path, format="PNG")
    except OSError as exc:
        raise DisparityIOError(f"cannot write {path}: {exc}") from exc


# -- disparity loading -------------------------------------------------------


def load_disparity(
    path,
    format: str | None = None,
    scale: float = KITTI_SCALE,
    sentinel: int = 0,
) -> DisparityMap:
    """Load a disparity map from PFM or 16-bit PNG.

    ``format`` is ``"pfm"`` or ``"png16"``; when omitted it is taken from the
    file suffix. NaN/inf/non-positive PFM values and PNG ``sentinel`` codes
    become invalid pixels. Raises :class:`AllInvalidError` when nothing is valid.
    """
    path = Path(path)
    if not path.is_file():
        raise DisparityIOError(f"no such file: {path}")
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "pfm":
        data = read_pfm(path).astype(np.float64)
        with np.errstate(invalid="ignore"):
            valid = np.isfinite(data) & (data > 0)
    elif fmt in ("png", "png16"):
        codes = read_png16(path)
        valid = codes != sentinel
        data = codes.astype(np.float64) * scale
        valid &= data > 0
    else:
        raise DisparityIOError(f"{path}: unknown disparity format {fmt!r}")
    if data.shape[0] < 3 or data.shape[1] < 3:
        raise DisparityIOError(f"{path}: map smaller than 3x3 ({data.shape})")
    if not valid.any():
        raise AllInvalidError(f"{path}: no valid disparities")
    return DisparityMap(data, valid)


def save_disparity(path, dmap: DisparityMap) -> None:
    """Save as PFM with NaN at invalid pixels."""
    write_pfm(path, dmap.data)
