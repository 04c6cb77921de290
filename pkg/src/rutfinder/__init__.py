"""Pothole detection from dense stereo disparity maps."""

from .config import RunConfig, scale_min_pixels
from .detect import StereoGeometry, clean_and_label, detect_potholes, extract_pointcloud
from .errors import (
    AllInvalidError,
    DegenerateInputError,
    DisparityIOError,
    RutfinderError,
)
from .grid import DisparityMap, load_disparity, save_disparity
from .pipeline import FrameResult, process_frame
from .roadmodel import estimate_road_model
from .rollangle import estimate_roll

__version__ = "0.1.0"

__all__ = [
    "AllInvalidError",
    "DegenerateInputError",
    "DisparityIOError",
    "DisparityMap",
    "FrameResult",
    "RunConfig",
    "RutfinderError",
    "StereoGeometry",
    "clean_and_label",
    "detect_potholes",
    "estimate_road_model",
    "estimate_roll",
    "extract_pointcloud",
    "load_disparity",
    "process_frame",
    "save_disparity",
    "scale_min_pixels",
]
