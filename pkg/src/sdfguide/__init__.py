"""sdfguide: per-anatomy signed distance fields from segmented labelmaps,
real-time nearest-anatomy queries, and threshold-based drilling guidance."""

from .backend import BACKEND
from .drillsim import (
    RemovalEvent,
    TrajectorySample,
    TrialMetrics,
    carve,
    completion_time,
    count_unintended,
    run_trial,
)
from .feedback import (
    FeedbackConfig,
    FeedbackFrame,
    audio_gate,
    compose_frame,
    haptic_force,
    visual_cue,
)
from .query import OutOfBoundsError, ProximityResult, nearest_anatomy, sample, sdf_gradient
from .sdf import (
    AtlasFormatError,
    SdfAtlas,
    SdfVolume,
    build_atlas,
    edt,
    edt_bruteforce,
    load_atlas,
    save_atlas,
    sign,
)
from .volume import LabelVolume, NrrdError, VoxelGeometry, load_nrrd, parse_nrrd, save_nrrd

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AtlasFormatError",
    "FeedbackConfig",
    "FeedbackFrame",
    "LabelVolume",
    "NrrdError",
    "OutOfBoundsError",
    "ProximityResult",
    "RemovalEvent",
    "SdfAtlas",
    "SdfVolume",
    "TrajectorySample",
    "TrialMetrics",
    "VoxelGeometry",
    "audio_gate",
    "build_atlas",
    "carve",
    "completion_time",
    "compose_frame",
    "count_unintended",
    "edt",
    "edt_bruteforce",
    "haptic_force",
    "load_atlas",
    "load_nrrd",
    "nearest_anatomy",
    "parse_nrrd",
    "run_trial",
    "sample",
    "save_atlas",
    "save_nrrd",
    "sdf_gradient",
    "sign",
    "visual_cue",
]
