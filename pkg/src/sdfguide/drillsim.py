"""Trajectory-replay harness: carve voxels along a recorded tool path,
emit per-tick feedback frames, and compute the objective trial metrics
(completion time, unintended removals)."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .feedback import FeedbackConfig, FeedbackFrame, compose_frame
from .query import nearest_anatomy
from .sdf import SdfAtlas, label_volume_checksum
from .volume import LabelVolume


@dataclass(frozen=True)
class TrajectorySample:
    t: float  # seconds
    tip: tuple[float, float, float]  # world mm
    burr_radius: float  # mm
    drilling: bool  # foot-pedal state


@dataclass(frozen=True)
class RemovalEvent:
    t: float
    voxel: tuple[int, int, int]
    label: int  # pre-removal label; 0 = bone/background


@dataclass(frozen=True)
class TrialMetrics:
    completion_time: float
    removed_total: int
    unintended_removed: dict[int, int]
    frames_emitted: int

    def to_dict(self) -> dict:
        return {
            "completion_time": self.completion_time,
            "removed_total": self.removed_total,
            "unintended_removed": {str(k): v for k, v in sorted(self.unintended_removed.items())},
            "frames_emitted": self.frames_emitted,
        }


class DrillState:
    """Mutable carving state over a copy of the labelmap; the source
    LabelVolume is never modified."""

    def __init__(self, volume: LabelVolume):
        self.geometry = volume.geometry
        self.labels = volume.labels.copy()
        self.removed = np.zeros(volume.labels.shape, dtype=bool)


def carve(state: DrillState, s: TrajectorySample) -> list[RemovalEvent]:
    """Remove every not-yet-removed voxel whose center lies within
    burr_radius of the tip (inclusive boundary). Emits one event per
    removal, in ascending index order."""
    if not s.drilling:
        return []
    g = state.geometry
    c = g.world_to_index(s.tip)
    dims = np.asarray(g.dims)
    spacing = np.asarray(g.spacing)
    lo = np.maximum(np.ceil(c - s.burr_radius / spacing).astype(int), 0)
    hi = np.minimum(np.floor(c + s.burr_radius / spacing).astype(int), dims - 1)
    if np.any(lo > hi):
        return []
    ii, jj, kk = np.meshgrid(
        np.arange(lo[0], hi[0] + 1),
        np.arange(lo[1], hi[1] + 1),
        np.arange(lo[2], hi[2] + 1),
        indexing="ij",
    )
    idx = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3)
    # direction is orthonormal, so world distance = spacing-scaled index distance
    d = np.linalg.norm((idx - c) * spacing, axis=1)
    hit = idx[d <= s.burr_radius]
    events = []
    for i, j, k in hit:
        if state.removed[i, j, k]:
            continue
        events.append(RemovalEvent(s.t, (int(i), int(j), int(k)), int(state.labels[i, j, k])))
        state.removed[i, j, k] = True
        state.labels[i, j, k] = 0
    return events


def completion_time(events) -> float:
    """Seconds between the first and last removal; 0 when fewer than two."""
    if not events:
        return 0.0
    ts = [e.t for e in events]
    return max(ts) - min(ts)


def count_unintended(events, critical_labels) -> dict[int, int]:
    """Per-critical-label removal counts; zero-count labels omitted."""
    critical = set(critical_labels)
    out: dict[int, int] = {}
    for e in events:
        if e.label in critical:
            out[e.label] = out.get(e.label, 0) + 1
    return out


def run_trial(
    volume: LabelVolume,
    atlas: SdfAtlas,
    config: FeedbackConfig,
    trajectory: list[TrajectorySample],
    mode: str = "nearest",
    clamp: bool = True,
) -> tuple[list[FeedbackFrame], list[RemovalEvent], TrialMetrics]:
    """Replay a trajectory: per sample, query the nearest anatomy at the
    tip, compose a feedback frame, and carve when the pedal is down. The
    atlas must have been built from this (uncarved) volume."""
    if not trajectory:
        raise ValueError("trajectory is empty")
    if atlas.source_checksum != label_volume_checksum(volume):
        raise ValueError("atlas checksum does not match the label volume")
    state = DrillState(volume)
    frames: list[FeedbackFrame] = []
    events: list[RemovalEvent] = []
    for s in trajectory:
        r = nearest_anatomy(atlas, s.tip, mode=mode, clamp=clamp)
        frames.append(compose_frame(r, config, s.t))
        if s.drilling:
            events.extend(carve(state, s))
    metrics = TrialMetrics(
        completion_time=completion_time(events),
        removed_total=len(events),
        unintended_removed=count_unintended(events, config.critical_labels),
        frames_emitted=len(frames),
    )
    return frames, events, metrics


TRAJECTORY_HEADER = ["t", "x", "y", "z", "burr_radius", "drilling"]


def read_trajectory(source) -> list[TrajectorySample]:
    """Parse the trajectory CSV (header t,x,y,z,burr_radius,drilling)."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, newline="") as f:
            text = f.read()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != TRAJECTORY_HEADER:
        raise ValueError(f"trajectory header must be {','.join(TRAJECTORY_HEADER)}")
    samples = []
    prev_t = None
    for row in reader:
        t = float(row["t"])
        if prev_t is not None and t <= prev_t:
            raise ValueError("trajectory timestamps must be strictly increasing")
        prev_t = t
        r = float(row["burr_radius"])
        if r <= 0:
            raise ValueError("burr_radius must be > 0")
        samples.append(
            TrajectorySample(
                t, (float(row["x"]), float(row["y"]), float(row["z"])), r, row["drilling"] == "1"
            )
        )
    return samples


def write_trajectory(samples, sink) -> None:
    def _write(f):
        w = csv.writer(f)
        w.writerow(TRAJECTORY_HEADER)
        for s in samples:
            w.writerow([s.t, s.tip[0], s.tip[1], s.tip[2], s.burr_radius, int(s.drilling)])

    if hasattr(sink, "write"):
        _write(sink)
    else:
        with open(sink, "w", newline="") as f:
            _write(f)


def write_frame_log(frames, sink) -> None:
    """JSON-lines, one FeedbackFrame per line."""
    lines = "".join(json.dumps(f.to_dict()) + "\n" for f in frames)
    if hasattr(sink, "write"):
        sink.write(lines)
    else:
        with open(sink, "w") as f:
            f.write(lines)


def write_event_log(events, sink) -> None:
    lines = "".join(
        json.dumps({"t": e.t, "voxel": list(e.voxel), "label": e.label}) + "\n" for e in events
    )
    if hasattr(sink, "write"):
        sink.write(lines)
    else:
        with open(sink, "w") as f:
            f.write(lines)
