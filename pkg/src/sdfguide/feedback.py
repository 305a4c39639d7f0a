"""Threshold-based guidance: visual cue, audio alarm gate, and the
repulsive force law.

The force magnitude for distance d below the activation threshold tau_force
is ``f_max * (tau_force - d) / tau_force`` by default (f_max is then a true
cap at the surface), or the unnormalized ``f_max * (tau_force - d)`` when
``normalize_force`` is off. Direction is the SDF gradient, i.e. away from
the anatomy. All threshold comparisons are strict.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .query import ProximityResult

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class FeedbackConfig:
    tau_audio: float = 2.0  # mm, audio alarm activation
    tau_force: float = 1.0  # mm, force activation
    f_max: float = 3.0  # Newtons
    visual_alert: float = 1.0  # mm, visual alert color change
    normalize_force: bool = True
    critical_labels: frozenset[int] = frozenset()
    tip_offset: float = 0.0  # mm subtracted from queried distance (burr radius)
    enable_visual: bool = True
    enable_audio: bool = True
    enable_force: bool = True

    def __post_init__(self):
        if self.tau_audio <= 0 or self.tau_force <= 0 or self.visual_alert <= 0:
            raise ValueError("all thresholds must be > 0")
        if self.f_max <= 0:
            raise ValueError("f_max must be > 0")
        if self.tau_audio < self.tau_force:
            raise ValueError("tau_audio must be >= tau_force (audio warns earlier)")
        object.__setattr__(self, "critical_labels", frozenset(self.critical_labels))


@dataclass(frozen=True)
class VisualCue:
    name: str
    distance: float  # mm, tip-offset applied
    alert: bool


@dataclass(frozen=True)
class FeedbackFrame:
    visual: VisualCue
    audio_active: bool
    force: np.ndarray  # Newtons, world frame
    timestamp: float  # seconds
    force_degenerate: bool = False
    label: int = 0

    def to_dict(self) -> dict:
        return {
            "t": self.timestamp,
            "name": self.visual.name,
            "label": self.label,
            "distance": self.visual.distance,
            "visual_alert": self.visual.alert,
            "audio_active": self.audio_active,
            "force": [float(x) for x in self.force],
            "force_degenerate": self.force_degenerate,
        }


def visual_cue(r: ProximityResult, c: FeedbackConfig) -> VisualCue:
    """Closest anatomy name and distance; alert when closer than the
    visual threshold (strict)."""
    d = r.distance - c.tip_offset
    return VisualCue(r.name, d, c.enable_visual and d < c.visual_alert)


def audio_gate(r: ProximityResult, c: FeedbackConfig) -> bool:
    """Alarm fires only for critical anatomy closer than tau_audio."""
    if not c.enable_audio:
        return False
    return r.label in c.critical_labels and (r.distance - c.tip_offset) < c.tau_audio


def haptic_force(r: ProximityResult, c: FeedbackConfig) -> tuple[np.ndarray, bool]:
    """Repulsive force vector. Zero at and beyond tau_force; below it the
    magnitude ramps linearly to f_max (normalized) or f_max*tau_force
    (unnormalized) at the surface, growing further inside. Returns
    (force, degenerate); degenerate means the gradient vanished while the
    force law was active."""
    d = r.distance - c.tip_offset
    if not c.enable_force or d >= c.tau_force:
        return np.zeros(3), False
    if r.gradient is None:
        return np.zeros(3), True
    m = c.f_max * (c.tau_force - d)
    if c.normalize_force:
        m /= c.tau_force
    return m * r.gradient, False


def compose_frame(r: ProximityResult, c: FeedbackConfig, t: float) -> FeedbackFrame:
    """Assemble the per-tick guidance output from one proximity result."""
    force, degenerate = haptic_force(r, c)
    return FeedbackFrame(visual_cue(r, c), audio_gate(r, c), force, t, degenerate, r.label)


def _parse_bool(key: str, text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"bad boolean for {key!r}: {text!r}")


def parse_config_text(text: str, resolve_label=None) -> FeedbackConfig:
    """Parse the plain key=value config format. Keys are the FeedbackConfig
    field names; critical_labels is a comma-separated list of label values
    or anatomy names (names need ``resolve_label``)."""
    kv = parse_keyvalues(text)
    return config_from_keyvalues(kv, resolve_label)


def parse_keyvalues(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def config_from_keyvalues(kv: dict[str, str], resolve_label=None) -> FeedbackConfig:
    kwargs: dict = {}
    for key in ("tau_audio", "tau_force", "f_max", "visual_alert", "tip_offset"):
        if key in kv:
            kwargs[key] = float(kv[key])
    for key in ("normalize_force", "enable_visual", "enable_audio", "enable_force"):
        if key in kv:
            kwargs[key] = _parse_bool(key, kv[key])
    if "critical_labels" in kv and kv["critical_labels"]:
        labels = set()
        for tok in kv["critical_labels"].split(","):
            tok = tok.strip()
            if not tok:
                continue
            try:
                labels.add(int(tok))
            except ValueError:
                if resolve_label is None:
                    raise ValueError(f"cannot resolve anatomy name {tok!r} without a labelmap")
                labels.add(resolve_label(tok))
        kwargs["critical_labels"] = frozenset(labels)
    return FeedbackConfig(**kwargs)
