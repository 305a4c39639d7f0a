import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdfguide import (
    FeedbackConfig,
    ProximityResult,
    audio_gate,
    compose_frame,
    haptic_force,
    visual_cue,
)
from sdfguide.feedback import parse_config_text

XHAT = np.array([1.0, 0.0, 0.0])


def result(distance, label=2, gradient=XHAT, name="EAC"):
    return ProximityResult(label, name, distance, gradient, (0, 0, 0))


class TestVisual:
    def test_far_no_alert(self):
        cue = visual_cue(result(2.5), FeedbackConfig())
        assert cue.name == "EAC" and cue.distance == 2.5 and not cue.alert

    def test_near_alerts(self):
        assert visual_cue(result(0.9), FeedbackConfig()).alert

    def test_boundary_is_strict(self):
        assert not visual_cue(result(1.0), FeedbackConfig(visual_alert=1.0)).alert

    def test_tip_offset_shifts_distance(self):
        cue = visual_cue(result(1.4), FeedbackConfig(tip_offset=0.5))
        assert cue.distance == pytest.approx(0.9)
        assert cue.alert


class TestAudio:
    def test_critical_inside_threshold(self):
        c = FeedbackConfig(tau_audio=2.0, critical_labels={2})
        assert audio_gate(result(1.5), c)

    def test_non_critical_never_fires(self):
        c = FeedbackConfig(tau_audio=2.0, critical_labels={7})
        assert not audio_gate(result(0.1), c)

    def test_boundary_is_strict(self):
        c = FeedbackConfig(tau_audio=2.0, critical_labels={2})
        assert not audio_gate(result(2.0), c)


class TestForce:
    def test_zero_at_threshold(self):
        f, degen = haptic_force(result(1.0), FeedbackConfig(tau_force=1.0))
        assert not degen and not f.any()

    def test_normalized_law(self):
        f, _ = haptic_force(result(0.5), FeedbackConfig(tau_force=1.0, f_max=3.0))
        assert f == pytest.approx([1.5, 0.0, 0.0])

    def test_literal_law_coincides_at_unit_threshold(self):
        c = FeedbackConfig(tau_force=1.0, f_max=3.0, normalize_force=False)
        f, _ = haptic_force(result(0.5), c)
        assert f == pytest.approx([1.5, 0.0, 0.0])

    def test_literal_law_scales_with_threshold(self):
        c = FeedbackConfig(tau_audio=2.0, tau_force=2.0, f_max=3.0, normalize_force=False)
        f, _ = haptic_force(result(0.5), c)
        assert f == pytest.approx([4.5, 0.0, 0.0])

    def test_degenerate_gradient_flags_zero_force(self):
        f, degen = haptic_force(result(0.5, gradient=None), FeedbackConfig())
        assert degen and not f.any()

    def test_continuity_at_threshold(self):
        c = FeedbackConfig(tau_force=1.0, f_max=3.0)
        for eps in (1e-3, 1e-6):
            f, _ = haptic_force(result(1.0 - eps), c)
            assert np.linalg.norm(f) <= c.f_max * eps / c.tau_force + 1e-9

    def test_monotone_in_distance(self):
        c = FeedbackConfig(tau_force=1.0, f_max=3.0)
        ds = np.linspace(-1.0, 0.999, 100)
        mags = [np.linalg.norm(haptic_force(result(d), c)[0]) for d in ds]
        assert np.all(np.diff(mags) <= 1e-12)

    @settings(max_examples=300, deadline=None)
    @given(
        st.floats(0.0, 10.0),
        st.floats(0.1, 5.0),
        st.floats(0.1, 10.0),
        st.integers(0, 2**32 - 1),
    )
    def test_cap_normalized_mode(self, d, tau, f_max, seed):
        rng = np.random.default_rng(seed)
        g = rng.normal(size=3)
        g /= np.linalg.norm(g)
        c = FeedbackConfig(tau_audio=tau, tau_force=tau, f_max=f_max)
        f, _ = haptic_force(result(d, gradient=g), c)
        assert np.linalg.norm(f) <= f_max * (1 + 1e-12)

    def test_interior_keeps_growing(self):
        c = FeedbackConfig(tau_force=1.0, f_max=3.0)
        f, _ = haptic_force(result(-2.0), c)
        assert np.linalg.norm(f) == pytest.approx(9.0)


class TestFrame:
    def test_compose_far(self):
        frame = compose_frame(result(2.5), FeedbackConfig(critical_labels={2}), 1.25)
        assert frame.timestamp == 1.25
        assert not frame.visual.alert
        assert not frame.audio_active  # 2.5 mm > tau_audio default 2.0
        assert not frame.force.any()

    def test_compose_matches_parts(self):
        c = FeedbackConfig(critical_labels={2})
        for d in (2.5, 0.9, 0.5):
            r = result(d)
            frame = compose_frame(r, c, 0.0)
            assert frame.visual == visual_cue(r, c)
            assert frame.audio_active == audio_gate(r, c)
            assert np.array_equal(frame.force, haptic_force(r, c)[0])

    def test_audio_implies_within_tau_audio(self):
        c = FeedbackConfig(critical_labels={2})
        for d in np.linspace(-1, 4, 40):
            frame = compose_frame(result(d), c, 0.0)
            if frame.audio_active:
                assert frame.visual.distance < c.tau_audio

    def test_force_implies_audio_when_thresholds_ordered(self):
        c = FeedbackConfig(tau_audio=2.0, tau_force=1.0, critical_labels={2})
        for d in np.linspace(-1, 3, 50):
            frame = compose_frame(result(d), c, 0.0)
            if np.linalg.norm(frame.force) > 0:
                assert frame.audio_active

    def test_modality_independence(self):
        base = FeedbackConfig(critical_labels={2})
        r = result(0.4)
        ref = compose_frame(r, base, 0.0)
        no_audio = compose_frame(r, FeedbackConfig(critical_labels={2}, enable_audio=False), 0.0)
        assert np.array_equal(no_audio.force, ref.force)
        assert no_audio.visual == ref.visual
        assert not no_audio.audio_active
        no_force = compose_frame(r, FeedbackConfig(critical_labels={2}, enable_force=False), 0.0)
        assert no_force.audio_active == ref.audio_active
        assert no_force.visual == ref.visual
        assert not no_force.force.any()
        no_vis = compose_frame(r, FeedbackConfig(critical_labels={2}, enable_visual=False), 0.0)
        assert no_vis.audio_active == ref.audio_active
        assert np.array_equal(no_vis.force, ref.force)
        assert not no_vis.visual.alert


class TestConfig:
    def test_threshold_ordering_enforced(self):
        with pytest.raises(ValueError):
            FeedbackConfig(tau_audio=0.5, tau_force=1.0)

    def test_positive_thresholds(self):
        with pytest.raises(ValueError):
            FeedbackConfig(tau_force=0.0)
        with pytest.raises(ValueError):
            FeedbackConfig(f_max=-1.0)

    def test_parse_text(self):
        c = parse_config_text(
            "# guidance thresholds\n"
            "tau_audio = 3.0\n"
            "tau_force = 1.5\n"
            "f_max = 2.0\n"
            "normalize_force = off\n"
            "critical_labels = 2, 5\n"
            "tip_offset = 0.25\n"
        )
        assert c.tau_audio == 3.0 and c.tau_force == 1.5 and c.f_max == 2.0
        assert not c.normalize_force
        assert c.critical_labels == frozenset({2, 5})
        assert c.tip_offset == 0.25

    def test_parse_names_need_resolver(self):
        with pytest.raises(ValueError, match="labelmap"):
            parse_config_text("critical_labels = EAC\n")
        c = parse_config_text("critical_labels = EAC\n", resolve_label=lambda n: 2)
        assert c.critical_labels == frozenset({2})

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            parse_config_text("tau_force 1.0\n")
        with pytest.raises(ValueError):
            parse_config_text("normalize_force = maybe\n")
