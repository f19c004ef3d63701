import math

import numpy as np
import pytest

from lanetrack.detection import DetectionConfig, detect
from lanetrack.dynamics import DynamicsConfig
from lanetrack.geometry import LaneState, LineParam
from lanetrack.observation import ObservationConfig, partition
from lanetrack.simulator import (
    ClutterMode,
    Dropout,
    ScenarioConfig,
    emit_candidates,
    emit_observations,
    render_frames,
    simulate_trajectory,
)

LEFT = LaneState(325.88, 0.0, 47.88, 0.0)
RIGHT = LaneState(-103.35, 0.0, 132.12, 0.0)
STILL = DynamicsConfig(0.0625, 0.0, 0.0)


def scenario(**kw):
    base = dict(n_frames=30, dynamics=STILL, lanes=(("left", LEFT),), detection_noise_sigma=(0.0, 0.0))
    base.update(kw)
    return ScenarioConfig(**base)


class TestTrajectory:
    def test_constant(self):
        truth = simulate_trajectory(scenario())
        assert np.all(truth.lanes["left"] == LEFT.as_array())
        assert truth.n_frames == 30

    def test_constant_velocity(self):
        cfg = scenario(lanes=(("left", LaneState(300.0, 10.0, 47.88, 0.0)),))
        rho = simulate_trajectory(cfg).lanes["left"][:, 0]
        np.testing.assert_array_equal(np.diff(rho), np.full(29, 0.625))

    def test_second_difference_spread(self):
        sigma, T = 8.0, 0.0625
        cfg = scenario(n_frames=10_000, dynamics=DynamicsConfig(T, sigma, 0.0), rho_box=(-1e12, 1e12), seed=4)
        rho = simulate_trajectory(cfg).lanes["left"][:, 0]
        d2 = np.diff(rho, 2)
        # integrated white noise: the second difference has variance 2 T^3 sigma^2 / 3
        assert d2.std() == pytest.approx(math.sqrt(2 * T**3 * sigma**2 / 3), rel=0.05)

    def test_theta_clamped_and_velocity_zeroed(self):
        cfg = scenario(lanes=(("left", LaneState(300.0, 0.0, 70.0, 40.0)),))
        x = simulate_trajectory(cfg).lanes["left"]
        assert x[:, 2].max() == 74.0
        assert np.all(x[x[:, 2] == 74.0, 3] == 0.0)

    def test_seeded(self):
        cfg = scenario(dynamics=DynamicsConfig(0.0625, 8.0, 1.5), seed=3)
        a, b = simulate_trajectory(cfg), simulate_trajectory(cfg)
        assert np.array_equal(a.lanes["left"], b.lanes["left"])
        c = simulate_trajectory(scenario(dynamics=DynamicsConfig(0.0625, 8.0, 1.5), seed=4))
        assert not np.array_equal(a.lanes["left"], c.lanes["left"])

    def test_states_view(self):
        truth = simulate_trajectory(scenario(n_frames=3))
        assert truth.states("left") == [LEFT] * 3


class TestConfig:
    def test_range_checks(self):
        with pytest.raises(ValueError):
            scenario(dropout_ranges=(Dropout("left", 25, 30),))
        with pytest.raises(ValueError):
            scenario(clutter_modes=(ClutterMode(LineParam(1.0, 30.0), 5, 4),))
        with pytest.raises(ValueError):
            scenario(dropout_ranges=(Dropout("right", 1, 2),))
        with pytest.raises(ValueError):
            scenario(lanes=(("left", LEFT), ("left", LEFT)))


class TestEmit:
    def test_exact_truth(self):
        cfg = scenario()
        truth = simulate_trajectory(cfg)
        obs = emit_observations(truth, cfg)["left"]
        assert all(o.K == 1 for o in obs)
        assert all(o.modes[0].line == LEFT.line for o in obs)
        assert [o.frame_index for o in obs] == list(range(30))

    def test_dropout(self):
        cfg = scenario(dropout_ranges=(Dropout("left", 10, 20),))
        obs = emit_observations(simulate_trajectory(cfg), cfg)["left"]
        assert [o.K for o in obs] == [1] * 10 + [0] * 11 + [1] * 9

    def test_persistent_clutter(self):
        cfg = scenario(clutter_modes=(ClutterMode(LineParam(294.36, 68.96), 0, 29),))
        obs = emit_observations(simulate_trajectory(cfg), cfg)["left"]
        assert all(o.K == 2 for o in obs)

    def test_candidates_sorted_by_score(self):
        cfg = scenario(clutter_modes=(ClutterMode(LineParam(294.36, 68.96), 0, 29),), clutter_score=80)
        frames = emit_candidates(simulate_trajectory(cfg), cfg)
        assert all([c.score for c in f] == [80, 60] for f in frames)

    def test_detection_noise_spread(self):
        cfg = scenario(n_frames=4000, detection_noise_sigma=(2.0, 1.0))
        obs = emit_observations(simulate_trajectory(cfg), cfg)["left"]
        r = np.array([o.modes[0].line.rho for o in obs]) - LEFT.rho
        assert r.std() == pytest.approx(2.0, rel=0.05)

    def test_dropout_does_not_shift_other_noise(self):
        # every lane consumes its noise draw even when dropped out
        both = (("left", LEFT), ("right", RIGHT))
        a = scenario(lanes=both, detection_noise_sigma=(2.0, 1.0))
        b = scenario(lanes=both, detection_noise_sigma=(2.0, 1.0), dropout_ranges=(Dropout("left", 0, 29),))
        ra = emit_observations(simulate_trajectory(a), a)["right"]
        rb = emit_observations(simulate_trajectory(b), b)["right"]
        assert [o.modes[0].line for o in ra] == [o.modes[0].line for o in rb]


class TestRender:
    def test_shape_and_range(self):
        cfg = scenario(n_frames=2)
        frames = render_frames(simulate_trajectory(cfg), cfg)
        assert len(frames) == 2 and frames[0].shape == (368, 640, 3)
        assert frames[0].min() >= 0.0 and frames[0].max() <= 1.0

    def test_one_stripe_detected(self):
        cfg = scenario(n_frames=1)
        frame = render_frames(simulate_trajectory(cfg), cfg)[0]
        head = detect(frame, DetectionConfig())[0].line
        assert abs(head.rho - LEFT.rho) <= 1.0 and abs(head.theta - LEFT.theta) <= 1.0

    def test_empty_frame(self):
        cfg = scenario(n_frames=1, dropout_ranges=(Dropout("left", 0, 0),))
        frame = render_frames(simulate_trajectory(cfg), cfg)[0]
        assert detect(frame, DetectionConfig()) == []

    def test_brighter_clutter_scores_higher(self):
        # a faint true stripe loses edge pixels to the threshold
        mirror = LineParam(-LEFT.rho + 640 * math.cos(math.radians(LEFT.theta)), 180.0 - LEFT.theta)
        cfg = scenario(n_frames=1, clutter_modes=(ClutterMode(mirror, 0, 0),), stripe_brightness=0.46, clutter_brightness=0.95)
        found = detect(render_frames(simulate_trajectory(cfg), cfg)[0], DetectionConfig())
        by_side = partition(found, {"left": (15.0, 75.0), "right": (105.0, 165.0)})
        assert by_side["right"] and by_side["left"]
        assert by_side["right"][0].score > by_side["left"][0].score

    def test_seeded_frames(self):
        cfg = scenario(n_frames=2, seed=5)
        a = render_frames(simulate_trajectory(cfg), cfg)
        b = render_frames(simulate_trajectory(cfg), cfg)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_direct_path_matches_rendered(self):
        cfg = scenario(
            n_frames=6,
            lanes=(("left", LEFT), ("right", RIGHT)),
            dynamics=DynamicsConfig(0.0625, 8.0, 1.5),
            detection_noise_sigma=(0.5, 0.25),
            seed=2,
        )
        truth = simulate_trajectory(cfg)
        direct = emit_observations(truth, cfg, ObservationConfig())
        limits = dict(cfg.side_limits)
        for t, frame in enumerate(render_frames(truth, cfg)):
            parts = partition(detect(frame, DetectionConfig()), limits)
            for side in ("left", "right"):
                d = direct[side][t]
                assert len(parts[side]) == d.K
                for c, m in zip(parts[side], d.modes):
                    assert abs(c.line.rho - m.line.rho) <= 2.0 and abs(c.line.theta - m.line.theta) <= 2.0
