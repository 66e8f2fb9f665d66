import math

import numpy as np
import pytest

from itofflow import core

C = 299_792_458.0


def sinusoid_samples(phase, amplitude=1.0, offset=0.5):
    """Four-phase correlation samples for a given phase offset."""
    return [offset + amplitude * np.cos(phase + t) for t in core.FOUR_PHASES]


class TestDMax:
    def test_reference_values(self):
        # independent evaluation of c / (2 f)
        assert core.d_max(20e6) == pytest.approx(C / 4e7, abs=0.0)
        assert core.d_max(20e6) == pytest.approx(7.49481145, abs=1e-8)
        assert core.d_max(50e6) == pytest.approx(2.99792458, abs=1e-8)

    def test_monotone_decreasing(self):
        freqs = np.linspace(1e6, 1e9, 50)
        values = [core.d_max(f) for f in freqs]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert core.d_max(1e15) < 1e-6

    @pytest.mark.parametrize("bad", [0.0, -1.0, -20e6])
    def test_nonpositive_frequency(self, bad):
        with pytest.raises(ValueError):
            core.d_max(bad)


class TestWrapDepth:
    def test_reference_value(self):
        assert core.wrap_depth(9.0, 20e6) == pytest.approx(9.0 - 7.49481145, abs=1e-8)

    def test_fixed_points(self):
        assert core.wrap_depth(0.0, 20e6) == 0.0
        assert core.wrap_depth(core.d_max(20e6), 20e6) == 0.0

    def test_idempotent_and_in_range(self):
        rng = np.random.default_rng(0)
        d = rng.uniform(-30.0, 30.0, 1000)
        w = core.wrap_depth(d, 20e6)
        assert np.all((w >= 0) & (w < core.d_max(20e6)))
        np.testing.assert_array_equal(core.wrap_depth(w, 20e6), w)


class TestReconstructDepth:
    def test_eighth_wrap_example(self):
        m = sinusoid_samples(math.pi / 4)
        samples = [np.full((2, 3), v) for v in m]
        assert m[0] == pytest.approx(1.2071, abs=1e-4)
        assert m[1] == pytest.approx(-0.2071, abs=1e-4)
        depth = core.reconstruct_depth(*samples, 20e6, epsilon=0.0)
        expected = core.d_max(20e6) / 8.0
        assert expected == pytest.approx(0.93685, abs=1e-5)
        np.testing.assert_allclose(depth.values, expected, atol=1e-9)
        assert depth.valid_mask.all()

    def test_zero_phase(self):
        a, o = 1.0, 0.5
        samples = [np.full((1, 1), v) for v in (a + o, o, -a + o, o)]
        depth = core.reconstruct_depth(*samples, 20e6, epsilon=0.0)
        assert depth.values[0, 0] == 0.0

    def test_full_circle_matches_wrap(self):
        # independent oracle: phase -> depth by the closed formula, wrapped
        f = 20e6
        phases = np.linspace(1e-3, 2 * math.pi - 1e-3, 257)
        samples = [o for o in sinusoid_samples(phases)]
        depth = core.reconstruct_depth(*samples, f, epsilon=0.0)
        expected = core.wrap_depth(phases * C / (4 * math.pi * f), f)
        np.testing.assert_allclose(depth.values, expected, atol=1e-9)

    def test_affine_invariance_exact_path(self):
        rng = np.random.default_rng(1)
        phases = rng.uniform(0.05, 2 * math.pi - 0.05, (8, 9))
        samples = sinusoid_samples(phases)
        base = core.reconstruct_depth(*samples, 20e6, epsilon=0.0).values
        for a, b in [(0.5, -1.0), (2.0, 0.0), (10.0, 3.0)]:
            scaled = [a * m + b for m in samples]
            out = core.reconstruct_depth(*scaled, 20e6, epsilon=0.0).values
            np.testing.assert_allclose(out, base, atol=1e-9)

    def test_epsilon_perturbation_bound(self):
        # |d_eps - d_0| <= (c / 4 pi f) * 2 eps / |m0 - m2| away from the
        # stabilized region
        rng = np.random.default_rng(2)
        f, eps = 20e6, 1e-4
        phases = rng.uniform(0.0, 2 * math.pi, (32, 32))
        samples = sinusoid_samples(phases)
        x = samples[0] - samples[2]
        sel = np.abs(x) > 10 * eps
        d0 = core.reconstruct_depth(*samples, f, epsilon=0.0).values
        de = core.reconstruct_depth(*samples, f, epsilon=eps).values
        bound = (C / (4 * math.pi * f)) * 2 * eps / np.abs(x[sel])
        assert np.all(np.abs(de - d0)[sel] <= bound)

    def test_sign_zero_is_positive(self):
        # m0 - m2 exactly zero: stabilizer keeps the denominator at +eps
        z = np.zeros((1, 1))
        y = np.full((1, 1), 0.5)
        depth = core.reconstruct_depth(z, -y / 2, z, y / 2, 20e6, epsilon=1e-6)
        assert depth.values[0, 0] == pytest.approx(core.d_max(20e6) / 4, rel=1e-4)

    def test_errors(self):
        a = np.zeros((2, 2))
        b = np.zeros((2, 3))
        with pytest.raises(ValueError):
            core.reconstruct_depth(a, a, a, b, 20e6)
        with pytest.raises(ValueError):
            core.reconstruct_depth(a, a, a, a, 20e6, epsilon=-1e-9)
        with pytest.raises(ValueError):
            core.reconstruct_depth(a, a, a, a, 0.0)


class TestSensorConfig:
    @pytest.mark.parametrize(
        "freqs,taps,steps",
        [
            (1, 1, 4),
            (1, 2, 2),
            (3, 1, 12),
            (3, 2, 6),
            (3, 4, 3),
        ],
    )
    def test_timestep_counts(self, freqs, taps, steps):
        cfg = core.SensorConfig.create([20e6, 50e6, 70e6][:freqs], taps)
        assert cfg.n_timesteps == steps
        assert cfg.n_frames == 4 * freqs
        assert cfg.reference_timestep == steps - 1

    def test_two_tap_pairing(self):
        cfg = core.SensorConfig.create([20e6], 2)
        meta = cfg.frame_meta()
        # m0 and m2 share the first timestep on opposite taps
        assert (meta[0].timestep, meta[2].timestep) == (0, 0)
        assert (meta[1].timestep, meta[3].timestep) == (1, 1)
        assert (meta[0].tap, meta[2].tap) == (0, 1)

    def test_phase_schedule(self):
        cfg = core.SensorConfig.create([20e6, 50e6], 1)
        assert cfg.phase_shifts[:4] == core.FOUR_PHASES
        assert cfg.phase_shifts[4:] == core.FOUR_PHASES

    def test_invalid_taps(self):
        with pytest.raises(ValueError):
            core.SensorConfig.create([20e6], 3)

    def test_tampered_layout_rejected(self):
        cfg = core.SensorConfig.create([20e6], 1)
        with pytest.raises(ValueError):
            core.SensorConfig(
                frequencies_hz=cfg.frequencies_hz,
                taps=cfg.taps,
                phase_shifts=cfg.phase_shifts,
                timestep_layout=(0, 1, 2, 2),
                reference_timestep=2,
            )
        with pytest.raises(ValueError):
            core.SensorConfig(
                frequencies_hz=cfg.frequencies_hz,
                taps=cfg.taps,
                phase_shifts=(0.0, 0.5, 1.0, 1.5),
                timestep_layout=cfg.timestep_layout,
                reference_timestep=cfg.reference_timestep,
            )


class TestCombineTaps:
    def test_identity_cases(self):
        m = np.random.default_rng(3).uniform(size=(4, 5))
        np.testing.assert_array_equal(core.combine_taps(m, m), np.zeros_like(m))
        np.testing.assert_allclose(
            core.combine_taps(np.full((2, 2), 2.0), np.full((2, 2), 0.5)), 1.5
        )

    def test_antisymmetry(self):
        rng = np.random.default_rng(4)
        a, b = rng.uniform(size=(3, 3)), rng.uniform(size=(3, 3))
        np.testing.assert_allclose(
            core.combine_taps(a, b) + core.combine_taps(b, a), 0.0, atol=1e-15
        )

    def test_gain_mismatch_calibrated(self):
        # least-squares oracle: tap B reads 1.1x the tap-A response
        rng = np.random.default_rng(5)
        signals = [rng.uniform(0.2, 2.0, (6, 7)) for _ in range(4)]
        pairs = [(s, 1.1 * s) for s in signals]
        calib = core.fit_tap_calibration(pairs)
        for s, sb in pairs:
            assert np.abs(core.combine_taps(s, sb, calib)).max() < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            core.combine_taps(np.zeros((2, 2)), np.zeros((3, 2)))


class TestFitTapCalibration:
    def test_identity_pairs(self):
        rng = np.random.default_rng(6)
        pairs = [(m, m) for m in (rng.uniform(size=(4, 4)) for _ in range(3))]
        calib = core.fit_tap_calibration(pairs)
        np.testing.assert_allclose(calib.gain, 1.0, atol=1e-12)
        np.testing.assert_allclose(calib.offset, 0.0, atol=1e-12)

    def test_exact_recovery(self):
        rng = np.random.default_rng(7)
        mb = [rng.uniform(0.1, 1.0, (5, 5)) for _ in range(3)]
        pairs = [(1.2 * m + 0.05, m) for m in mb]
        calib = core.fit_tap_calibration(pairs)
        np.testing.assert_allclose(calib.gain, 1.2, atol=1e-9)
        np.testing.assert_allclose(calib.offset, 0.05, atol=1e-9)

    def test_constant_fallback(self):
        ma = [np.full((2, 2), v) for v in (1.0, 2.0)]
        mb = [np.full((2, 2), 0.25)] * 2
        calib = core.fit_tap_calibration(list(zip(ma, mb)))
        np.testing.assert_array_equal(calib.gain, 1.0)
        np.testing.assert_allclose(calib.offset, 1.5 - 0.25)

    def test_requires_two_pairs(self):
        with pytest.raises(ValueError):
            core.fit_tap_calibration([(np.zeros((2, 2)), np.zeros((2, 2)))])

    def test_positive_gain_invariant(self):
        with pytest.raises(ValueError):
            core.TapCalibration(gain=np.zeros((2, 2)), offset=np.zeros((2, 2)))


class TestInstanceNormalize:
    def _stack(self, frames):
        cfg = core.SensorConfig.create([20e6], 1)
        return core.MeasurementStack.from_config(frames, cfg)

    def test_moments(self):
        rng = np.random.default_rng(8)
        stack = self._stack(rng.uniform(0.5, 3.0, (4, 6, 6)))
        out = core.instance_normalize(stack)
        assert abs(out.frames.mean()) < 1e-9
        assert abs(out.frames.std() - 1.0) < 1e-6

    def test_constant_stack(self):
        stack = self._stack(np.full((4, 3, 3), 2.5))
        out = core.instance_normalize(stack)
        np.testing.assert_array_equal(out.frames, 0.0)

    def test_reconstruction_preserved(self):
        rng = np.random.default_rng(9)
        phases = rng.uniform(0.05, 2 * math.pi - 0.05, (5, 5))
        frames = np.stack(sinusoid_samples(phases))
        stack = self._stack(frames)
        before = core.reconstruct_stack(stack, epsilon=0.0)[20e6].values
        after = core.reconstruct_stack(core.instance_normalize(stack), epsilon=0.0)[20e6].values
        np.testing.assert_allclose(after, before, atol=1e-9)


class TestReconstructStack:
    def test_two_tap_equals_direct(self):
        rng = np.random.default_rng(10)
        phases = rng.uniform(0.05, 2 * math.pi - 0.05, (6, 6))
        frames = np.stack(sinusoid_samples(phases))
        one_tap = core.MeasurementStack.from_config(frames, core.SensorConfig.create([20e6], 1))
        two_tap = core.MeasurementStack.from_config(frames, core.SensorConfig.create([20e6], 2))
        d1 = core.reconstruct_stack(one_tap, epsilon=0.0)[20e6].values
        d2 = core.reconstruct_stack(two_tap, epsilon=0.0)[20e6].values
        np.testing.assert_array_equal(d1, d2)

    def test_multi_frequency_keys(self):
        freqs = [20e6, 50e6, 70e6]
        cfg = core.SensorConfig.create(freqs, 4)
        frames = np.concatenate(
            [np.stack(sinusoid_samples(np.full((3, 3), 1.0))) for _ in freqs]
        )
        out = core.reconstruct_stack(core.MeasurementStack.from_config(frames, cfg))
        assert list(out) == freqs

    def test_incomplete_group_rejected(self):
        meta = core.SensorConfig.create([20e6], 1).frame_meta()[:3]
        stack = core.MeasurementStack(frames=np.zeros((3, 2, 2)), meta=meta)
        with pytest.raises(ValueError):
            core.reconstruct_stack(stack)


class TestTypes:
    def test_depth_image_shape_check(self):
        with pytest.raises(ValueError):
            core.DepthImage(values=np.zeros((2, 2)), valid_mask=np.ones((3, 2), bool))

    def test_physical_constants(self):
        assert core.PhysicalConstants().c == C
        with pytest.raises(ValueError):
            core.PhysicalConstants(epsilon=0.0)

    def test_stack_frame_count_guard(self):
        cfg = core.SensorConfig.create([20e6], 1)
        with pytest.raises(ValueError):
            core.MeasurementStack.from_config(np.zeros((3, 2, 2)), cfg)
