import json
import math

import numpy as np
import pytest

from itofflow import core, sim
from itofflow.warp import warp as backward_warp


def square_scene(velocity=(2.0, 0.0), size=16.0, width=64, height=48, camera=(0.0, 0.0)):
    return sim.SceneSpec(
        width=width,
        height=height,
        background_depth=9.0,
        sprites=(
            sim.Sprite(
                shape="rectangle",
                depth=3.0,
                amplitude=1.5,
                offset=0.8,
                center=(20.0, 24.0),
                size=(size, size),
                velocity=velocity,
            ),
        ),
        camera_velocity=camera,
    )


class TestRenderMeasurement:
    def test_full_turn_gives_peak(self):
        # depth = d_max makes the phase a full turn: m = O + A
        f = 20e6
        scene = sim.SceneSpec(width=4, height=3, background_depth=core.d_max(f))
        m = sim.render_measurement(scene, 0, f, 0.0)
        np.testing.assert_allclose(m, scene.background_offset + scene.background_amplitude)

    def test_four_phase_sum_cancels(self):
        scene = square_scene()
        total = sum(
            sim.render_measurement(scene, 0, 20e6, theta) for theta in core.FOUR_PHASES
        )
        offsets = sim._scene_maps(scene, 0)[2]
        np.testing.assert_allclose(total, 4 * offsets, atol=1e-12)

    def test_round_trip_recovers_wrapped_depth(self):
        scene = square_scene()
        f = 20e6
        samples = [sim.render_measurement(scene, 1, f, t) for t in core.FOUR_PHASES]
        rec = core.reconstruct_depth(*samples, f, epsilon=0.0)
        depth = sim._scene_maps(scene, 1)[0]
        np.testing.assert_allclose(rec.values, core.wrap_depth(depth, f), atol=1e-9)


class TestSimulateBundle:
    def test_zero_velocity_static_equals_moving(self):
        scene = square_scene(velocity=(0.0, 0.0))
        bundle = sim.simulate_bundle(scene, core.SensorConfig.create([20e6], 1))
        np.testing.assert_array_equal(bundle.moving.frames, bundle.static_gt.frames)

    def test_mf_two_tap_layout(self):
        cfg = core.SensorConfig.create([20e6, 50e6, 70e6], 2)
        bundle = sim.simulate_bundle(square_scene(), cfg)
        assert bundle.moving.frames.shape[0] == 12
        assert cfg.n_timesteps == 6
        meta = bundle.moving.meta
        for k in range(3):
            # (m0, m2) then (m1, m3) per frequency block
            assert meta[4 * k + 0].timestep == meta[4 * k + 2].timestep == 2 * k
            assert meta[4 * k + 1].timestep == meta[4 * k + 3].timestep == 2 * k + 1

    @pytest.mark.parametrize("taps", [1, 2, 4])
    def test_raw_sample_count_independent_of_taps(self, taps):
        cfg = core.SensorConfig.create([20e6, 50e6], taps)
        bundle = sim.simulate_bundle(square_scene(), cfg)
        assert bundle.moving.frames.shape[0] == 8

    def test_true_flow_kinematics(self):
        # velocity (2, 0) over 4 timesteps: the content at the reference
        # footprint sat 6 px to the left at timestep 0, so the backward flow
        # there is (-6, 0)
        scene = square_scene(velocity=(2.0, 0.0))
        bundle = sim.simulate_bundle(scene, core.SensorConfig.create([20e6], 1))
        assert len(bundle.true_flows) == 3
        flow = bundle.true_flows[0]
        # reference center: (20 + 3*2, 24); sample well inside the footprint
        assert flow.u[24, 26] == pytest.approx(-6.0)
        assert flow.v[24, 26] == pytest.approx(0.0)
        # background keeps zero flow
        assert flow.u[5, 5] == 0.0

    def test_warping_by_true_flows_matches_static(self):
        scene = square_scene(velocity=(2.0, 0.0))
        cfg = core.SensorConfig.create([20e6], 1)
        bundle = sim.simulate_bundle(scene, cfg)
        for i, meta in enumerate(cfg.frame_meta()):
            if meta.timestep == cfg.reference_timestep:
                continue
            res = backward_warp(bundle.moving.frames[i], bundle.true_flows[meta.timestep])
            ok = res.mask & ~bundle.disoccluded[meta.timestep]
            err = np.abs(res.warped - bundle.static_gt.frames[i])[ok]
            assert err.max() < 1e-12

    def test_static_reconstructs_to_depth_gt(self):
        cfg = core.SensorConfig.create([20e6, 50e6, 70e6], 1)
        bundle = sim.simulate_bundle(square_scene(), cfg)
        rec = core.reconstruct_stack(bundle.static_gt, epsilon=0.0)
        for f in cfg.frequencies_hz:
            err = np.abs(rec[f].values - bundle.depth_gt[f].values)
            assert err.max() < 1e-9

    def test_camera_translation_moves_everything(self):
        scene = square_scene(velocity=(0.0, 0.0), camera=(1.0, 0.0))
        bundle = sim.simulate_bundle(scene, core.SensorConfig.create([20e6], 1))
        flow = bundle.true_flows[0]
        np.testing.assert_array_equal(flow.u, -3.0)
        np.testing.assert_array_equal(flow.v, 0.0)

    def test_depth_range_validated(self):
        scene = sim.SceneSpec(width=8, height=8, background_depth=2.1 * core.d_max(20e6))
        with pytest.raises(ValueError):
            sim.simulate_bundle(scene, core.SensorConfig.create([20e6], 1))

    def test_disocclusion_band(self):
        scene = square_scene(velocity=(2.0, 0.0))
        bundle = sim.simulate_bundle(scene, core.SensorConfig.create([20e6], 1))
        dis = bundle.disoccluded[0]
        # at timestep 0 the sprite occupied [12, 28] in x; at the reference it
        # occupies [18, 34]: the revealed band is [12, 18)
        assert dis[24, 13] and dis[24, 17]
        assert not dis[24, 20] and not dis[24, 40]


class TestShotNoise:
    def _stack(self, value=2.0, shape=(1, 100, 100)):
        cfg = core.SensorConfig.create([20e6], 1)
        frames = np.full((4, shape[1], shape[2]), value)
        return core.MeasurementStack.from_config(frames, cfg)

    def test_zero_scale_identity(self):
        stack = self._stack()
        out = sim.apply_shot_noise(stack, 0.0, seed=1)
        np.testing.assert_array_equal(out.frames, stack.frames)

    def test_seed_determinism(self):
        stack = self._stack()
        a = sim.apply_shot_noise(stack, 1e-2, seed=42)
        b = sim.apply_shot_noise(stack, 1e-2, seed=42)
        np.testing.assert_array_equal(a.frames, b.frames)
        c = sim.apply_shot_noise(stack, 1e-2, seed=43)
        assert np.any(a.frames != c.frames)

    def test_variance_tracks_signal(self):
        # Monte-Carlo oracle over 1e5 samples at constant m
        value, scale = 2.0, 1e-2
        cfg = core.SensorConfig.create([20e6], 1)
        frames = np.full((4, 200, 125), value)
        stack = core.MeasurementStack.from_config(frames, cfg)
        noise = sim.apply_shot_noise(stack, scale, seed=0).frames - frames
        measured = noise.reshape(4, -1).var(axis=1)
        np.testing.assert_allclose(measured, scale * value, rtol=0.05)

    def test_negative_scale_rejected(self):
        with pytest.raises(ValueError):
            sim.apply_shot_noise(self._stack(), -1.0, seed=0)


class TestSceneJson:
    def valid_doc(self):
        return {
            "width": 32,
            "height": 24,
            "background": {"depth": 9.0, "amplitude": 1.0, "offset": 0.5},
            "camera_velocity": [0.0, 0.0],
            "sprites": [
                {
                    "shape": "rectangle",
                    "depth": 3.0,
                    "amplitude": 1.5,
                    "offset": 0.8,
                    "center": [16.0, 12.0],
                    "size": [8.0, 6.0],
                    "velocity": [2.0, 0.0],
                }
            ],
        }

    def test_round_trip(self):
        scene = sim.scene_from_json(self.valid_doc())
        assert scene.width == 32
        assert scene.sprites[0].velocity == (2.0, 0.0)
        bundle = sim.simulate_bundle(scene, core.SensorConfig.create([20e6], 1))
        assert bundle.moving.frames.shape == (4, 24, 32)

    @pytest.mark.parametrize(
        "mutate,field",
        [
            (lambda d: d.pop("width"), "scene.width"),
            (lambda d: d.__setitem__("width", "wide"), "scene.width"),
            (lambda d: d.pop("background"), "scene.background"),
            (lambda d: d["background"].pop("depth"), "scene.background.depth"),
            (lambda d: d["background"].__setitem__("depth", -1.0), "scene.background.depth"),
            (lambda d: d["sprites"][0].__setitem__("shape", "triangle"), "scene.sprites[0].shape"),
            (lambda d: d["sprites"][0].pop("center"), "scene.sprites[0].center"),
            (lambda d: d["sprites"][0].__setitem__("size", [0.0, 4.0]), "scene.sprites[0].size"),
        ],
    )
    def test_errors_name_the_field(self, mutate, field):
        doc = self.valid_doc()
        mutate(doc)
        with pytest.raises(sim.SceneError) as err:
            sim.scene_from_json(doc)
        assert field in str(err.value)

    def test_disk_sprite(self):
        doc = self.valid_doc()
        doc["sprites"][0].update({"shape": "disk", "size": 5.0})
        scene = sim.scene_from_json(doc)
        assert scene.sprites[0].shape == "disk"
        bundle = sim.simulate_bundle(scene, core.SensorConfig.create([20e6], 1))
        # disk footprint present: sprite depth appears in the depth map
        assert (sim._scene_maps(scene, 0)[0] == 3.0).any()

    def test_texture_kinds(self):
        doc = self.valid_doc()
        doc["texture"] = {"kind": "sinusoid", "amplitude": 0.2, "period": 8.0}
        scene = sim.scene_from_json(doc)
        m1 = sim.render_measurement(scene, 0, 20e6, 0.0)
        m2 = sim.render_measurement(scene, 0, 20e6, 0.0)
        np.testing.assert_array_equal(m1, m2)
        doc["texture"] = {"kind": "smooth_noise", "amplitude": 0.3, "period": 8.0, "seed": 5}
        scene2 = sim.scene_from_json(doc)
        a = sim.render_measurement(scene2, 0, 20e6, 0.0)
        b = sim.render_measurement(scene2, 0, 20e6, 0.0)
        np.testing.assert_array_equal(a, b)
        assert a.std() > 0

    def test_texture_amplitude_bound(self):
        with pytest.raises(ValueError):
            sim.TextureSpec(kind="sinusoid", amplitude=1.0)
