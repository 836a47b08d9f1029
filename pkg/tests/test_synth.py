from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidarbg.errors import ConfigError, EmptyInput
from lidarbg.pointio import read_frames, write_frames
from lidarbg.synth import (BACKGROUND, CLUTTER, FOREGROUND, MovingObject, SceneConfig, StaticBox,
                           background_fraction, default_sensor, generate_frame, generate_scene, inject_vehicle,
                           preset, ray_box_distance, ray_directions, read_boxes, read_point_labels,
                           write_ground_truth)
from lidarbg.tensorize import point_coordinates

SENSOR = default_sensor(resolution=2.0)


def exact(cfg):
    """Noise-free variant: no jitter, drift or range noise."""
    return replace(cfg, jitter_sd_deg=0.0, drift_amplitude_deg=0.0, range_noise_m=0.0)


def brute_ray_box(d, center, size, yaw):
    """Entry distance via the inverse rotation and per-axis interval intersection in scalar Python."""
    c, s = np.cos(yaw), np.sin(yaw)
    o = [-(c * center[0] + s * center[1]), -(-s * center[0] + c * center[1]), -center[2]]
    v = [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
    lo, hi = -np.inf, np.inf
    for k in range(3):
        h = size[k] / 2
        if v[k] == 0:
            if abs(o[k]) > h:
                return np.inf
            continue
        a, b = sorted(((-h - o[k]) / v[k], (h - o[k]) / v[k]))
        lo, hi = max(lo, a), min(hi, b)
    return lo if hi >= lo and lo > 0 else np.inf


class TestRayCasting:
    @settings(max_examples=60)
    @given(st.integers(0, 10_000))
    def test_ray_box_vs_scalar(self, seed):
        r = np.random.default_rng(seed)
        center = r.uniform(-10, 10, 3)
        size = r.uniform(0.5, 5, 3)
        yaw = r.uniform(0, np.pi)
        D = ray_directions(r.uniform(-30, 30, 300), r.uniform(0, 360, 300))
        got = ray_box_distance(D, center, size, yaw)
        want = np.array([brute_ray_box(d, center, size, yaw) for d in D])
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_hit_point_on_box_surface(self):
        center, size, yaw = np.array([8.0, 3.0, -1.0]), (4.0, 2.0, 1.5), 0.4
        D = ray_directions(np.linspace(-20, 5, 60), np.full(60, 70.0))
        t = ray_box_distance(D, center, size, yaw)
        hit = np.isfinite(t)
        assert hit.any()
        P = D[hit] * t[hit, None] - center
        c, s = np.cos(yaw), np.sin(yaw)
        local = np.column_stack([c * P[:, 0] + s * P[:, 1], -s * P[:, 0] + c * P[:, 1], P[:, 2]])
        slack = np.abs(np.abs(local) - np.asarray(size) / 2).min(axis=1)
        assert np.all(slack < 1e-9)
        assert np.all(np.abs(local) <= np.asarray(size) / 2 + 1e-9)

    def test_ray_directions_unit(self):
        D = ray_directions([0, 30, -45], [90, 180, 10])
        np.testing.assert_allclose(np.linalg.norm(D, axis=1), 1.0)
        np.testing.assert_allclose(D[0], [1, 0, 0], atol=1e-12)


class TestScene:
    def test_deterministic_and_order_free(self):
        cfg = preset("snow-low-volume", seed=4, duration_frames=6, sensor=SENSOR)
        f1, g1 = generate_scene(cfg)
        f2, g2 = generate_scene(cfg)
        for a, b in zip(f1, f2):
            for name in ("beam_id", "azimuth_deg", "range_m", "intensity", "returned"):
                np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        alone, lab, _, _ = generate_frame(cfg, 4)
        np.testing.assert_array_equal(alone.range_m, f1[4].range_m)
        np.testing.assert_array_equal(lab, g1.labels[4])
        other, _ = generate_scene(replace(cfg, seed=5))
        assert not np.array_equal(other[0].range_m, f1[0].range_m, equal_nan=True)

    def test_no_vehicles_all_background(self):
        frames, gt = generate_scene(preset("clean-static", duration_frames=3, sensor=SENSOR))
        assert all((lab == BACKGROUND).all() for lab in gt.labels)
        assert background_fraction(frames, gt) == 1.0
        assert gt.counts == (0, 0)

    def test_returns_lie_on_rays(self):
        cfg = exact(preset("clean-static", duration_frames=1, sensor=SENSOR))
        f = generate_scene(cfg)[0][0]
        xyz, _ = point_coordinates(f, cfg.sensor)
        ret = f.returned
        D = ray_directions(np.asarray(cfg.sensor.elevation_deg)[f.beam_id[ret]], f.azimuth_deg[ret])
        np.testing.assert_allclose(xyz[ret], D * f.range_m[ret, None], atol=1e-9)
        assert np.all(xyz[ret, 2] >= -cfg.sensor_height - 1e-9)
        assert (np.abs(xyz[ret, 2] + cfg.sensor_height) < 1e-9).any()

    def test_foreground_inside_true_boxes(self):
        cfg = exact(inject_vehicle(preset("clean-static", duration_frames=30, sensor=SENSOR), 10))
        frames, gt = generate_scene(cfg)
        checked = 0
        for f, lab, oid, boxes in zip(frames, gt.labels, gt.object_ids, gt.boxes):
            xyz, _ = point_coordinates(f, cfg.sensor)
            for b in boxes:
                P = xyz[oid == b.object_id]
                assert len(P) == b.point_count
                c, s = np.cos(b.yaw), np.sin(b.yaw)
                d = P - b.center
                u = d[:, 0] * c + d[:, 1] * s
                v = -d[:, 0] * s + d[:, 1] * c
                tol = 1e-6
                assert np.all(np.abs(u) <= b.length / 2 + tol)
                assert np.all(np.abs(v) <= b.width / 2 + tol)
                assert np.all(np.abs(d[:, 2]) <= b.height / 2 + tol)
                checked += len(P)
            assert np.array_equal(lab == FOREGROUND, oid >= 0)
        assert checked > 100

    def test_snow_is_clutter_at_short_range(self):
        cfg = preset("snow-low-volume", duration_frames=3, sensor=SENSOR)
        frames, gt = generate_scene(cfg)
        f, lab = frames[0], gt.labels[0]
        snow = lab == CLUTTER
        assert snow.sum() > 20
        assert np.all((f.range_m[snow] >= 2.0) & (f.range_m[snow] < 25.0))

    def test_no_return_never_labelled(self):
        cfg = replace(preset("clean-static", duration_frames=2, sensor=SENSOR), no_return_prob=0.3)
        frames, gt = generate_scene(cfg)
        for f, lab in zip(frames, gt.labels):
            assert (lab[~f.returned] == BACKGROUND).all()
            assert np.isnan(f.range_m[~f.returned]).all()

    def test_background_fraction_errors(self):
        with pytest.raises(EmptyInput):
            background_fraction([], None)
        cfg = SceneConfig(sensor=default_sensor(resolution=10.0, max_range=0.5), duration_frames=1)
        frames, gt = generate_scene(cfg)
        with pytest.raises(EmptyInput):
            background_fraction(frames, gt)

    @pytest.mark.parametrize("bad", [dict(duration_frames=-1), dict(snow_rate=-1.0), dict(no_return_prob=2.0),
                                     dict(snow_shell=(5.0, 1.0)), dict(sensor_height=0.0),
                                     dict(objects=(MovingObject(1, ((0, 0),), 1.0, (1, 1, 1)),))])
    def test_validation(self, bad):
        with pytest.raises(ConfigError):
            replace(SceneConfig(), **bad).validate()

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset("fog")

    def test_static_box_occludes(self):
        box = StaticBox((0.0, 10.0, -1.0), (2.0, 1.0, 4.0))
        cfg = exact(SceneConfig(sensor=SENSOR, duration_frames=1, static_boxes=(box,)))
        f = generate_scene(cfg)[0][0]
        hit = f.returned & (np.abs(f.azimuth_deg - 1.0) < 1.0)
        assert np.nanmin(f.range_m[hit]) < 11.0


def test_sidecar_round_trip(tmp_path):
    cfg = inject_vehicle(preset("clean-static", duration_frames=12, sensor=SENSOR), 2)
    frames, gt = generate_scene(cfg)
    out = tmp_path / "scene.bin"
    write_frames(frames, out)
    paths = write_ground_truth(frames, gt, out)
    labels = read_point_labels(paths["points"])
    for f, lab in zip(read_frames(out), gt.labels):
        np.testing.assert_array_equal(labels[f.frame_id], lab)
    boxes = read_boxes(paths["boxes"])
    for n, bx in enumerate(gt.boxes):
        want = [b.center for b in bx if b.point_count >= 1]
        np.testing.assert_array_equal(boxes.get(n, []), want)


def test_urban_peak_background_fraction():
    frames, gt = generate_scene(preset("urban-peak", duration_frames=60, sensor=default_sensor(resolution=0.8)))
    assert 0.90 <= background_fraction(frames, gt) <= 0.97


def test_foreground_rays_match_oracle():
    sensor = default_sensor(resolution=3.0, max_range=40.0)
    box = MovingObject(1, ((-60.0, 8.0), (60.0, 8.0)), 20.0, (4.0, 2.0, 1.5))
    cfg = exact(SceneConfig(sensor=sensor, duration_frames=60, objects=(box,)))
    B, A, res = sensor.beams, sensor.azimuth_bins, sensor.azimuth_resolution_deg
    omega = np.asarray(sensor.elevation_deg)[np.tile(np.arange(B), A)]
    alpha = (np.repeat(np.arange(A), B) + 0.5) * res
    D = ray_directions(omega, alpha)
    ground = np.where(D[:, 2] < 0, -cfg.sensor_height / np.where(D[:, 2] < 0, D[:, 2], -1.0), np.inf)
    seen = {True: 0, False: 0}
    for n in range(0, 60, 3):
        f, lab, _, _ = generate_frame(cfg, n)
        t = n / sensor.rotation_hz
        x = -60.0 + 20.0 * t
        center = (x, 8.0, -cfg.sensor_height + 0.75)
        hit = np.array([brute_ray_box(d, center, (4.0, 2.0, 1.5), 0.0) for d in D])
        want = (hit < ground) & (hit <= sensor.max_range_m)
        np.testing.assert_array_equal(lab == FOREGROUND, want)
        seen[bool(want.any())] += 1
    assert seen[True] and seen[False]
