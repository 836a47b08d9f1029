import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidarbg.config import ClassRules
from lidarbg.detect import (NOISE, GeofencePolygon, ObjectClass, classify_dims, cluster, dbscan, fit_obb,
                            geofence_filter, geofence_mask, lof_filter, lof_mask, lof_scores)
from lidarbg.detect.obb import aabb_area
from lidarbg.errors import DegenerateCluster, InvalidPolygon
from oracles import brute_dbscan, brute_lof, ray_cast_inside, star_polygon


# -- geofence --------------------------------------------------------------------

class TestGeofence:
    def test_no_polygons_is_identity(self, rng):
        P = rng.normal(size=(10, 3))
        np.testing.assert_array_equal(geofence_filter(P, []), P)

    def test_unit_square(self):
        sq = GeofencePolygon([[0, 0], [1, 0], [1, 1], [0, 1]])
        out = geofence_filter(np.array([[0.5, 0.5, 3.0], [2, 2, 0.0]]), [sq])
        np.testing.assert_array_equal(out, [[0.5, 0.5, 3.0]])

    def test_annulus_grid(self):
        outer = [[0, 0], [10, 0], [10, 10], [0, 10]]
        inner = [[3, 3], [7, 3], [7, 7], [3, 7]]
        polys = [GeofencePolygon(outer), GeofencePolygon(inner, include=False)]
        g = np.linspace(-1, 11, 49)
        xy = np.array([(x, y) for x in g for y in g])
        want = [ray_cast_inside(outer, p) and not ray_cast_inside(inner, p) for p in xy]
        np.testing.assert_array_equal(geofence_mask(xy, polys), want)

    @settings(max_examples=40)
    @given(st.integers(0, 10_000), st.integers(3, 9))
    def test_random_polygons(self, seed, n):
        poly = star_polygon(seed, n)
        try:
            gp = GeofencePolygon(poly)
        except InvalidPolygon:
            return
        r = np.random.default_rng(seed + 1)
        xy = np.vstack([np.round(r.uniform(-6, 6, (200, 2)), 2), poly])
        want = [ray_cast_inside(poly, p) for p in xy]
        np.testing.assert_array_equal(gp.covers(xy), want)

    @pytest.mark.parametrize("verts", [
        [[0, 0], [1, 1]],
        [[0, 0], [2, 2], [2, 0], [0, 2]],
        [[0, 0], [1, 0], [2, 0]],
        [[0, 0], [np.nan, 1], [1, 0]],
    ])
    def test_invalid(self, verts):
        with pytest.raises(InvalidPolygon):
            GeofencePolygon(verts)


# -- LOF -------------------------------------------------------------------------

class TestLOF:
    @given(st.integers(0, 10_000), st.integers(12, 60), st.sampled_from([1, 3, 5, 10]))
    def test_matches_brute_force(self, seed, n, k):
        X = np.random.default_rng(seed).normal(size=(n, 3))
        np.testing.assert_allclose(lof_scores(X, k), brute_lof(X, k), rtol=1e-9)

    def test_grid_is_homogeneous(self):
        g = np.arange(6.0)
        X = np.array([(x, y, z) for x in g for y in g for z in g])
        assert lof_mask(X, 10, 1.5).all()

    def test_isolated_point_removed(self, rng):
        X = np.vstack([rng.uniform(0, 1, (60, 3)), [[10.0, 10.0, 10.0]]])
        keep = lof_mask(X, 5, 1.5)
        assert not keep[-1] and keep[:-1].mean() > 0.9
        assert brute_lof(X, 5)[-1] > 1.5

    def test_passthrough_small(self):
        X = np.zeros((5, 3))
        np.testing.assert_array_equal(lof_filter(X, k=10), X)

    def test_duplicates_finite(self):
        X = np.vstack([np.zeros((8, 3)), np.ones((8, 3))])
        assert np.all(np.isfinite(lof_scores(X, 3)))


# -- DBSCAN ----------------------------------------------------------------------

blobs = st.tuples(st.integers(0, 10_000), st.integers(1, 70), st.floats(0.3, 1.5), st.integers(2, 6))


class TestDBSCAN:
    @settings(max_examples=80)
    @given(blobs)
    def test_matches_brute_force(self, args):
        seed, n, eps, min_pts = args
        r = np.random.default_rng(seed)
        centres = r.uniform(0, 8, (3, 3))
        X = centres[r.integers(0, 3, n)] + r.normal(0, 0.6, (n, 3))
        np.testing.assert_array_equal(dbscan(X, eps, min_pts), brute_dbscan(X, eps, min_pts))

    @given(blobs)
    def test_order_independent(self, args):
        seed, n, eps, min_pts = args
        r = np.random.default_rng(seed)
        X = r.uniform(0, 5, (n, 3))
        p = r.permutation(n)
        np.testing.assert_array_equal(dbscan(X, eps, min_pts)[p], dbscan(X[p], eps, min_pts))

    def test_two_blobs(self, rng):
        X = np.vstack([rng.normal(0, 0.1, (20, 3)), rng.normal(0, 0.1, (20, 3)) + [8.0, 0, 0]])
        clusters, noise = cluster(X, eps=0.8, min_pts=5)
        assert len(clusters) == 2 and len(noise) == 0

    def test_sparse_is_noise(self):
        X = np.arange(10.0)[:, None] * np.array([[2.0, 0, 0]])
        assert (dbscan(X, 0.8, 3) == NOISE).all()

    def test_range_scaling_widens_far_radius(self):
        far = np.array([[60.0, 0, 0], [61.2, 0, 0], [62.4, 0, 0]])
        assert (dbscan(far, 0.8, 2) == NOISE).all()
        assert (dbscan(far, 0.8, 2, range_scaling=True, reference_range=30.0) == 0).all()


# -- OBB and classes -------------------------------------------------------------

def rect_points(L, W, yaw, h=1.0):
    g = [(x, y, z) for x in np.linspace(-L / 2, L / 2, 9) for y in np.linspace(-W / 2, W / 2, 5) for z in (0, h)]
    P = np.array(g)
    c, s = np.cos(yaw), np.sin(yaw)
    P[:, :2] = P[:, :2] @ np.array([[c, s], [-s, c]])
    return P + [5.0, -3.0, 0.0]


class TestOBB:
    def test_axis_aligned(self):
        b = fit_obb(rect_points(4, 2, 0.0))
        assert b.yaw == pytest.approx(0.0, abs=1e-9)
        assert (b.length, b.width) == pytest.approx((4.0, 2.0), abs=1e-9)

    @pytest.mark.parametrize("deg", [30.0, 75.0, 120.0, 170.0])
    def test_rotation(self, deg):
        b = fit_obb(rect_points(4, 2, np.radians(deg)))
        assert np.degrees(b.yaw) == pytest.approx(deg, abs=1.0)
        assert (b.length, b.width) == pytest.approx((4.0, 2.0), abs=1e-6)

    @given(st.integers(0, 10_000), st.integers(3, 50))
    def test_contains_all_points(self, seed, n):
        P = np.random.default_rng(seed).normal(size=(n, 3)) * [3, 1, 0.5]
        b = fit_obb(P)
        assert b.contains(P).all()
        assert b.length >= b.width > 0
        assert 0 <= b.yaw < np.pi

    @given(st.integers(0, 10_000), st.floats(0, 2 * np.pi))
    def test_rotation_equivariance(self, seed, theta):
        P = np.random.default_rng(seed).normal(size=(30, 3)) * [4, 1, 1]
        c, s = np.cos(theta), np.sin(theta)
        Q = P.copy()
        Q[:, :2] = P[:, :2] @ np.array([[c, s], [-s, c]])
        a, b = fit_obb(P), fit_obb(Q)
        assert (a.length, a.width, a.height) == pytest.approx((b.length, b.width, b.height), rel=1e-6)

    def test_aabb_oracle_for_aligned_rect(self):
        P = rect_points(4, 2, 0.0)
        b = fit_obb(P)
        assert b.length * b.width == pytest.approx(aabb_area(P))

    @pytest.mark.parametrize("P", [np.zeros((2, 3)), np.array([[0, 0, 0], [1, 1, 0], [2, 2, 5.0]])])
    def test_degenerate(self, P):
        with pytest.raises(DegenerateCluster):
            fit_obb(P)


class TestClassify:
    @pytest.mark.parametrize("L,H,v,want", [
        (0.5, 1.7, 1.2, ObjectClass.PEDESTRIAN),
        (4.5, 1.5, 10.0, ObjectClass.CAR),
        (15.0, 4.0, None, ObjectClass.LARGE_FREIGHT),
        (15.0, 4.0, 0.0, ObjectClass.LARGE_FREIGHT),
        (8.0, 3.0, 12.0, ObjectClass.TRUCK),
        (5.0, 2.8, 8.0, ObjectClass.TRUCK),
        (0.5, 1.7, 8.0, ObjectClass.UNKNOWN),
        (2.0, 0.5, None, ObjectClass.UNKNOWN),
    ])
    def test_rule_table(self, L, H, v, want):
        assert classify_dims(L, H, v) is want

    def test_custom_rules(self):
        rules = ClassRules(car_length=(2.0, 6.0))
        assert classify_dims(2.5, 1.5, None, rules) is ObjectClass.CAR


class TestPipeline:
    def test_partition_and_containment(self):
        from lidarbg.detect import LOF_REMOVED, DetectionPipeline
        from lidarbg.model import train
        from lidarbg.synth import default_sensor, generate_scene, inject_vehicle, preset
        from lidarbg.tensorize import point_coordinates

        sensor = default_sensor(resolution=1.0)
        cfg = inject_vehicle(preset("clean-static", duration_frames=60, sensor=sensor), 30)
        frames, gt = generate_scene(cfg)
        model = train(frames[:30], sensor)
        pipe = DetectionPipeline(model)
        seen_boxes = 0
        for f in frames[45:55]:
            res = pipe.process(f)
            assert list(res.timings)[:5] == ["geofence", "background", "lof", "cluster", "boxes"]
            assert len(res.assignment) == len(res.point_index) == res.foreground.sum()
            assert np.all((res.assignment >= 0) | (res.assignment == NOISE) | (res.assignment == LOF_REMOVED))
            xyz, _ = point_coordinates(f, sensor)
            P = xyz[res.point_index]
            for d in res.detections:
                seen_boxes += 1
                members = P[res.assignment == np.argmin([np.linalg.norm(P[res.assignment == k].mean(0) - d.centroid)
                                                         for k in range(res.assignment.max() + 1)])]
                assert d.obb.contains(members).all()
        assert seen_boxes > 0
