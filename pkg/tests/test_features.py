import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from oracles import brute_aabb, cube_surface_points, ellipsoid_points, plane_grid, sphere_points
from pushability.features import (
    FLAG_DEGENERATE_SHAPE,
    FLAG_EMPTY_PATCH,
    SHAPE_MAX,
    Aabb,
    DegenerateShapeError,
    EmptyPatchError,
    ObstacleFeatures,
    compute_aabb,
    compute_theta,
    extract_features,
    fit_ellipsoid,
    mean_surface_normal,
    scale_box,
    surface_patch,
)
from pushability.geom import segment_scene
from pushability.pointcloud import PointCloud
from pushability.synth import CATALOG
from scenes import seated_rock_scene


# -- boxes ----------------------------------------------------------------------


def test_unit_cube_corners():
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    box = compute_aabb(corners)
    np.testing.assert_array_equal(box.min_corner, [0, 0, 0])
    np.testing.assert_array_equal(box.max_corner, [1, 1, 1])
    assert box.volume == 1.0


def test_single_point_box_has_zero_volume():
    assert compute_aabb([[1.0, 2.0, 3.0]]).volume == 0.0


def test_empty_box_rejected():
    with pytest.raises(ValueError):
        compute_aabb(np.zeros((0, 3)))


def test_aabb_matches_linear_scan():
    pts = np.random.default_rng(0).normal(size=(100, 3))
    lo, hi = brute_aabb(pts)
    box = compute_aabb(pts)
    np.testing.assert_array_equal(box.min_corner, lo)
    np.testing.assert_array_equal(box.max_corner, hi)


def test_scale_symmetric_box():
    b = scale_box(Aabb(np.full(3, -1.0), np.full(3, 1.0)), 1.5)
    np.testing.assert_allclose(b.min_corner, -1.5)
    np.testing.assert_allclose(b.max_corner, 1.5)


def test_scale_identity():
    box = Aabb(np.array([0.2, -1, 3]), np.array([1.0, 2, 4]))
    b = scale_box(box, 1.0)
    np.testing.assert_allclose(b.min_corner, box.min_corner)
    np.testing.assert_allclose(b.max_corner, box.max_corner)


def test_scale_about_center():
    b = scale_box(Aabb(np.zeros(3), np.full(3, 2.0)), 1.5)
    np.testing.assert_allclose(b.min_corner, -0.5)
    np.testing.assert_allclose(b.max_corner, 2.5)


def test_scale_below_one_rejected():
    with pytest.raises(ValueError):
        scale_box(Aabb(np.zeros(3), np.ones(3)), 0.9)


@settings(max_examples=50)
@given(c=st.floats(1.0001, 5.0), seed=st.integers(0, 10_000))
def test_volume_scales_cubically(c, seed):
    pts = np.random.default_rng(seed).normal(size=(30, 3))
    centroid = pts.mean(axis=0)
    v0 = compute_aabb(pts).volume
    v1 = compute_aabb(centroid + c * (pts - centroid)).volume
    assert math.isclose(v1, c**3 * v0, rel_tol=1e-9)


# -- shape score ------------------------------------------------------------------


def test_sphere_shape_near_zero():
    _, e = fit_ellipsoid(sphere_points(500))
    assert e < 1e-6


def test_axis_aligned_ellipsoid_near_zero():
    _, e = fit_ellipsoid(ellipsoid_points(500, (2.0, 1.0, 0.5)))
    assert e < 1e-6


def test_cube_more_angular_than_sphere():
    _, es = fit_ellipsoid(sphere_points(500))
    _, ec = fit_ellipsoid(cube_surface_points(500))
    assert ec > es


def test_coefficients_unit_norm_and_sphere_form():
    coef, _ = fit_ellipsoid(sphere_points(500, 3.0, (1, 2, 3)))
    # in the normalized frame a sphere has a = b = c and no cross/linear terms
    assert abs(np.linalg.norm(coef[[0, 1, 2, 6, 7, 8, 9]]) ** 2 + np.sum((coef[3:6] / math.sqrt(2)) ** 2) - 1) < 1e-9
    assert np.allclose(coef[0], coef[1]) and np.allclose(coef[1], coef[2])
    assert np.max(np.abs(coef[3:6])) < 1e-9


def test_too_few_points():
    with pytest.raises(DegenerateShapeError):
        fit_ellipsoid(sphere_points(9))


def test_coplanar_points_degenerate():
    with pytest.raises(DegenerateShapeError):
        fit_ellipsoid(plane_grid(1.0, 0.1))


def test_coincident_points_degenerate():
    with pytest.raises(DegenerateShapeError):
        fit_ellipsoid(np.ones((20, 3)))


@settings(max_examples=30)
@given(
    q=st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 0.1),
    t=st.lists(st.floats(-100, 100), min_size=3, max_size=3),
)
def test_shape_rigid_motion_invariant(q, t):
    R = Rotation.from_quat(q).as_matrix()
    pts = cube_surface_points(400, 0.7, seed=4)
    _, e0 = fit_ellipsoid(pts)
    _, e1 = fit_ellipsoid(pts @ R.T + np.asarray(t))
    assert abs(e0 - e1) < 1e-6


# -- surface patch and theta ---------------------------------------------------------


def test_patch_on_flat_plane():
    cloud, _ = seated_rock_scene()
    seg = segment_scene(cloud)
    assert seg.n_obstacles == 1
    idx, nset = surface_patch(seg, cloud, seg.normals, 0, 1.5)
    # membership is exactly: ground, inside the scaled footprint, above the scaled floor
    scaled = scale_box(compute_aabb(cloud.points[seg.clusters[0]]), 1.5)
    g = seg.ground_indices
    p = cloud.points[g]
    inside = (
        (p[:, 0] >= scaled.min_corner[0])
        & (p[:, 0] <= scaled.max_corner[0])
        & (p[:, 1] >= scaled.min_corner[1])
        & (p[:, 1] <= scaled.max_corner[1])
        & (p[:, 2] >= scaled.min_corner[2])
    )
    assert set(idx) == set(g[inside])
    # terrain points whose neighborhood cannot reach the rock see the exact plane
    rock = cloud.points[cloud.labels >= 0]
    far = np.array([np.min(np.linalg.norm(rock - cloud.points[i], axis=1)) > 0.2 for i in idx])
    terrain = cloud.labels[idx] < 0
    assert (far & terrain).sum() > 50
    np.testing.assert_allclose(nset[far & terrain], np.tile([0, 0, 1.0], ((far & terrain).sum(), 1)), atol=1e-6)
    assert math.degrees(math.acos(mean_surface_normal(nset)[2])) < 1.0


def test_patch_grows_with_scale():
    cloud, _ = seated_rock_scene()
    seg = segment_scene(cloud)
    counts = [len(surface_patch(seg, cloud, seg.normals, 0, s)[0]) for s in (1.0, 1.25, 1.5, 2.0, 3.0)]
    assert counts == sorted(counts)


def test_empty_patch_when_footprint_has_no_ground():
    # a floating open cylinder: all normals horizontal, no ground underneath
    ang = np.linspace(0, 2 * np.pi, 60, endpoint=False)
    zs = np.arange(2.0, 2.6, 0.05)
    wall = np.array([[0.3 * np.cos(a), 0.3 * np.sin(a), z] for a in ang for z in zs])
    ground = plane_grid(3.0, 0.1) + [10, 0, 0]
    cloud = PointCloud(np.vstack([ground, wall]))
    seg = segment_scene(cloud)
    assert seg.n_obstacles == 1
    assert np.all(seg.clusters[0] >= len(ground))
    with pytest.raises(EmptyPatchError):
        surface_patch(seg, cloud, seg.normals, 0, 1.0)
    (f,) = extract_features(seg, cloud)
    assert FLAG_EMPTY_PATCH in f.flags
    assert f.theta is None and f.mean_normal is None


def test_patch_normal_on_ramp():
    cloud, terrain = seated_rock_scene(slope_deg=8.0)
    seg = segment_scene(cloud)
    _, nset = surface_patch(seg, cloud, seg.normals, 0, 1.5)
    ramp = terrain.normal_at(4.0, 4.0)
    assert ramp[0] < 0  # rises along +x
    ang = math.degrees(math.acos(min(1.0, float(mean_surface_normal(nset) @ ramp))))
    assert ang < 1.0


def test_theta_orthogonal():
    assert math.isclose(compute_theta([2, 0, 0], [0, 0, 1]), math.pi / 2)


def test_theta_downhill_below_half_pi():
    # ground falling away from the robot tilts its normal forward (+x)
    a = math.radians(15)
    assert compute_theta([2, 0, -0.3], [math.sin(a), 0, math.cos(a)]) < math.pi / 2
    assert compute_theta([2, 0, 0], [math.sin(a), 0, math.cos(a)]) < math.pi / 2
    assert compute_theta([2, 0, 0], [-math.sin(a), 0, math.cos(a)]) > math.pi / 2


def test_theta_parallel_and_antiparallel():
    assert compute_theta([0, 0, 3], [0, 0, 1]) == 0.0
    assert math.isclose(compute_theta([0, 0, -3], [0, 0, 1]), math.pi)


def test_theta_zero_vector():
    with pytest.raises(ValueError):
        compute_theta([0, 0, 0], [0, 0, 1])


@settings(max_examples=100)
@given(
    c=st.lists(st.floats(-10, 10), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3),
    n=st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3),
)
def test_theta_range(c, n):
    assert 0.0 <= compute_theta(c, n) <= math.pi


def test_mean_normal_sign_insensitive():
    n = mean_surface_normal(np.array([[0, 0, 1.0], [0, 0, -1.0], [0.1, 0, -0.99]]))
    assert n[2] > 0.99


# -- extraction ---------------------------------------------------------------------------


def test_no_obstacles_no_features():
    cloud = PointCloud(plane_grid(1.0, 0.05))
    assert extract_features(segment_scene(cloud), cloud) == []


def test_large_rock_volume_exceeds_small():
    vols = []
    for rock in (CATALOG[0], CATALOG[5]):
        cloud, _ = seated_rock_scene(rock=rock, spacing=0.05, density=600)
        seg = segment_scene(cloud)
        feats = extract_features(seg, cloud)
        vols.append(max(f.volume for f in feats))
    assert vols[0] > vols[1]


def test_sphere_volume_close_to_analytic_box():
    r = 0.25
    sph = sphere_points(2500, r, (0, 0, r), seed=3)
    sph = sph[sph[:, 2] > 0.01]
    plane = plane_grid(1.5, 0.05)
    plane = plane[np.linalg.norm(plane[:, :2], axis=1) > 0.2]
    cloud = PointCloud(np.vstack([plane, sph]))
    seg = segment_scene(cloud)
    (f,) = extract_features(seg, cloud)
    assert abs(f.volume - (2 * r) ** 3) / (2 * r) ** 3 < 0.15
    assert f.volume == pytest.approx(float(np.prod(f.box_dims)), rel=0, abs=0)
    assert f.shape >= 0
    assert abs(f.theta - math.pi / 2) < math.radians(2) or f.theta <= math.pi


def test_flat_ground_theta_is_half_pi():
    cloud, _ = seated_rock_scene()
    seg = segment_scene(cloud)
    # shift into a frame where the rock centroid is level with the robot
    (f,) = extract_features(seg, cloud)
    c = f.centroid.copy()
    c[2] = 0.0
    assert abs(compute_theta(c, f.mean_normal) - math.pi / 2) < math.radians(2)


def test_degenerate_shape_flag():
    plane = plane_grid(2.0, 0.05)
    wall = np.array([[1.5, y, z] for y in np.arange(-0.3, 0.31, 0.05) for z in np.arange(0.05, 0.6, 0.05)])
    cloud = PointCloud(np.vstack([plane, wall]))
    seg = segment_scene(cloud)
    feats = extract_features(seg, cloud)
    assert feats, "wall should form an obstacle"
    flagged = [f for f in feats if FLAG_DEGENERATE_SHAPE in f.flags]
    assert flagged and all(f.shape == SHAPE_MAX for f in flagged)


def test_features_json_round_trip():
    f = ObstacleFeatures(
        centroid=np.array([1.0, 2.0, 3.0]),
        box_dims=np.array([0.5, 0.5, 0.25]),
        volume=0.0625,
        shape=0.1,
        mean_normal=np.array([0, 0, 1.0]),
        theta=1.5,
        surface_count=12,
    )
    d = f.to_dict()
    assert set(d) == {"centroid", "box_dims", "volume", "shape", "mean_normal", "theta", "surface_count", "flags"}
    back = ObstacleFeatures.from_dict(d)
    np.testing.assert_array_equal(back.centroid, f.centroid)
    assert back.theta == f.theta and back.volume == f.volume
