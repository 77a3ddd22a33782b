import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from gripset.corpus import box_mesh, cylinder_mesh
from gripset.extraction import (extract_region, extract_regions, filter_nonempty,
                                inside_closing_box)
from gripset.geometry import (GraspPose, GripperSpec, estimate_normals, grasp_frame,
                              sample_grasp_candidates, sample_surface_points,
                              to_gripper_frame)
from gripset.model_io import PointCloud
from gripset.transforms import RigidTransform


def random_transform(r, scale=1.0):
    rot = Rotation.random(random_state=int(r.integers(2 ** 31))).as_matrix()
    return RigidTransform(rot, r.uniform(-scale, scale, 3))


@pytest.fixture
def object_cloud():
    cloud = sample_surface_points(cylinder_mesh(0.03, 0.1), 3000, seed=1)
    return estimate_normals(cloud)


def test_disjoint_object_is_empty(spec, object_cloud):
    pose = GraspPose(RigidTransform(np.eye(3), [1.0, 1.0, 1.0]))
    assert extract_region(object_cloud, pose, spec) is None


def test_point_at_grasp_point(spec):
    frame = grasp_frame([0.2, -0.1, 0.3], [0.0, 1.0, 0.0], 1.234, spec)
    region = extract_region(PointCloud([[0.2, -0.1, 0.3]]), GraspPose(frame), spec, "obj")
    assert region.source_object == "obj"
    assert np.allclose(region.points, [[0, 0, spec.depth / 2]], atol=1e-15)


@pytest.mark.parametrize("rotation", [
    np.eye(3),
    np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=float),
    np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], dtype=float),
])
def test_slab_count_matches_brute_force(spec, rotation):
    # 2.5 mm lattice offset by 1.25 mm so no point sits on a box face
    g = np.arange(-0.1, 0.1, 0.0025) + 0.00125
    x, y = np.meshgrid(g, g)
    slab = np.concatenate([np.column_stack([x.ravel(), y.ravel(), np.full(x.size, z)])
                           for z in (0.00125, 0.00375, 0.00625)])
    origin = np.array([0.003, -0.002, -0.004])
    pose = GraspPose(RigidTransform(rotation, origin))
    region = extract_region(slab, pose, spec)

    # Brute force, one point at a time in plain Python.
    expected = 0
    lo, hi = spec.lower, spec.upper
    for p in slab:
        d = p - origin
        local = [sum(d[i] * rotation[i, j] for i in range(3)) for j in range(3)]
        expected += all(lo[j] <= local[j] < hi[j] for j in range(3))
    assert expected > 0
    assert len(region) == expected


def test_half_open_bounds(spec):
    lo, hi = spec.lower, spec.upper
    pts = np.array([lo, hi, [lo[0], 0, 0.01], [hi[0], 0, 0.01], [0, 0, 0.0], [0, 0, spec.depth],
                    [0, lo[1], 0.01], [0, hi[1], 0.01]])
    assert inside_closing_box(pts, spec).tolist() == [True, False, True, False, True, False,
                                                      True, False]


def test_retained_points_inside_box_exactly(spec, object_cloud):
    poses, _ = sample_grasp_candidates(object_cloud, 100, spec, seed=3)
    for region in filter(None, (extract_region(object_cloud, p, spec) for p in poses)):
        assert np.all(region.points >= spec.lower) and np.all(region.points < spec.upper)


def test_conservation_of_points(spec, object_cloud):
    poses, _ = sample_grasp_candidates(object_cloud, 50, spec, seed=9)
    for pose in poses:
        region = extract_region(object_cloud, pose, spec)
        kept = 0 if region is None else len(region)
        outside = np.count_nonzero(~inside_closing_box(to_gripper_frame(object_cloud.points, pose),
                                                       spec))
        assert kept + outside == len(object_cloud)


def test_prefilter_and_batch_match_reference(spec, object_cloud, rng):
    poses, _ = sample_grasp_candidates(object_cloud, 200, spec, seed=5)
    poses += [GraspPose(random_transform(rng, 0.1)) for _ in range(50)]
    batch = extract_regions(object_cloud, poses, spec, "o")
    for pose, got in zip(poses, batch):
        ref = extract_region(object_cloud, pose, spec, "o")
        pre = extract_region(object_cloud, pose, spec, "o", prefilter=True)
        for other in (got, pre):
            if ref is None:
                assert other is None
            else:
                assert np.array_equal(ref.points, other.points)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_rigid_invariance(seed):
    spec = GripperSpec()
    r = np.random.default_rng(seed)
    cloud = PointCloud(r.uniform(-0.05, 0.05, size=(400, 3)))
    pose = GraspPose(random_transform(r, 0.02))
    world = random_transform(r, 3.0)
    a = extract_region(cloud, pose, spec)
    b = extract_region(PointCloud(world.apply(cloud.points)), GraspPose(world @ pose.frame), spec)
    if a is None:
        assert b is None or len(b) <= 1  # only boundary rounding could differ
        return
    # same multiset up to points within rounding of a box face
    margin = 1e-9
    def interior(p):
        return p[np.all((p > spec.lower + margin) & (p < spec.upper - margin), axis=1)]
    ia, ib = interior(a.points), interior(b.points)
    assert len(ia) == len(ib)
    assert np.max(np.abs(np.sort(ia, axis=0) - np.sort(ib, axis=0)), initial=0) <= 1e-9


class TestFilterNonempty:
    def test_all_empty(self):
        res = filter_nonempty([None, None])
        assert res.regions == [] and res.dropped == 2

    def test_order_preserved(self, spec):
        r1 = extract_region(PointCloud([[0, 0, 0.01]]), GraspPose(RigidTransform()), spec, "a")
        r2 = extract_region(PointCloud([[0, 0, 0.02]]), GraspPose(RigidTransform()), spec, "b")
        res = filter_nonempty([r1, None, r2])
        assert res.regions == [r1, r2] and res.dropped == 1

    def test_conservation_on_random_corpus(self, spec, rng):
        cloud = estimate_normals(sample_surface_points(box_mesh(0.05, 0.05, 0.05), 500, 2))
        poses, _ = sample_grasp_candidates(cloud, 100, spec, seed=8)
        poses += [GraspPose(random_transform(rng, 1.0)) for _ in range(100)]
        regions = extract_regions(cloud, poses, spec)
        res = filter_nonempty(regions)
        assert len(res.regions) + res.dropped == len(regions)
        assert res.dropped_empty == sum(r is None for r in regions)

    def test_min_points(self, spec):
        pose = GraspPose(RigidTransform())
        small = extract_region(PointCloud([[0, 0, 0.01]]), pose, spec)
        big = extract_region(PointCloud([[0, 0, 0.01], [0, 0, 0.02]]), pose, spec)
        res = filter_nonempty([small, big, None], min_points=2)
        assert res.regions == [big]
        assert (res.dropped_empty, res.dropped_small) == (1, 1)
