import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivesense.errors import DomainError, ParseError, SchemaError
from drivesense.pointcloud import (
    HDL64E,
    PUCK,
    Bounds,
    GroundConfig,
    KittiLabel,
    PointCloud,
    SensorProfile,
    cluster,
    crop,
    decimate,
    decimate_labels,
    format_frame,
    intersect_profiles,
    parse_frame,
    parse_kitti_labels,
    remove_ground,
    rotate_z,
)

from helpers import box_points, cloud_from

HEADER = "x,y,z,intensity,ring,vertical_angle\n"


def parse(text):
    return parse_frame(text, frame_id="f", timestamp_us=10)


def test_parse_single_row():
    c = parse(HEADER + "1.0,2.0,0.5,100,3,-9.0\n")
    assert len(c) == 1
    assert c.xyz[0].tolist() == [1.0, 2.0, 0.5]
    assert c.ring[0] == 3
    assert c.vertical_angle[0] == -9.0
    assert c.frame_id == "f" and c.timestamp_us == 10


def test_parse_empty_and_bytes():
    assert len(parse(HEADER)) == 0
    assert len(parse_frame(HEADER.encode(), frame_id="f", timestamp_us=1)) == 0


def test_parse_intensity_out_of_range():
    with pytest.raises(SchemaError):
        parse(HEADER + "1,2,0.5,300,3,-9\n")


def test_parse_malformed_row_names_line():
    with pytest.raises(ParseError) as exc:
        parse(HEADER + "1,2,0.5,100,3,-9\n1,2,oops,100,3,-9\n")
    assert exc.value.line == 3


def test_parse_missing_column():
    with pytest.raises(SchemaError):
        parse("x,y,z,ring\n1,2,3,0\n")


def test_vertical_angle_computed_when_absent():
    c = parse("x,y,z,intensity,ring\n1,0,1,5,0\n")
    assert c.vertical_angle[0] == pytest.approx(45.0)


def test_format_roundtrip():
    c = cloud_from([[1.25, -3.5, 0.125], [10, 2, -1]], intensity=[3, 250], ring=[1, 7])
    back = parse(format_frame(c))
    assert np.allclose(back.xyz, c.xyz, atol=1e-6)
    assert back.ring.tolist() == [1, 7]


def test_kitti_bin():
    arr = np.array([[10, 0, 0, 0.5], [5, 5, -1, 1.0]], dtype="<f4")
    c = parse_frame(arr.tobytes(), "kitti-bin", frame_id="k", timestamp_us=1, profile=HDL64E)
    assert len(c) == 2
    assert c.intensity.tolist() == [127.5, 255.0]
    with pytest.raises(ParseError):
        parse_frame(b"\x00" * 10, "kitti-bin", frame_id="k", timestamp_us=1)


def test_cloud_invariants():
    with pytest.raises(SchemaError):
        cloud_from([[np.nan, 0, 0]])
    with pytest.raises(SchemaError):
        cloud_from([[0, 0, 0]], timestamp_us=0)
    with pytest.raises(SchemaError):
        cloud_from([[0, 0, 0]], frame_id="")


def test_profile_validation():
    with pytest.raises(DomainError):
        SensorProfile("bad", (1.0, 0.0), -5, 5)
    with pytest.raises(DomainError):
        SensorProfile("bad", (0.0, 10.0), -5, 5)


def test_puck_vs_hdl64e_nine_channels():
    matches = intersect_profiles(HDL64E, PUCK)
    assert [m.target_angle for m in matches] == [-15, -13, -11, -9, -7, -5, -3, -1, 1]
    for m in matches:
        # nearest evenly spaced laser is within half the laser pitch
        assert abs(m.source_angle - m.target_angle) <= 26.9 / 63 / 2 + 1e-12


def test_identical_and_disjoint_profiles():
    matches = intersect_profiles(PUCK, PUCK)
    assert [(m.target_index, m.source_index) for m in matches] == [(i, i) for i in range(16)]
    a = SensorProfile("a", (0.0, 5.0, 10.0), 0, 10)
    b = SensorProfile("b", (20.0, 30.0), 20, 30)
    assert intersect_profiles(a, b) == []


def _cloud_at_angles(angles_deg, r=10.0):
    a = np.radians(angles_deg)
    return cloud_from(np.column_stack([r * np.cos(a), np.zeros(len(a)), r * np.sin(a)]))


def test_decimate_example():
    c = _cloud_at_angles([-15, -10, 1, 5])
    out = decimate(c, [-15, -13, -11, -9, -7, -5, -3, -1, 1], 0.5)
    assert out.vertical_angle == pytest.approx([-15, 1])
    assert out.frame_id == c.frame_id and out.timestamp_us == c.timestamp_us


def test_decimate_wide_and_empty():
    c = _cloud_at_angles([-15, -10, 1, 5])
    assert decimate(c, [0.0], 90).equals(c)
    assert len(decimate(c, [], 0.5)) == 0
    with pytest.raises(DomainError):
        decimate(c, [0.0], 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 10), min_size=1, max_size=40), st.floats(0.1, 2.0))
def test_decimate_idempotent_subset(angles, tol):
    c = _cloud_at_angles(angles)
    matched = intersect_profiles(HDL64E, PUCK)
    once = decimate(c, matched, tol)
    assert decimate(once, matched, tol).equals(once)
    src = {tuple(p) for p in c.xyz.round(12)}
    assert all(tuple(p) in src for p in once.xyz.round(12))


def label(obj="Car", loc=(0.0, 1.0, 10.0), dims=(1.5, 1.8, 4.0), ry=0.0):
    return KittiLabel(obj, 0.0, 0, 0.0, (0, 0, 10, 10), dims, loc, ry)


def test_kitti_label_roundtrip():
    text = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n"
    (lb,) = parse_kitti_labels(text)
    assert lb.dimensions == (1.65, 1.67, 3.64)
    assert parse_kitti_labels(lb.to_line())[0] == lb
    with pytest.raises(ParseError):
        parse_kitti_labels("Car 1 2 3\n")
    with pytest.raises(SchemaError):
        parse_kitti_labels("Car 0 0 0 0 0 0 0 0 1 1 0 0 0 0\n")


def test_decimate_labels():
    # a 50-point cluster around velodyne (10, 0, -0.8); camera location is the box bottom
    pts = box_points(10, 0, 1.4, 3.6, z=(-1.5, -0.1), n=50)
    cloud = cloud_from(pts)
    # rotation_y = -pi/2 points the box length along camera z, i.e. velodyne x
    car = label("Car", loc=(0.0, 1.6, 10.0), ry=-math.pi / 2)
    ped = label("Pedestrian", loc=(0.0, 1.6, 10.0), ry=-math.pi / 2)
    empty_car = label("Car", loc=(0.0, 1.6, 30.0), ry=-math.pi / 2)
    kept = decimate_labels([car, ped, empty_car], cloud, 1)
    assert kept == [car]
    # brute force count of points inside the box in the velodyne frame
    inside = (np.abs(pts[:, 0] - 10) <= 2.0) & (np.abs(pts[:, 1]) <= 0.9) & (pts[:, 2] <= -1.6 + 1.5) & (pts[:, 2] >= -1.6)
    assert inside.sum() >= 1
    assert decimate_labels([car], cloud, int(inside.sum())) == [car]
    assert decimate_labels([car], cloud, int(inside.sum()) + 1) == []


def test_rotate_z_examples():
    c = cloud_from([[1, 0, 0]])
    assert np.allclose(rotate_z(c, math.pi / 2).xyz, [[0, 1, 0]], atol=1e-9)
    rng = np.random.default_rng(3)
    r = cloud_from(rng.normal(size=(30, 3)) * 10)
    assert np.allclose(rotate_z(rotate_z(r, math.pi), math.pi).xyz, r.xyz, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.integers(0, 2**31))
def test_rotate_z_isometry(angle, seed):
    rng = np.random.default_rng(seed)
    c = cloud_from(rng.normal(size=(20, 3)) * 20)
    r = rotate_z(c, angle)
    d0 = np.linalg.norm(c.xyz[:, None] - c.xyz[None], axis=-1)
    d1 = np.linalg.norm(r.xyz[:, None] - r.xyz[None], axis=-1)
    assert np.allclose(d0, d1, rtol=1e-9, atol=1e-9)
    assert np.array_equal(r.xyz[:, 2], c.xyz[:, 2])
    assert np.array_equal(r.ring, c.ring) and np.array_equal(r.intensity, c.intensity)


def test_crop():
    c = cloud_from([[100, 0, 0], [1, 1, 0], [40, 0, 0]])
    out = crop(c, Bounds((-40, 40), (-40, 40)))
    assert out.xyz[:, 0].tolist() == [1, 40]
    assert crop(c, Bounds((-1e3, 1e3), (-1e3, 1e3))).equals(c)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_crop_composes_as_intersection(seed):
    rng = np.random.default_rng(seed)
    c = cloud_from(rng.uniform(-20, 20, size=(200, 3)))
    lo1, lo2 = rng.uniform(-20, 0, size=(2, 3))
    b1 = Bounds(*((lo1[i], lo1[i] + 15) for i in range(3)))
    b2 = Bounds(*((lo2[i], lo2[i] + 15) for i in range(3)))
    both = b1.intersect(b2)
    twice = crop(crop(c, b1), b2)
    if both is None:
        assert len(twice) == 0
    else:
        assert twice.equals(crop(c, both))
    inside = np.all((c.xyz >= lo1) & (c.xyz <= lo1 + 15), axis=1)
    assert len(crop(c, b1)) == inside.sum()


def _ground_scene(seed=0):
    rng = np.random.default_rng(seed)
    plane = np.column_stack([rng.uniform(-20, 20, (1000, 2)), rng.normal(0, 0.02, 1000)])
    box = box_points(5, 5, 2, 4, z=(0.5, 2.0), n=200, seed=seed)
    return cloud_from(np.vstack([plane, box])), 1000


def test_remove_ground_plane():
    c, n_plane = _ground_scene()
    res = remove_ground(c, GroundConfig(inlier_threshold_m=0.2))
    assert res.plane_found
    removed = res.removed
    assert removed[:n_plane].mean() >= 0.99
    assert (~removed[n_plane:]).mean() >= 0.99
    plane = res.plane
    d = np.abs(c.xyz[removed] @ plane[:3] + plane[3])
    assert (d <= 0.2 + 1e-12).all()
    cloud, p = res
    assert len(cloud) == (~removed).sum() and p is plane


def test_remove_ground_no_plane_and_pure_plane():
    rng = np.random.default_rng(4)
    noise = cloud_from(rng.uniform(-10, 10, size=(500, 3)))
    res = remove_ground(noise, GroundConfig(min_inlier_fraction=0.3))
    assert not res.plane_found and res.plane is None
    assert res.cloud.equals(noise)
    flat = cloud_from(np.column_stack([rng.uniform(-5, 5, (200, 2)), np.zeros(200)]))
    assert len(remove_ground(flat).cloud) == 0


def test_remove_ground_z_threshold():
    c = cloud_from([[0, 0, -2], [0, 0, 0]])
    res = remove_ground(c, GroundConfig(method="z", z_threshold=-1.5))
    assert res.plane is None and len(res.cloud) == 1


def test_cluster_examples():
    rng = np.random.default_rng(2)
    blobs = np.vstack([rng.normal(0, 0.1, (30, 3)), rng.normal(0, 0.1, (30, 3)) + [10, 0, 0]])
    assert len(cluster(cloud_from(blobs), 0.5, 5)) == 2
    assert cluster(cloud_from([[0, 0, 0]]), 0.5, 2) == []
    chain = np.column_stack([np.arange(20) * 0.4, np.zeros(20), np.zeros(20)])
    assert len(cluster(cloud_from(chain), 0.5, 1)) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.2, 2.0))
def test_cluster_partition_matches_union_find(seed, eps):
    rng = np.random.default_rng(seed)
    xyz = rng.uniform(-5, 5, size=(60, 3))
    groups = cluster(cloud_from(xyz), eps, 1)
    # union-find oracle on planar distances
    parent = list(range(60))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(60):
        for j in range(i + 1, 60):
            if np.hypot(*(xyz[i, :2] - xyz[j, :2])) <= eps:
                parent[find(i)] = find(j)
    expected = {}
    for i in range(60):
        expected.setdefault(find(i), set()).add(i)
    assert sorted(map(sorted, expected.values())) == sorted(sorted(g.tolist()) for g in groups)
    flat = np.concatenate(groups)
    assert len(flat) == len(set(flat.tolist()))
