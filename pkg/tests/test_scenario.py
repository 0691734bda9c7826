import json

import numpy as np
import pytest

from drivesense.characterization import IdmParams
from drivesense.errors import ConfigError, ScenarioError
from drivesense.geometry import OrientedBox
from drivesense.pipeline import read_frame_index
from drivesense.pointcloud import PUCK, parse_frame
from drivesense.scenario import (
    ScenarioSpec,
    VehicleSpec,
    generate_scenario,
    read_truth_tracks,
    self_check,
    write_scenario,
)
from drivesense.scene import parse_dynamics


def small(**kw):
    base = dict(frames=20, others=(), azimuth_step_deg=1.0)
    base.update(kw)
    return ScenarioSpec(**base)


def test_constant_leader_self_check():
    scn = generate_scenario(small(frames=60, leader=VehicleSpec(0.0, 40.0, ((15.0, 1e6),))))
    assert self_check(scn) <= 1e-6
    # the same check computed directly from the truth columns
    from drivesense.characterization import idm_accel

    p = scn.spec.ego_params
    for k, d in enumerate(scn.dynamics):
        assert abs(d.accel - idm_accel(p, d.speed, scn.leader_gap[k], scn.leader_closing[k])) <= 1e-6
        assert scn.leader_gap[k] == pytest.approx(scn.truth[k][0].box.cx - 4.5, abs=1e-9)


def test_default_scenario_self_check(default_scenario):
    assert self_check(default_scenario) <= 1e-6
    assert len(default_scenario.clouds) == 100
    assert default_scenario.frame_ids[:2] == ["000000", "000001"]


def test_seed_changes_noise_only():
    a = generate_scenario(small(seed=1))
    b = generate_scenario(small(seed=2))
    c = generate_scenario(small(seed=1))
    assert a.truth == b.truth
    assert [d for d in a.dynamics] == [d for d in b.dynamics]
    assert not np.array_equal(a.clouds[0].xyz, b.clouds[0].xyz)
    assert np.array_equal(a.clouds[0].xyz, c.clouds[0].xyz)
    assert np.array_equal(a.stress.values, c.stress.values)


def test_zero_vehicles_ground_only():
    scn = generate_scenario(small(leader=None, frames=3))
    assert all(v == [] for v in scn.truth)
    for cloud in scn.clouds:
        assert len(cloud) > 0
        # every return lies on the ground plane up to the range noise
        ratio = cloud.xyz[:, 2] / np.linalg.norm(cloud.xyz, axis=1)
        assert np.all(ratio < 0)
        assert np.abs(cloud.xyz[:, 2] + scn.spec.sensor_height).max() < 0.1


def test_ring_structure_follows_sensor():
    scn = generate_scenario(small(frames=1))
    cloud = scn.clouds[0]
    assert set(np.unique(cloud.ring)) <= set(range(PUCK.num_channels))
    assert np.all(np.isin(cloud.vertical_angle, PUCK.channel_angles))
    measured = np.degrees(np.arctan2(cloud.xyz[:, 2], np.hypot(cloud.xyz[:, 0], cloud.xyz[:, 1])))
    assert np.abs(measured - cloud.vertical_angle).max() < 1e-9
    hdl = generate_scenario(small(frames=1, sensor="hdl64e"))
    assert np.unique(hdl.clouds[0].ring).size > 16


def test_vehicle_returns_lie_on_the_box():
    scn = generate_scenario(small(frames=1, range_noise_sigma=0.0, azimuth_step_deg=0.2))
    (lead,) = scn.truth[0]
    b = lead.box
    xyz = scn.clouds[0].xyz
    above = xyz[:, 2] > -scn.spec.sensor_height + 1e-6
    pts = xyz[above]
    assert len(pts) > 20
    assert np.all(np.abs(pts[:, 0] - b.cx) <= b.l / 2 + 1e-9)
    assert np.all(np.abs(pts[:, 1] - b.cy) <= b.w / 2 + 1e-9)
    # the rear face is what the sensor sees
    assert np.median(pts[:, 0]) == pytest.approx(b.cx - b.l / 2, abs=1e-6)


def test_collisions_rejected():
    with pytest.raises(ScenarioError):
        generate_scenario(small(others=(VehicleSpec(0.0, 3.0),)))
    # a stationary car in the adjacent lane that a faster car runs into
    with pytest.raises(ScenarioError):
        generate_scenario(small(frames=40, others=(VehicleSpec(3.5, 10.0, ((0.0, 1e6),)), VehicleSpec(3.5, 0.0, ((30.0, 1e6),)))))
    with pytest.raises(ScenarioError):
        generate_scenario(small(leader=VehicleSpec(0.0, 4.0)))


def test_spec_dict_round_trip():
    spec = small(ego_params=IdmParams(s0=3.0))
    again = ScenarioSpec.from_dict(spec.to_dict())
    assert again == spec
    assert ScenarioSpec.from_dict({"leader": None}).leader is None
    with pytest.raises(ConfigError):
        ScenarioSpec.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        generate_scenario(small(sensor="nope"))


def test_written_files_match(tmp_path):
    scn = generate_scenario(small(frames=5))
    paths = write_scenario(scn, tmp_path)
    entries = read_frame_index(paths["frames"])
    assert [e.frame_id for e in entries] == scn.frame_ids
    assert [e.timestamp_us for e in entries] == scn.times_us
    cloud = parse_frame(entries[2].path.read_bytes(), frame_id=entries[2].frame_id, timestamp_us=entries[2].timestamp_us)
    assert np.allclose(cloud.xyz, scn.clouds[2].xyz, atol=1e-5)
    dyn = parse_dynamics(paths["dynamics"].read_bytes())
    assert [d.speed for d in dyn] == pytest.approx([d.speed for d in scn.dynamics], abs=1e-8)
    truth = read_truth_tracks(paths["truth_tracks"])
    b = truth["000003"][0].box
    t = scn.truth[3][0].box
    assert (b.cx, b.cy, b.w, b.l) == pytest.approx((t.cx, t.cy, t.w, t.l), abs=1e-6)
    params = json.loads(paths["truth_params"].read_text())
    assert params["ego_params"] == scn.spec.ego_params.as_dict()
