import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivesense.errors import ConfigError, ParseError, RangeError, SchemaError
from drivesense.geometry import OrientedBox
from drivesense.scene import (
    EgoSample,
    LaneConfig,
    assign_lane,
    bumper_gap,
    ego_accel_series,
    ego_speed_at,
    format_dynamics,
    parse_dynamics,
    summarize_scene,
)
from drivesense.tracking import TrackedBox

HEADER = "timestamp_us,speed_mps,accel_mps2,steer_deg,throttle,brake\n"


def tb(id_, cx, cy=0.0, vx=0.0, l=4.5):
    return TrackedBox(OrientedBox(cx, cy, 1.8, l, 0.0), "car", 0.9, id_, vx, 0.0)


def test_parse_dynamics_rows():
    text = HEADER + "0,10,0.5,1.0,0.2,0\n100000,11,,,,\n200000,12,0.1,0,0,0.3\n"
    s = parse_dynamics(text.encode())
    assert [x.timestamp_us for x in s] == [0, 100000, 200000]
    assert s[1].accel is None and s[2].brake == 0.3
    assert parse_dynamics(format_dynamics(s)) == s


def test_parse_dynamics_sorts_and_rejects():
    s = parse_dynamics(HEADER + "200,3,,,,\n0,1,,,,\n100,2,,,,\n")
    assert [x.speed for x in s] == [1, 2, 3]
    with pytest.raises(SchemaError):
        parse_dynamics(HEADER + "0,-1,,,,\n")
    with pytest.raises(SchemaError):
        parse_dynamics(HEADER + "0,1,,,,\n0,2,,,,\n")
    with pytest.raises(SchemaError):
        parse_dynamics("timestamp_us,accel_mps2\n0,1\n")
    with pytest.raises(SchemaError):
        parse_dynamics(HEADER + "0,1,,,1.5,\n")
    with pytest.raises(ParseError) as exc:
        parse_dynamics(HEADER + "0,1,,,,\nabc,1,,,,\n")
    assert exc.value.line == 3


def test_ego_speed_at():
    s = [EgoSample(0, 10.0), EgoSample(1_000_000, 20.0)]
    assert ego_speed_at(s, 500_000) == 15.0
    assert ego_speed_at(s, 1_000_000) == 20.0
    assert ego_speed_at(s, 0) == 10.0
    with pytest.raises(RangeError):
        ego_speed_at(s, -1)
    with pytest.raises(RangeError):
        ego_speed_at(s, 1_000_001)
    with pytest.raises(RangeError):
        ego_speed_at([], 0)


def test_ego_accel_series_prefers_logged_column():
    s = [EgoSample(k * 100_000, 10.0 + k, accel=0.25) for k in range(5)]
    assert list(ego_accel_series(s)) == [0.25] * 5
    # without the column: derivative of speed, here a ramp of 10 m/s^2
    s = [EgoSample(k * 100_000, 10.0 + k) for k in range(40)]
    assert ego_accel_series(s) == pytest.approx([10.0] * 40, abs=1e-6)


def test_assign_lane_examples():
    lanes = LaneConfig(3.5)
    assert assign_lane(OrientedBox(10, 0.0, 1.8, 4.5), lanes) == "ego"
    assert assign_lane(OrientedBox(10, 4.0, 1.8, 4.5), lanes) == "left"
    assert assign_lane(OrientedBox(10, -4.0, 1.8, 4.5), lanes) == "right"
    assert assign_lane(OrientedBox(10, -6.0, 1.8, 4.5), lanes) == "outside"
    assert assign_lane(OrientedBox(10, 1.75, 1.8, 4.5), lanes) == "ego"
    assert assign_lane(OrientedBox(10, 5.25, 1.8, 4.5), lanes) == "left"
    assert assign_lane(OrientedBox(10, 4.0, 1.8, 4.5), LaneConfig(3.5, 0)) == "outside"
    with pytest.raises(ConfigError):
        LaneConfig(0.0)


@given(st.floats(-20, 20), st.floats(0.5, 6))
def test_lane_partition(cy, width):
    lanes = LaneConfig(width)
    lane = assign_lane(OrientedBox(0, cy, 1, 1), lanes)
    half = width / 2
    expected = (
        "ego" if abs(cy) <= half
        else "left" if half < cy <= 3 * half
        else "right" if -3 * half <= cy < -half
        else "outside"
    )
    assert lane == expected


def test_summary_examples():
    s = summarize_scene([tb(1, 25), tb(2, 10)], LaneConfig(), ego_speed=20.0, ego_length=4.5)
    lead = s.leader("ego")
    assert lead.id == 2
    assert s.follower("ego") is None
    assert bumper_gap(20, 4.5, 4.5) == 15.5
    assert lead.gap == pytest.approx(10 - 4.5)


def test_summary_relative_speed_convention():
    # leader 2 m/s slower than ego (closing), follower 1 m/s faster than ego (closing)
    s = summarize_scene([tb(1, 15, vx=-2.0), tb(2, -12, vx=1.0)], ego_speed=20.0)
    assert s.leader().rel_speed == 2.0 and s.leader().speed == 18.0
    assert s.follower().rel_speed == 1.0 and s.follower().speed == 21.0


def test_summary_lanes_and_clamp():
    s = summarize_scene([tb(1, 3.0), tb(2, 12, 3.5), tb(3, -9, -3.5), tb(4, 30, 9.0)], ego_length=4.5)
    assert s.leader().gap == 0.1
    assert s.leader("left").id == 2 and s.follower("left") is None
    assert s.follower("right").id == 3 and s.leader("right") is None
    recs = s.records()
    assert [r["lane"] for r in recs] == ["left", "ego", "right"]
    assert all(r["leader"] is None or r["leader"]["gap"] > 0 for r in recs)


track_lists = st.lists(
    st.tuples(st.floats(-60, 60).filter(lambda x: abs(x) > 1e-6), st.floats(-8, 8), st.floats(-10, 10), st.floats(3, 9)),
    max_size=10,
)


@settings(max_examples=60)
@given(track_lists, st.integers(0, 1000))
def test_summary_is_order_invariant(raw, seed):
    tracks = [tb(i + 1, cx, cy, vx, l) for i, (cx, cy, vx, l) in enumerate(raw)]
    a = summarize_scene(tracks, ego_speed=15.0)
    shuffled = list(tracks)
    random.Random(seed).shuffle(shuffled)
    assert summarize_scene(shuffled, ego_speed=15.0) == a
    for lane in ("left", "ego", "right"):
        for n in (a.leader(lane), a.follower(lane)):
            assert n is None or n.gap >= 0.1


@given(st.floats(0, 100), st.floats(0, 100), st.floats(2, 10), st.floats(2, 10))
def test_gap_monotone(x1, x2, own, other):
    lo, hi = sorted((x1, x2))
    g_lo, g_hi = bumper_gap(lo, own, other), bumper_gap(hi, own, other)
    assert g_lo <= g_hi
    if lo > 0.5 * (own + other) + 0.1 and hi > lo:
        assert g_lo < g_hi
    assert bumper_gap(-hi, own, other) == g_hi
