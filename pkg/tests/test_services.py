import threading
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
import requests

from drivesense.bevmap import GridConfig, make_frgb
from drivesense.detection import Detection, FailingDetector, OracleDetector, ods_client, serve_ods
from drivesense.detection.service import encode_request
from drivesense.errors import (
    DetectorFailure,
    ServiceClientError,
    ServiceConflict,
    ServiceNotFound,
    ServiceTimeout,
    ServiceUnavailable,
)
from drivesense.geometry import OrientedBox
from drivesense.tracking import Frame, TrackerConfig, mots_client, serve_mots

from helpers import box_points, cloud_from

THREE = [
    Detection(OrientedBox(12.345678, -3.14159, 1.81, 4.52, 0.123456789), "car", 0.912345),
    Detection(OrientedBox(-20.5, 7.25, 2.0, 5.6, -2.9), "van", 0.5),
    Detection(OrientedBox(30.0, 0.001, 2.5, 9.0, 1.0), "truck", 0.25),
]


class Fixed:
    thread_safe = True

    def detect(self, bev):
        return list(THREE)


class Slow:
    thread_safe = False

    def detect(self, bev):
        time.sleep(1.0)
        return []


def bev(frame_id="f0"):
    pts = box_points(10, 0, 1.8, 4.5)
    return make_frgb(cloud_from(pts, frame_id=frame_id), GridConfig())


def close_dets(a, b, tol=1e-6):
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        dx, dy = x.to_dict(), y.to_dict()
        if dx["cls"] != dy["cls"]:
            return False
        if any(abs(dx[k] - dy[k]) > tol for k in ("cx", "cy", "w", "l", "yaw", "score")):
            return False
    return True


@pytest.fixture
def ods():
    handles = []

    def start(detector):
        h = serve_ods(detector)
        handles.append(h)
        return h

    yield start
    for h in handles:
        h.close()


@pytest.fixture
def mots():
    h = serve_mots()
    yield h
    h.close()


def test_ods_round_trip(ods):
    h = ods(Fixed())
    assert close_dets(ods_client(h.url).request_detections(bev()), THREE)


def test_ods_oracle_over_the_wire(ods):
    truth = Detection(OrientedBox(10, 0, 1.8, 4.5, 0.0), "car", 1.0)
    h = ods(OracleDetector({"f0": [truth]}))
    (d,) = ods_client(h.url).request_detections(bev())
    assert close_dets([d], [truth])


def test_ods_missing_metadata_is_client_error(ods):
    h = ods(Fixed())
    body = encode_request(bev())
    del body["meta"]
    r = requests.post(h.url + "/v1/detections", json=body, timeout=5)
    assert r.status_code == 400
    body = encode_request(bev())
    body["meta"] = {k: v for k, v in body["meta"].items() if k not in ("extent_m", "cells_per_side")}
    r = requests.post(h.url + "/v1/detections", json=body, timeout=5)
    assert 400 <= r.status_code < 500
    r = requests.post(h.url + "/v1/detections", data=b"not json", timeout=5)
    assert r.status_code == 400
    assert requests.post(h.url + "/v1/elsewhere", json={}, timeout=5).status_code == 404


def test_ods_error_classes_are_distinguishable(ods):
    failing = ods(FailingDetector())
    with pytest.raises(DetectorFailure) as exc:
        ods_client(failing.url).request_detections(bev("frame-9"))
    assert exc.value.status == 500 and exc.value.frame_id == "frame-9"

    slow = ods(Slow())
    with pytest.raises(ServiceTimeout):
        ods_client(slow.url, timeout=0.2).request_detections(bev())

    with pytest.raises(ServiceUnavailable):
        ods_client("http://127.0.0.1:9", timeout=1).request_detections(bev())

    with pytest.raises(ServiceClientError):
        from drivesense._http import call

        call("POST", failing.url + "/v1/detections", {"map_png": "!!", "meta": {}})


def test_ods_concurrent_identical_requests(ods):
    truth = {"f0": [Detection(OrientedBox(10, 0, 1.8, 4.5), "car", 1.0)]}
    h = ods(OracleDetector(truth, position_sigma=0.2, fp_rate=0.5, fp_slots=3, seed=4))
    client = ods_client(h.url)
    m = bev()
    with ThreadPoolExecutor(8) as pool:
        results = list(pool.map(lambda _: client.request_detections(m), range(16)))
    assert all(r == results[0] for r in results)


def moving(k, vx=5.0, y=0.0):
    return Detection(OrientedBox(vx * k * 0.1, y, 1.8, 4.5), "car", 0.9)


def test_mots_ids_persist(mots):
    c = mots_client(mots.url)
    sid = c.create_session(TrackerConfig(confirm_hits=1))
    outs = [c.post_frame(sid, Frame(str(k), (k + 1) * 100_000, [moving(k)])) for k in range(3)]
    assert [[b.id for b in o.boxes] for o in outs] == [[1], [1], [1]]
    c.close_session(sid)
    with pytest.raises(ServiceNotFound):
        c.post_frame(sid, Frame("x", 10**7, []))
    with pytest.raises(ServiceNotFound):
        c.close_session(sid)


def test_mots_wire_matches_in_process(mots):
    from drivesense.tracking import TrackerSession, update_frame

    cfg = TrackerConfig(confirm_hits=2)
    c = mots_client(mots.url)
    sid = c.create_session(cfg)
    local = TrackerSession(cfg)
    rng = np.random.default_rng(3)
    for k in range(15):
        f = Frame(str(k), (k + 1) * 100_000, [moving(k), moving(k, -2.0, 6.0)][: 1 + k % 2])
        f = Frame(f.frame_id, f.timestamp_us, [Detection(OrientedBox(d.box.cx + rng.normal(0, 0.1), d.box.cy, 1.8, 4.5), "car", 0.9) for d in f.boxes])
        remote = c.post_frame(sid, f)
        here = update_frame(local, f)
        assert [b.id for b in remote.boxes] == [b.id for b in here.boxes]
        for r, h in zip(remote.boxes, here.boxes):
            assert close_dets([r.detection], [h.detection])
            assert abs(r.vx - h.vx) <= 1e-6 and abs(r.vy - h.vy) <= 1e-6


def test_mots_sessions_are_isolated(mots):
    c = mots_client(mots.url)
    a = c.create_session(TrackerConfig(confirm_hits=1))
    b = c.create_session(TrackerConfig(confirm_hits=1))
    assert a != b
    for k in range(4):
        oa = c.post_frame(a, Frame(str(k), (k + 1) * 100_000, [moving(k), moving(k, 1.0, 10.0)]))
        ob = c.post_frame(b, Frame(str(k), (k + 1) * 1_000_000, [moving(k, -3.0, -8.0)]))
    assert sorted(x.id for x in oa.boxes) == [1, 2]
    assert [x.id for x in ob.boxes] == [1]
    assert ob.boxes[0].box.cy == pytest.approx(-8.0, abs=1e-6)


def test_mots_errors(mots):
    c = mots_client(mots.url)
    sid = c.create_session()
    c.post_frame(sid, Frame("a", 100, []))
    with pytest.raises(ServiceConflict):
        c.post_frame(sid, Frame("b", 100, []))
    with pytest.raises(ServiceNotFound):
        c.post_frame("nope", Frame("a", 1, []))
    r = requests.post(mots.url + "/v1/sessions", json={"confirm_hits": 0}, timeout=5)
    assert r.status_code == 400
    r = requests.post(f"{mots.url}/v1/sessions/{sid}/frames", json={"frame_id": "x"}, timeout=5)
    assert r.status_code == 400


def test_mots_concurrent_posts_never_interleave(mots):
    c = mots_client(mots.url)
    sid = c.create_session(TrackerConfig(confirm_hits=1))
    accepted, rejected = [], []
    lock = threading.Lock()

    def post(k):
        try:
            out = c.post_frame(sid, Frame(str(k), (k + 1) * 100_000, [moving(0, 0.0)]))
        except ServiceConflict:
            with lock:
                rejected.append(k)
            return
        with lock:
            accepted.append((k, [b.id for b in out.boxes]))

    with ThreadPoolExecutor(8) as pool:
        list(pool.map(post, range(40)))
    assert len(accepted) + len(rejected) == 40
    assert accepted
    # a single static object keeps one id no matter how the posts were ordered
    assert all(ids == [1] for _, ids in accepted)
    # the highest timestamp always wins a slot or was already overtaken by nothing
    assert max(k for k, _ in accepted) == 39 or 39 in rejected
