import random

import pytest

from debrisim import coap
from debrisim.coap import Code, MessageType
from debrisim.mothership import (
    MissionError,
    MissionParams,
    MissionPhase,
    Mothership,
    PayloadError,
    format_payload,
    parse_payload,
)

LEGAL = {
    (MissionPhase.IDLE, MissionPhase.ANNOUNCED),
    (MissionPhase.ANNOUNCED, MissionPhase.SCHEDULED),
    (MissionPhase.SCHEDULED, MissionPhase.RUNNING),
    (MissionPhase.RUNNING, MissionPhase.DONE),
    (MissionPhase.DONE, MissionPhase.IDLE),
}


def put(path, payload, mid=1):
    return coap.request(Code.PUT, path, mid, payload.encode())


def get(path, mid=1):
    return coap.request(Code.GET, path, mid)


def announced(speed=40, length=1500):
    m = Mothership()
    m.put_mission_params(MissionParams(speed, length), 0.0)
    return m


# -- payload grammar --------------------------------------------------------------


def test_payload_round_trip():
    assert parse_payload("speed:40,len:1500,start:5000") == {"speed": 40, "len": 1500, "start": 5000}
    assert format_payload(start=5000, speed=40, len=1500) == "speed:40,len:1500,start:5000"
    assert format_payload(speed=40, len=1500, start=None) == "speed:40,len:1500"


@pytest.mark.parametrize("text", ["", "speed=40", "speed:40,speed:41", "colour:3", "speed:-1", "speed:4x"])
def test_bad_payloads(text):
    with pytest.raises(PayloadError):
        parse_payload(text)


@pytest.mark.parametrize("speed, length", [(101, 10), (-1, 10), (40, 0)])
def test_params_validated(speed, length):
    with pytest.raises(ValueError):
        MissionParams(speed, length)


# -- requests --------------------------------------------------------------------


def test_base_announce():
    m = Mothership()
    resp = m.handle_request(put("mission", "speed:40,len:1500"), "base", 10.0)
    assert resp.code == Code.CHANGED and resp.mtype == MessageType.ACK and resp.message_id == 1
    assert m.phase is MissionPhase.ANNOUNCED
    assert m.record.params == MissionParams(40, 1500)


def test_get_when_idle_is_not_found():
    assert Mothership().handle_request(get("mission"), "master", 0.0).code == Code.NOT_FOUND


def test_unknown_path():
    assert Mothership().handle_request(put("unknown", "x:1"), "base", 0.0).code == Code.NOT_FOUND


def test_get_logging_not_found():
    assert Mothership().handle_request(get("logging"), "master", 0.0).code == Code.NOT_FOUND


def test_double_announce_rejected():
    m = announced()
    resp = m.handle_request(put("mission", "speed:10,len:10", mid=2), "base", 5.0)
    assert resp.code == Code.BAD_REQUEST
    assert m.record.params == MissionParams(40, 1500) and m.phase is MissionPhase.ANNOUNCED


def test_speed_out_of_range():
    m = Mothership()
    assert m.handle_request(put("mission", "speed:150,len:1500"), "base", 0.0).code == Code.BAD_REQUEST
    assert m.phase is MissionPhase.IDLE


def test_malformed_payload_is_bad_request():
    m = Mothership()
    assert m.handle_request(put("mission", "garbage"), "base", 0.0).code == Code.BAD_REQUEST
    assert m.handle_request(put("mission", "speed:1,start:4", mid=2), "base", 0.0).code == Code.BAD_REQUEST


def test_get_mission_payloads():
    m = announced()
    assert m.get_mission() == "speed:40,len:1500"
    m.put_start_time(5000, 1000.0)
    assert m.get_mission() == "speed:40,len:1500,start:5000"


def test_get_mission_idle_raises():
    with pytest.raises(MissionError) as info:
        Mothership().get_mission()
    assert info.value.code == Code.NOT_FOUND


def test_schedule():
    m = announced()
    m.put_start_time(1500, 1000.0)
    assert m.phase is MissionPhase.SCHEDULED and m.record.start_time_ms == 1500


@pytest.mark.parametrize("start", [900, 1000])
def test_start_must_be_in_future(start):
    m = announced()
    with pytest.raises(MissionError) as info:
        m.put_start_time(start, 1000.0)
    assert info.value.code == Code.BAD_REQUEST and m.phase is MissionPhase.ANNOUNCED


def test_schedule_when_idle():
    with pytest.raises(MissionError):
        Mothership().put_start_time(1500, 0.0)


def test_start_put_over_coap():
    m = announced()
    resp = m.handle_request(put("mission", "start:600"), "master", 100.0)
    assert resp.code == Code.CHANGED and m.record.start_time_ms == 600


def test_logs_append_in_order():
    m = Mothership()
    m.handle_request(put("logging", "actuate@5000"), "master", 5000.0)
    m.handle_request(put("logging", "second", mid=2), "slave", 5000.0)
    m.handle_request(coap.request(Code.PUT, "logging", 3), "slave", 5001.0)
    assert [(e.source, e.server_rx_time_ms, e.payload) for e in m.logs] == [
        ("master", 5000.0, "actuate@5000"),
        ("slave", 5000.0, "second"),
        ("slave", 5001.0, ""),
    ]


def test_retransmitted_request_applied_once():
    m = Mothership()
    req = put("logging", "once", mid=9)
    first = m.handle_request(req, "slave", 1.0)
    second = m.handle_request(req, "slave", 2001.0)
    assert first == second and len(m.logs) == 1
    # the same MID from another peer is a different request
    m.handle_request(req, "master", 2002.0)
    assert len(m.logs) == 2


def test_non_confirmable_gets_non_response():
    m = Mothership()
    req = coap.request(Code.GET, "mission", 4, mtype=MessageType.NON, token=b"\x07")
    resp = m.handle_request(req, "slave", 0.0)
    assert resp.mtype == MessageType.NON and resp.token == b"\x07" and resp.code == Code.NOT_FOUND


def test_ack_needs_no_reply():
    assert Mothership().handle_request(coap.empty_ack(3), "slave", 0.0) is None


# -- ticks and reset ---------------------------------------------------------------


def test_tick_boundary_inclusive():
    m = announced()
    m.put_start_time(5000, 1000.0)
    assert m.tick(4999.0) is None
    assert m.tick(5000.0) is MissionPhase.RUNNING


def test_done_then_idle_clears_params():
    m = announced()
    m.put_start_time(5000, 1000.0)
    m.tick(5000.0)
    assert m.tick(6499.0) is None
    assert m.tick(6500.0) is MissionPhase.DONE
    assert m.tick(6500.0) is MissionPhase.IDLE
    assert m.record.params is None and m.record.start_time_ms is None


def test_idle_tick_is_noop():
    m = Mothership()
    for now in (0.0, 1e9):
        assert m.tick(now) is None and m.phase is MissionPhase.IDLE


def _full_round(m: Mothership, t0: float):
    m.handle_request(put("mission", "speed:40,len:1500", mid=int(t0) + 1), "base", t0)
    m.handle_request(put("mission", f"start:{int(t0) + 500}", mid=int(t0) + 2), "master", t0 + 50)
    polled = m.handle_request(get("mission", mid=int(t0) + 3), "slave", t0 + 60).payload
    for dt in (500, 2000, 2001):
        m.tick(t0 + dt)
    return polled, [(a.value, b.value) for _, a, b in m.transitions[-5:]]


def test_repeated_missions_identical():
    m = Mothership()
    first = _full_round(m, 0.0)
    second = _full_round(m, 4000.0)
    assert first[1] == second[1]
    assert first[0] == b"speed:40,len:1500,start:500"
    assert second[0] == b"speed:40,len:1500,start:4500"
    assert m.phase is MissionPhase.IDLE


def test_random_operations_keep_legal_phases():
    rng = random.Random(11)
    m = Mothership()
    now = 0.0
    log_len = 0
    scheduled = 0
    for i in range(5000):
        now += rng.choice([0.0, 1.0, 50.0, 700.0])
        op = rng.randrange(5)
        if op == 0:
            req = put("mission", f"speed:{rng.randrange(0, 120)},len:{rng.randrange(0, 3000)}", mid=i)
        elif op == 1:
            req = put("mission", f"start:{int(now) + rng.randrange(-100, 1000)}", mid=i)
        elif op == 2:
            req = get(rng.choice(["mission", "logging"]), mid=i)
        elif op == 3:
            req = put("logging", "x", mid=i)
        else:
            m.tick(now)
            req = None
        if req is not None:
            before = m.phase
            resp = m.handle_request(req, rng.choice(["base", "master", "slave"]), now)
            assert resp is not None and resp.message_id == req.message_id
            if before is MissionPhase.ANNOUNCED and m.phase is MissionPhase.SCHEDULED:
                assert m.record.start_time_ms > now
                scheduled += 1
        assert len(m.logs) >= log_len
        log_len = len(m.logs)
    assert {(a, b) for _, a, b in m.transitions} <= LEGAL
    assert scheduled > 5
