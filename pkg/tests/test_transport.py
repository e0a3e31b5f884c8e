import json
import math

import pytest
from hypothesis import given, strategies as st

from cancoord.errors import EncodeError, FrameError, ProtocolError, ValidationError
from cancoord.transport import (
    CONTROLLER,
    CoordMessage,
    InProcessCarrier,
    ack,
    config_update,
    decode,
    encode,
    info_request,
    info_response,
    protocol_error,
    recalc_request,
)
from cancoord.utility import OptimalConfigRange, UtilityTable


def test_ack_round_trip():
    m = ack("MLB", "TXP-1", "ConfigUpdate")
    assert decode(encode(m)) == m


def test_config_update_round_trip():
    m = config_update("TXP-1", "TXP", 66.0, 0.984028, {"MLB": 0.998, "CCO": 0.986})
    back = decode(encode(m))
    assert back == m
    assert back.payload["utilities"] == {"CCO": 0.986, "MLB": 0.998}


def test_nan_welfare_is_an_encode_error():
    with pytest.raises(EncodeError):
        encode(config_update("TXP-1", "TXP", 66.0, math.nan, {"MLB": 1.0}))


def test_truncated_line():
    line = encode(recalc_request("MLB", "TXP"))[:-8]
    with pytest.raises(FrameError):
        decode(line)


def test_unknown_kind():
    with pytest.raises(ProtocolError):
        decode(b'{"kind":"Nonsense"}\n')


def test_valid_recalc_request():
    line = b'{"kind":"RecalcRequest","payload":{"cf_id":"MLB","parameter":"TXP"},"request_id":null,"sender":"MLB"}\n'
    m = decode(line)
    assert m.kind == "RecalcRequest" and m.sender == "MLB" and m.request_id is None


def test_encoding_is_canonical():
    line = encode(ack("MLB", "r", "x"))
    assert line.endswith(b"\n") and line.count(b"\n") == 1
    assert line.decode().rstrip("\n") == json.dumps(json.loads(line), sort_keys=True, separators=(",", ":"))


@pytest.mark.parametrize("payload", [{"cf_id": "MLB"}, {"cf_id": 3, "parameter": "TXP"}, {"cf_id": True, "parameter": "TXP"}])
def test_payload_schema(payload):
    with pytest.raises(ValidationError):
        CoordMessage("RecalcRequest", "MLB", payload)


def test_request_id_required():
    with pytest.raises(ValidationError):
        CoordMessage("Ack", "MLB", {"acked": "x"})


names = st.text("ABCDEFGHIJKLMNOPQRSTUVWXYZ", min_size=1, max_size=5)
finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e9, max_value=1e9)
unit = st.floats(0, 1)


@st.composite
def messages(draw):
    kind = draw(st.sampled_from(range(6)))
    sender, rid, param = draw(names), draw(names), draw(names)
    if kind == 0:
        return recalc_request(sender, param)
    if kind == 1:
        return info_request(rid, param, draw(st.lists(finite, max_size=5)))
    if kind == 2:
        n = draw(st.integers(2, 5))
        grid = tuple(float(i) for i in range(n))
        table = UtilityTable(param, grid, tuple(draw(st.lists(unit, min_size=n, max_size=n))))
        return info_response(sender, rid, OptimalConfigRange(param, 0.0, 1.0, 5.0), table)
    if kind == 3:
        return config_update(rid, param, draw(finite), draw(unit), draw(st.dictionaries(names, unit, max_size=3)))
    if kind == 4:
        return ack(sender, rid, draw(names))
    return protocol_error(sender, draw(st.text(max_size=20)), rid)


@given(messages())
def test_codec_round_trip(m):
    assert decode(encode(m)) == m
    assert encode(decode(encode(m))) == encode(m)


def _traffic(seed):
    c = InProcessCarrier(seed)
    for i in range(5):
        for s in ("A", "B", "C"):
            c.send(CONTROLLER, ack(s, f"{s}-{i}", "x"))
    order = []
    while c.pending():
        order += [m.request_id for _, m in c.advance()]
    return order


def test_carrier_is_reproducible():
    assert _traffic(3) == _traffic(3)


@given(st.integers(0, 2**32), st.lists(st.integers(1, 4), min_size=1, max_size=30))
def test_carrier_pair_fifo(seed, delays):
    it = iter(delays)
    c = InProcessCarrier(seed, delay=lambda r, m: next(it))
    got = []
    for i in range(len(delays)):
        c.send(CONTROLLER, ack("AB"[i % 2], str(i), "x"))
        if i % 3 == 0:
            got += c.advance()
    while c.pending():
        got += c.advance()
    assert len(got) == len(delays)
    for s in "AB":
        ids = [int(m.request_id) for _, m in got if m.sender == s]
        assert ids == sorted(ids)


def test_carrier_drop_hook():
    c = InProcessCarrier(drop=lambda r, m: r == "CCO")
    c.send("CCO", ack(CONTROLLER, "1", "x"))
    c.send("MLB", ack(CONTROLLER, "1", "x"))
    assert c.pending() == 1 and len(c.dropped) == 1
