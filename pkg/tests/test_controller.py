import pytest
from hypothesis import given, settings, strategies as st

from cancoord.controller import ABORT, COLLECTING, IDLE, QUEUED, WARNING, Controller
from cancoord.domain import CfDescriptor, Configuration, ParameterSpec, build_grid
from cancoord.errors import ValidationError
from cancoord.transport import (
    CONFIG_UPDATE,
    CONTROLLER,
    INFO_REQUEST,
    INFO_RESPONSE,
    PROTOCOL_ERROR,
    InProcessCarrier,
    CoordMessage,
    ack,
    info_response,
    recalc_request,
)
from cancoord.utility import OptimalConfigRange, UtilityTable, optimal_config_range

from oracles import brute_force_choice, unimodal

GRID = tuple(float(x) for x in range(50, 81))
TABLES = {
    "MLB": UtilityTable("TXP", GRID, tuple(unimodal(GRID, 62))),
    "CCO": UtilityTable("TXP", GRID, tuple(unimodal(GRID, 69))),
}


@pytest.fixture
def ctl(txp_grid, mlb_cco):
    return Controller({"TXP": txp_grid}, mlb_cco, Configuration({"TXP": 65.0}), timeout_ticks=3)


def respond(ctl, cf, request_id):
    t = TABLES[cf]
    return ctl.handle(info_response(cf, request_id, optimal_config_range(t, 5), t))


def kinds(ctl):
    return [e.kind for e in ctl.events]


def test_request_opens_collecting(ctl):
    out = ctl.handle(recalc_request("MLB", "TXP"))
    assert sorted(r for r, _ in out) == ["CCO", "MLB"]
    assert all(m.kind == INFO_REQUEST and m.request_id == "TXP-1" for _, m in out)
    assert ctl.state.phase("TXP") == COLLECTING
    assert ctl.state.transactions["TXP"].pending == {"MLB", "CCO"}


def test_duplicate_request_queued_once(ctl):
    ctl.handle(recalc_request("MLB", "TXP"))
    assert ctl.handle(recalc_request("CCO", "TXP")) == []
    assert ctl.handle(recalc_request("CCO", "TXP")) == []
    assert list(ctl.state.queues["TXP"]) == ["CCO"]
    assert kinds(ctl).count(QUEUED) == 1
    assert kinds(ctl).count(INFO_REQUEST) == 2


def test_unknown_parameter_is_an_error(ctl):
    out = ctl.handle(recalc_request("MLB", "RET"))
    assert kinds(ctl)[-1] == PROTOCOL_ERROR
    assert out[0][0] == "MLB" and out[0][1].kind == PROTOCOL_ERROR
    assert ctl.state.phase("RET") == IDLE


def test_apply_after_both_responses(ctl):
    ctl.handle(recalc_request("MLB", "TXP"))
    assert respond(ctl, "MLB", "TXP-1") == []
    assert ctl.state.transactions["TXP"].pending == {"CCO"}
    out = respond(ctl, "CCO", "TXP-1")
    assert sorted(r for r, _ in out) == ["CCO", "MLB"]
    update = out[0][1]
    assert update.kind == CONFIG_UPDATE and 62 <= update.payload["value"] <= 69
    expected = brute_force_choice(list(GRID), [TABLES["CCO"].utilities, TABLES["MLB"].utilities])[0]
    assert ctl.config.entries["TXP"] == expected
    assert ctl.state.phase("TXP") == IDLE


def test_stale_response_warns(ctl):
    ctl.handle(recalc_request("MLB", "TXP"))
    before = ctl.state.transactions["TXP"].pending.copy()
    respond(ctl, "MLB", "TXP-99")
    assert kinds(ctl)[-1] == WARNING
    assert ctl.state.transactions["TXP"].pending == before


def test_timeout_aborts_without_change(ctl):
    ctl.handle(recalc_request("MLB", "TXP"))
    respond(ctl, "MLB", "TXP-1")
    ctl.tick(3)
    assert ctl.state.phase("TXP") == COLLECTING
    ctl.tick(4)
    assert kinds(ctl)[-1] == ABORT
    assert ctl.config == Configuration({"TXP": 65.0})
    assert ctl.state.phase("TXP") == IDLE


def test_no_timeout_when_all_answer(ctl):
    ctl.handle(recalc_request("MLB", "TXP"))
    respond(ctl, "MLB", "TXP-1")
    respond(ctl, "CCO", "TXP-1")
    ctl.tick(100)
    assert ABORT not in kinds(ctl)


def test_abort_then_retry(ctl):
    ctl.handle(recalc_request("MLB", "TXP"))
    ctl.tick(10)
    out = ctl.handle(recalc_request("MLB", "TXP"))
    rid = out[0][1].request_id
    assert rid == "TXP-2"
    respond(ctl, "MLB", rid)
    respond(ctl, "CCO", rid)
    assert kinds(ctl).count(CONFIG_UPDATE) == 1
    assert ctl.events[-1].kind == CONFIG_UPDATE and ctl.events[-1].payload["request_id"] == "TXP-2"


def test_queued_request_dispatched_after_apply(ctl):
    ctl.handle(recalc_request("MLB", "TXP"))
    ctl.handle(recalc_request("CCO", "TXP"))
    respond(ctl, "MLB", "TXP-1")
    out = respond(ctl, "CCO", "TXP-1")
    assert [m.request_id for _, m in out if m.kind == INFO_REQUEST] == ["TXP-2", "TXP-2"]


def test_cf_config_write_rejected(ctl):
    forged = CoordMessage(CONFIG_UPDATE, "MLB", {"parameter": "TXP", "value": 80.0, "welfare": 1.0, "utilities": {}}, "x")
    out = ctl.handle(forged)
    assert out[0][1].kind == PROTOCOL_ERROR
    assert ctl.config.entries["TXP"] == 65.0
    assert not any(e.kind == CONFIG_UPDATE and e.source != CONTROLLER for e in ctl.events)


def test_response_from_non_member(ctl):
    ctl.handle(recalc_request("MLB", "TXP"))
    ctl.handle(info_response("ZZZ", "TXP-1", optimal_config_range(TABLES["MLB"], 5), TABLES["MLB"]))
    assert kinds(ctl)[-1] == PROTOCOL_ERROR


def test_response_on_wrong_grid(ctl):
    ctl.handle(recalc_request("MLB", "TXP"))
    t = UtilityTable("TXP", (50.0, 51.0), (1.0, 0.5))
    ctl.handle(info_response("MLB", "TXP-1", OptimalConfigRange("TXP", 50, 50, 5), t))
    assert kinds(ctl)[-1] == PROTOCOL_ERROR
    assert ctl.state.transactions["TXP"].pending == {"MLB", "CCO"}


def test_shutdown_aborts(ctl):
    ctl.handle(recalc_request("MLB", "TXP"))
    ctl.shutdown()
    assert ctl.events[-1].kind == ABORT and ctl.events[-1].payload["reason"] == "shutdown"


def test_clock_cannot_go_back(ctl):
    ctl.tick(5)
    with pytest.raises(ValidationError):
        ctl.tick(4)


def test_acks_logged(ctl):
    ctl.handle(ack("MLB", "TXP-1", CONFIG_UPDATE))
    assert ctl.events[-1].source == "MLB"


@settings(max_examples=60)
@given(st.integers(0, 10_000), st.lists(st.sampled_from(["MLB", "CCO"]), min_size=1, max_size=6),
       st.lists(st.integers(1, 3), min_size=1, max_size=8))
def test_random_interleavings(seed, requesters, delays):
    """At most one open transaction per parameter and every request ends in an update."""
    descriptors = [CfDescriptor(cf, "load", frozenset({"TXP"})) for cf in ("MLB", "CCO")]
    grid = build_grid(ParameterSpec("TXP", "dBm", 50, 80, 1))
    ctl = Controller({"TXP": grid}, descriptors, Configuration({"TXP": 65.0}), timeout_ticks=50)
    it = iter(delays * 100)
    carrier = InProcessCarrier(seed, delay=lambda r, m: next(it))
    for cf in requesters:
        carrier.send(CONTROLLER, recalc_request(cf, "TXP"))
    for _ in range(500):
        if not carrier.pending():
            break
        for recipient, msg in carrier.advance():
            if recipient == CONTROLLER:
                out = ctl.handle(msg)
            elif msg.kind == INFO_REQUEST:
                t = TABLES[recipient]
                out = [(CONTROLLER, info_response(recipient, msg.request_id, optimal_config_range(t, 5), t))]
            else:
                out = []
            for target, m in out:
                carrier.send(target, m)
            assert len(ctl.state.transactions) <= 1
    assert not ctl.state.transactions
    assert ABORT not in kinds(ctl)
    # every distinct transaction that was opened ends in exactly one update
    opened = {e.payload["request_id"] for e in ctl.events if e.kind == INFO_REQUEST}
    applied = [e.payload["request_id"] for e in ctl.events if e.kind == CONFIG_UPDATE]
    assert sorted(applied) == sorted(opened)
    assert ctl.state.phase("TXP") == IDLE
