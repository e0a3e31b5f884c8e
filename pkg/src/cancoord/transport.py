"""Coordination message vocabulary, JSON-lines codec and the in-process carrier.

Every message travels as one line of canonical JSON (sorted keys, compact
separators) terminated by ``\\n``::

    {"kind":"RecalcRequest","payload":{"cf_id":"MLB","parameter":"TXP"},"request_id":null,"sender":"MLB"}
"""
from __future__ import annotations

import heapq
import itertools
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

from .errors import EncodeError, FrameError, ProtocolError, ValidationError

CONTROLLER = "controller"

RECALC_REQUEST = "RecalcRequest"
INFO_REQUEST = "InfoRequest"
INFO_RESPONSE = "InfoResponse"
CONFIG_UPDATE = "ConfigUpdate"
ACK = "Ack"
PROTOCOL_ERROR = "ProtocolError"

# required payload fields and their JSON types, per kind
PAYLOAD_SCHEMA: dict[str, dict[str, tuple]] = {
    RECALC_REQUEST: {"cf_id": (str,), "parameter": (str,)},
    INFO_REQUEST: {"parameter": (str,), "grid": (list,)},
    INFO_RESPONSE: {"range": (dict,), "utility_table": (dict,)},
    CONFIG_UPDATE: {"parameter": (str,), "value": (int, float), "welfare": (int, float), "utilities": (dict,)},
    ACK: {"acked": (str,)},
    PROTOCOL_ERROR: {"error": (str,)},
}


def canonical_json(obj: Any) -> str:
    """Deterministic compact JSON; NaN and infinities are rejected."""
    try:
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    except ValueError as exc:
        raise EncodeError(str(exc)) from None


@dataclass(frozen=True)
class CoordMessage:
    kind: str
    sender: str
    payload: Mapping[str, Any] = field(default_factory=dict)
    request_id: Optional[str] = None

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sender": self.sender, "payload": dict(self.payload), "request_id": self.request_id}


def validate(msg: CoordMessage) -> None:
    if msg.kind not in PAYLOAD_SCHEMA:
        raise ProtocolError(f"unknown message kind {msg.kind!r}")
    if not isinstance(msg.sender, str) or not msg.sender:
        raise ValidationError("message sender must be a nonempty string")
    if msg.kind == RECALC_REQUEST:
        if msg.request_id is not None and not isinstance(msg.request_id, str):
            raise ValidationError("request_id must be a string or null")
    elif not isinstance(msg.request_id, str):
        raise ValidationError(f"{msg.kind} requires a string request_id")
    if not isinstance(msg.payload, Mapping):
        raise ValidationError("payload must be a JSON object")
    for key, types in PAYLOAD_SCHEMA[msg.kind].items():
        if key not in msg.payload:
            raise ValidationError(f"{msg.kind} payload is missing {key!r}")
        value = msg.payload[key]
        if isinstance(value, bool) or not isinstance(value, types):
            raise ValidationError(f"{msg.kind} payload field {key!r} has wrong type")


def encode(msg: CoordMessage) -> bytes:
    return (canonical_json(msg.to_dict()) + "\n").encode("utf-8")


def decode(line: bytes | str) -> CoordMessage:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FrameError(f"frame is not UTF-8: {exc}") from None
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FrameError(f"malformed frame: {exc}") from None
    if not isinstance(obj, dict):
        raise FrameError("frame must be a JSON object")
    kind = obj.get("kind")
    if kind not in PAYLOAD_SCHEMA:
        raise ProtocolError(f"unknown message kind {kind!r}")
    return CoordMessage(kind, obj.get("sender"), obj.get("payload"), obj.get("request_id"))


# constructors for each kind

def recalc_request(cf_id: str, parameter: str) -> CoordMessage:
    return CoordMessage(RECALC_REQUEST, cf_id, {"cf_id": cf_id, "parameter": parameter})


def info_request(request_id: str, parameter: str, grid) -> CoordMessage:
    return CoordMessage(INFO_REQUEST, CONTROLLER, {"parameter": parameter, "grid": list(grid)}, request_id)


def info_response(cf_id: str, request_id: str, range_, table) -> CoordMessage:
    return CoordMessage(INFO_RESPONSE, cf_id, {"range": range_.to_dict(), "utility_table": table.to_dict()}, request_id)


def config_update(request_id: str, parameter: str, value: float, welfare: float, utilities) -> CoordMessage:
    payload = {"parameter": parameter, "value": value, "welfare": welfare, "utilities": dict(sorted(utilities.items()))}
    return CoordMessage(CONFIG_UPDATE, CONTROLLER, payload, request_id)


def ack(sender: str, request_id: str, acked: str) -> CoordMessage:
    return CoordMessage(ACK, sender, {"acked": acked}, request_id)


def protocol_error(sender: str, error: str, request_id: str = "") -> CoordMessage:
    return CoordMessage(PROTOCOL_ERROR, sender, {"error": error}, request_id or "")


class InProcessCarrier:
    """Deterministic tick-driven message queue.

    ``send`` schedules a message for delivery ``delay`` ticks after the
    current tick (default 1). Messages due on the same tick are delivered in
    an order drawn from the seeded RNG, but delivery between any
    sender/recipient pair stays FIFO. ``drop`` and ``delay`` hooks let tests
    script losses and latency.
    """

    def __init__(self, seed: int = 0, *, delay: Callable[[str, CoordMessage], int] | None = None,
                 drop: Callable[[str, CoordMessage], bool] | None = None):
        self.now = 0
        self._rng = random.Random(seed)
        self._heap: list = []
        self._counter = itertools.count()
        self._last_due: dict[tuple[str, str], int] = {}
        self.delay_hook = delay
        self.drop_hook = drop
        self.dropped: list[tuple[str, CoordMessage]] = []

    def send(self, recipient: str, msg: CoordMessage) -> None:
        if self.drop_hook is not None and self.drop_hook(recipient, msg):
            self.dropped.append((recipient, msg))
            return
        delay = 1 if self.delay_hook is None else max(1, int(self.delay_hook(recipient, msg)))
        pair = (msg.sender, recipient)
        due = max(self.now + delay, self._last_due.get(pair, 0))
        self._last_due[pair] = due
        seq = next(self._counter)
        heapq.heappush(self._heap, (due, seq, recipient, msg))

    def pending(self) -> int:
        return len(self._heap)

    def advance(self) -> list[tuple[str, CoordMessage]]:
        """Move to the next tick and return the messages due on it."""
        self.now += 1
        due = []
        while self._heap and self._heap[0][0] <= self.now:
            due.append(heapq.heappop(self._heap))
        # shuffle across pairs, then restore FIFO within each pair
        keys = {}
        for item in due:
            pair = (item[3].sender, item[2])
            keys.setdefault(pair, self._rng.random())
        due.sort(key=lambda item: (keys[(item[3].sender, item[2])], item[1]))
        return [(recipient, msg) for _, _, recipient, msg in due]
