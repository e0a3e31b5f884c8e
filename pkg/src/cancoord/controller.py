"""The Controller actor.

It owns the live configuration and is the only component that writes it.
Work is serialized per parameter: a recalculation request opens a
transaction that polls every CF writing that parameter, waits for all
answers (or a logical deadline), runs the welfare optimizer and applies the
result. Requests arriving mid-transaction are queued FIFO, deduplicated by
(cf_id, parameter), and re-examined once the transaction closes.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

from .domain import CfDescriptor, Configuration, ParameterGrid
from .errors import ValidationError
from .nswf import WelfareResult, candidate_set, optimize
from .transport import (
    ACK,
    CONFIG_UPDATE,
    CONTROLLER,
    INFO_REQUEST,
    INFO_RESPONSE,
    PROTOCOL_ERROR,
    RECALC_REQUEST,
    CoordMessage,
    config_update,
    info_request,
    protocol_error,
)
from .utility import OptimalConfigRange, UtilityTable

logger = logging.getLogger(__name__)

IDLE = "Idle"
COLLECTING = "Collecting"
APPLYING = "Applying"

# event kinds beyond the message kinds themselves
REGISTERED = "Registered"
QUEUED = "Queued"
ABORT = "Abort"
WARNING = "Warning"

Outbound = tuple[str, CoordMessage]


@dataclass(frozen=True)
class CoordEvent:
    seq: int
    ts: int
    kind: str
    source: str
    payload: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"seq": self.seq, "ts": self.ts, "kind": self.kind, "source": self.source, "payload": dict(self.payload)}

    @classmethod
    def from_dict(cls, d) -> "CoordEvent":
        return cls(int(d["seq"]), int(d["ts"]), str(d["kind"]), str(d["source"]), dict(d["payload"]))


@dataclass
class Transaction:
    parameter: str
    request_id: str
    requester: str
    started: int
    pending: set
    received: dict = field(default_factory=dict)
    phase: str = COLLECTING


@dataclass
class ControllerState:
    current_config: Configuration
    cfs: dict
    grids: dict
    transactions: dict = field(default_factory=dict)
    queues: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    last_results: dict = field(default_factory=dict)
    last_tables: dict = field(default_factory=dict)

    def phase(self, parameter: str) -> str:
        txn = self.transactions.get(parameter)
        return IDLE if txn is None else txn.phase


class Controller:
    """Single logical actor; call one handler at a time.

    Every handler returns the outbound messages as ``(recipient, message)``
    pairs for the caller's carrier to deliver.
    """

    def __init__(self, grids: Mapping[str, ParameterGrid], descriptors: Sequence[CfDescriptor],
                 config: Configuration, timeout_ticks: int = 10):
        if timeout_ticks < 1:
            raise ValidationError("timeout_ticks must be >= 1")
        grids = dict(grids)
        config.validate(grids)
        cfs = {}
        for d in descriptors:
            if d.cf_id in cfs:
                raise ValidationError(f"duplicate cf_id {d.cf_id!r}")
            if d.cf_id == CONTROLLER:
                raise ValidationError(f"{CONTROLLER!r} is reserved")
            cfs[d.cf_id] = d
        self.timeout_ticks = timeout_ticks
        self.now = 0
        self._request_counter = 0
        self.state = ControllerState(config, cfs, grids)
        self._log(REGISTERED, CONTROLLER, {
            "configuration": dict(config.entries),
            "cfs": [cfs[c].to_dict() for c in sorted(cfs)],
            "grids": {name: grids[name].spec.to_dict() for name in sorted(grids)},
            "timeout_ticks": timeout_ticks,
        })

    @property
    def config(self) -> Configuration:
        return self.state.current_config

    @property
    def events(self) -> list[CoordEvent]:
        return self.state.events

    def group(self, parameter: str) -> list[str]:
        """CFs polled for ``parameter``: every registered CF that writes it."""
        return sorted(c for c, d in self.state.cfs.items() if parameter in d.params_written)

    def _log(self, kind: str, source: str, payload: Mapping[str, Any]) -> CoordEvent:
        event = CoordEvent(len(self.state.events), self.now, kind, source, dict(payload))
        self.state.events.append(event)
        return event

    def _error(self, source: str, text: str, request_id: str = "") -> list[Outbound]:
        self._log(PROTOCOL_ERROR, source, {"error": text, "request_id": request_id})
        logger.warning("protocol error from %s: %s", source, text)
        if source in self.state.cfs:
            return [(source, protocol_error(CONTROLLER, text, request_id))]
        return []

    def handle(self, msg: CoordMessage) -> list[Outbound]:
        """Dispatch any inbound message."""
        if msg.kind == RECALC_REQUEST:
            return self.handle_recalc_request(msg)
        if msg.kind == INFO_RESPONSE:
            return self.handle_info_response(msg)
        if msg.kind == ACK:
            if msg.sender in self.state.cfs:
                self._log(ACK, msg.sender, {"request_id": msg.request_id, "acked": msg.payload["acked"]})
            return []
        if msg.kind == CONFIG_UPDATE:
            return self._error(msg.sender, "only the controller may change control parameters", msg.request_id)
        if msg.kind == PROTOCOL_ERROR:
            self._log(WARNING, msg.sender, {"reported": msg.payload["error"], "request_id": msg.request_id})
            return []
        return self._error(msg.sender, f"controller does not accept {msg.kind}", msg.request_id or "")

    def handle_recalc_request(self, req: CoordMessage) -> list[Outbound]:
        cf_id = req.payload["cf_id"]
        parameter = req.payload["parameter"]
        if cf_id not in self.state.cfs or req.sender != cf_id:
            return self._error(req.sender, f"unknown or mismatched cf_id {cf_id!r}")
        if parameter not in self.state.grids:
            return self._error(cf_id, f"unknown parameter {parameter!r}")
        if parameter not in self.state.cfs[cf_id].params_written:
            return self._error(cf_id, f"{cf_id} does not write {parameter!r}")

        self._log(RECALC_REQUEST, cf_id, {"cf_id": cf_id, "parameter": parameter})
        if self.state.phase(parameter) != IDLE:
            queue = self.state.queues.setdefault(parameter, deque())
            if cf_id not in queue:
                queue.append(cf_id)
                self._log(QUEUED, CONTROLLER, {"cf_id": cf_id, "parameter": parameter})
            return []
        return self._open(parameter, cf_id)

    def _open(self, parameter: str, requester: str) -> list[Outbound]:
        self._request_counter += 1
        request_id = f"{parameter}-{self._request_counter}"
        group = self.group(parameter)
        self.state.transactions[parameter] = Transaction(parameter, request_id, requester, self.now, set(group))
        grid = self.state.grids[parameter].values
        out = []
        for cf in group:
            self._log(INFO_REQUEST, CONTROLLER, {
                "parameter": parameter, "request_id": request_id, "recipient": cf, "requester": requester,
            })
            out.append((cf, info_request(request_id, parameter, grid)))
        return out

    def _active(self, request_id: str) -> Optional[Transaction]:
        for txn in self.state.transactions.values():
            if txn.request_id == request_id:
                return txn
        return None

    def handle_info_response(self, resp: CoordMessage) -> list[Outbound]:
        txn = self._active(resp.request_id)
        if txn is None:
            self._log(WARNING, resp.sender, {"reason": "stale request_id", "request_id": resp.request_id})
            return []
        if resp.sender not in txn.pending:
            return self._error(resp.sender, f"{resp.sender} is not pending on {resp.request_id}", resp.request_id)
        try:
            range_ = OptimalConfigRange.from_dict(resp.payload["range"])
            table = UtilityTable.from_dict(resp.payload["utility_table"])
            self._check_payload(txn.parameter, range_, table)
        except ValidationError as exc:
            return self._error(resp.sender, f"invalid InfoResponse: {exc}", resp.request_id)

        self._log(INFO_RESPONSE, resp.sender, {
            "request_id": resp.request_id,
            "range": range_.to_dict(),
            "utility_table": table.to_dict(),
        })
        txn.pending.discard(resp.sender)
        txn.received[resp.sender] = (range_, table)
        if txn.pending:
            return []
        return self._apply(txn)

    def _check_payload(self, parameter, range_, table):
        grid = self.state.grids[parameter]
        if range_.parameter != parameter or table.parameter != parameter:
            raise ValidationError(f"payload is not about {parameter!r}")
        if len(table.grid) != len(grid.values) or any(
            abs(a - b) > 1e-9 for a, b in zip(table.grid, grid.values)
        ):
            raise ValidationError("utility table is not tabulated on the announced grid")

    def _apply(self, txn: Transaction) -> list[Outbound]:
        txn.phase = APPLYING
        grid = self.state.grids[txn.parameter]
        ranges = [txn.received[cf][0] for cf in sorted(txn.received)]
        tables = {cf: txn.received[cf][1] for cf in sorted(txn.received)}
        candidates = candidate_set(ranges, grid)
        result = optimize(tables, candidates)
        previous = self.state.current_config.entries.get(txn.parameter)
        self.state.current_config = self.state.current_config.with_value(txn.parameter, result.chosen_value)
        self.state.last_results[txn.parameter] = result
        self.state.last_tables[txn.parameter] = tables
        self._log(CONFIG_UPDATE, CONTROLLER, {
            "parameter": txn.parameter,
            "value": result.chosen_value,
            "previous": previous,
            "request_id": txn.request_id,
            "result": result.to_dict(),
        })
        update = config_update(txn.request_id, txn.parameter, result.chosen_value, result.welfare,
                               result.per_cf_utilities)
        out = [(cf, update) for cf in self.group(txn.parameter)]
        del self.state.transactions[txn.parameter]
        return out + self._redispatch(txn.parameter)

    def _redispatch(self, parameter: str) -> list[Outbound]:
        queue = self.state.queues.get(parameter)
        if not queue:
            return []
        requester = queue.popleft()
        return self._open(parameter, requester)

    def collect_timeout(self, parameter: str, reason: str = "timeout", redispatch: bool = True) -> list[Outbound]:
        """Abort the open transaction on ``parameter``; the configuration is left untouched."""
        txn = self.state.transactions.get(parameter)
        if txn is None or txn.phase != COLLECTING:
            return []
        del self.state.transactions[parameter]
        self._log(ABORT, CONTROLLER, {
            "parameter": parameter,
            "request_id": txn.request_id,
            "missing": sorted(txn.pending),
            "reason": reason,
        })
        logger.info("aborted %s (%s), missing %s", txn.request_id, reason, sorted(txn.pending))
        return self._redispatch(parameter) if redispatch else []

    def tick(self, now: int) -> list[Outbound]:
        """Advance the logical clock and abort transactions past their deadline."""
        if now < self.now:
            raise ValidationError("logical clock cannot go backwards")
        self.now = now
        out = []
        for parameter in sorted(self.state.transactions):
            txn = self.state.transactions[parameter]
            if now - txn.started > self.timeout_ticks:
                out += self.collect_timeout(parameter)
        return out

    def shutdown(self) -> None:
        for parameter in sorted(self.state.transactions):
            self.collect_timeout(parameter, reason="shutdown", redispatch=False)

    def last_result(self, parameter: str) -> Optional[WelfareResult]:
        return self.state.last_results.get(parameter)
