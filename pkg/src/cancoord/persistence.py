"""Run artifacts: JSON-lines event logs, result files, and replay."""
from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .controller import (
    ABORT,
    QUEUED,
    REGISTERED,
    ControllerState,
    CoordEvent,
    Transaction,
)
from .domain import CfDescriptor, Configuration, ParameterSpec, build_grid
from .errors import ReplayError, ValidationError
from .nswf import WelfareResult
from .transport import CONFIG_UPDATE, INFO_REQUEST, INFO_RESPONSE, canonical_json
from .utility import OptimalConfigRange, UtilityTable


@dataclass(frozen=True)
class RunArtifact:
    scenario_hash: str
    seed: int
    events_path: str
    result_path: str
    created_at: int

    def to_dict(self) -> dict:
        return {
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "events_path": self.events_path,
            "result_path": self.result_path,
            "created_at": self.created_at,
        }


def scenario_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def event_line(event: CoordEvent) -> str:
    return canonical_json(event.to_dict()) + "\n"


def write_events(path: str | Path, events: Iterable[CoordEvent]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in events:
            fh.write(event_line(e))


class EventAppender:
    """Single-writer append handle used by the long-running service."""

    def __init__(self, path: str | Path):
        self._fh = open(path, "a", encoding="utf-8", newline="\n")
        self.written = 0

    def extend(self, events: Sequence[CoordEvent]) -> None:
        for e in events[self.written:]:
            self._fh.write(event_line(e))
        self.written = max(self.written, len(events))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_events(path: str | Path) -> list[CoordEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                events.append(CoordEvent.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ReplayError(f"malformed event: {exc}", lineno) from None
    return events


def replay(source: str | Path | Sequence[CoordEvent]) -> ControllerState:
    """Fold an event log back into the controller state it describes."""
    events = read_events(source) if isinstance(source, (str, Path)) else list(source)
    state = ControllerState(Configuration(), {}, {})
    last_seq = -1
    for lineno, event in enumerate(events, start=1):
        if event.seq <= last_seq:
            raise ReplayError(f"sequence number {event.seq} does not increase", lineno)
        last_seq = event.seq
        try:
            _apply(state, event)
        except (KeyError, TypeError, ValidationError) as exc:
            raise ReplayError(f"cannot apply {event.kind} event: {exc}", lineno) from None
        state.events.append(event)
    return state


def _apply(state: ControllerState, event: CoordEvent) -> None:
    p = event.payload
    if event.kind == REGISTERED:
        state.grids = {name: build_grid(ParameterSpec.from_dict(spec)) for name, spec in p["grids"].items()}
        state.cfs = {d["cf_id"]: CfDescriptor.from_dict(d) for d in p["cfs"]}
        state.current_config = Configuration(p["configuration"]).validate(state.grids)
    elif event.kind == QUEUED:
        state.queues.setdefault(p["parameter"], deque()).append(p["cf_id"])
    elif event.kind == INFO_REQUEST:
        parameter = p["parameter"]
        txn = state.transactions.get(parameter)
        if txn is None or txn.request_id != p["request_id"]:
            queue = state.queues.get(parameter)
            requester = p.get("requester")
            if queue and queue[0] == requester:
                queue.popleft()
            txn = Transaction(parameter, p["request_id"], requester, event.ts, set())
            state.transactions[parameter] = txn
        txn.pending.add(p["recipient"])
    elif event.kind == INFO_RESPONSE:
        for txn in state.transactions.values():
            if txn.request_id == p["request_id"]:
                txn.pending.discard(event.source)
                txn.received[event.source] = (
                    OptimalConfigRange.from_dict(p["range"]),
                    UtilityTable.from_dict(p["utility_table"]),
                )
    elif event.kind == CONFIG_UPDATE:
        parameter = p["parameter"]
        state.current_config = state.current_config.with_value(parameter, p["value"])
        state.last_results[parameter] = WelfareResult.from_dict(p["result"])
        txn = state.transactions.pop(parameter, None)
        if txn is not None:
            state.last_tables[parameter] = {cf: t for cf, (_, t) in sorted(txn.received.items())}
    elif event.kind == ABORT:
        state.transactions.pop(p["parameter"], None)


def write_json(path: str | Path, obj) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
