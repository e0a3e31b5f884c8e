"""Deterministic tick-loop harness wiring CFs, the carrier and the controller together."""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Optional

from .agent import CfState, handle_message, learning_cycle, new_cf
from .conflict import classify_conflicts, conflict_groups
from .controller import Controller
from .envsim import EnvConfig, generate_dataset
from .errors import CoordinationError
from .nswf import nswf_value
from .persistence import RunArtifact, scenario_hash, write_events, write_json
from .scenario import Scenario, load_scenario
from .transport import CONTROLLER, CoordMessage, InProcessCarrier

logger = logging.getLogger(__name__)

MAX_DRAIN_TICKS = 10_000


class Simulation:
    """Training, learning cycles and message delivery for one scenario.

    CFs are trained on the environment as configured at cycle 0 and record
    their baseline range. Each later cycle every CF observes the full grid
    again on the same static user placements (under any environment shift
    active for that cycle), runs its learning cycle, and any recalculation
    requests are delivered until the system is quiescent.
    """

    def __init__(self, scenario: Scenario, carrier: Optional[InProcessCarrier] = None):
        self.scenario = scenario
        self.grids = scenario.grids
        self.carrier = carrier or InProcessCarrier(scenario.seed)
        self.controller = Controller(self.grids, scenario.descriptors, scenario.preloaded, scenario.timeout_ticks)
        self.controller.tick(self.carrier.now)
        self.cycle = 0
        self.env = scenario.env_at(0)
        self.requests: list[tuple[int, CoordMessage]] = []
        self.states: dict[str, CfState] = {}
        data = self._observe(self.env)
        for block in sorted(scenario.cfs, key=lambda b: b.descriptor.cf_id):
            cf = block.descriptor.cf_id
            state = new_cf(block.descriptor, self.grids[block.parameter], data[cf], scale=block.scale,
                           threshold_pct=block.threshold_pct, minimizing=block.minimizing)
            self.states[cf], _ = learning_cycle(state, [])

    def _observe(self, env: EnvConfig) -> dict:
        data = {}
        for block in self.scenario.cfs:
            cf = block.descriptor.cf_id
            grid = self.grids[block.parameter]
            data.update(generate_dataset(env, grid, {cf: block.descriptor.objective_kpi}))
        return data

    def run_cycle(self, env: Optional[EnvConfig] = None) -> list[CoordMessage]:
        """One learning cycle for every CF followed by message delivery; returns the requests sent."""
        self.cycle += 1
        self.env = env if env is not None else self.scenario.env_at(self.cycle)
        data = self._observe(self.env)
        sent = []
        for cf in sorted(self.states):
            self.states[cf], request = learning_cycle(self.states[cf], data[cf])
            if request is not None:
                self.carrier.send(CONTROLLER, request)
                sent.append(request)
                self.requests.append((self.cycle, request))
        self.drain()
        return sent

    def run(self) -> None:
        while self.cycle < self.scenario.cycles:
            self.run_cycle()

    def drain(self) -> None:
        """Deliver messages tick by tick until nothing is in flight."""
        for _ in range(MAX_DRAIN_TICKS):
            if not self.carrier.pending() and not self.controller.state.transactions:
                return
            due = self.carrier.advance()
            for recipient, msg in self.controller.tick(self.carrier.now):
                self.carrier.send(recipient, msg)
            for recipient, msg in due:
                self.deliver(recipient, msg)
        raise CoordinationError(f"system not quiescent after {MAX_DRAIN_TICKS} ticks")

    def deliver(self, recipient: str, msg: CoordMessage) -> None:
        if recipient == CONTROLLER:
            for target, out in self.controller.handle(msg):
                self.carrier.send(target, out)
            return
        state = self.states.get(recipient)
        if state is None:
            logger.warning("dropping %s for unknown recipient %s", msg.kind, recipient)
            return
        reply = handle_message(state, msg)
        if reply is not None:
            self.carrier.send(CONTROLLER, reply)

    def utility_rows(self, parameter: str) -> tuple[list[str], list[list[float]]]:
        """Per-grid-point utilities per CF plus their product.

        Uses the tables of the last applied transaction for ``parameter``,
        or the CFs' current tables if none has completed.
        """
        tables = self.controller.state.last_tables.get(parameter)
        if tables is None:
            tables = {cf: s.utility_table() for cf, s in self.states.items() if s.parameter == parameter}
        cfs = sorted(tables)
        grid = self.grids[parameter].values
        rows = []
        for i, x in enumerate(grid):
            utilities = [tables[cf].utilities[i] for cf in cfs]
            rows.append([x, *utilities, nswf_value(utilities)])
        return cfs, rows

    def result(self) -> dict:
        edges = classify_conflicts(self.scenario.descriptors)
        groups = conflict_groups(edges, self.scenario.descriptors)
        welfare = {}
        for name in sorted(self.grids):
            r = self.controller.last_result(name)
            welfare[name] = None if r is None else r.to_dict()
        return {
            "configuration": dict(self.controller.config.entries),
            "welfare": welfare,
            "conflicts": {"edges": [e.to_dict() for e in edges], "groups": groups},
            "cycles": self.cycle,
            "requests": [{"cycle": c, "cf_id": m.sender, "parameter": m.payload["parameter"]} for c, m in self.requests],
            "seed": self.scenario.seed,
        }


def write_utilities_csv(path: Path, cfs: list[str], rows: list[list[float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["parameter_value", *cfs, "nswf_product"])
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def run_scenario(path: str | Path, out_dir: str | Path | None = None, seed: int | None = None) -> RunArtifact:
    """Run a scenario file end to end and write events.jsonl, utilities.csv and result.json."""
    path = Path(path)
    scenario = load_scenario(path)
    if seed is not None:
        scenario = scenario.with_seed(seed)
    out = Path(out_dir) if out_dir is not None else path.parent / scenario.output_dir
    out.mkdir(parents=True, exist_ok=True)

    sim = Simulation(scenario)
    try:
        sim.run()
    finally:
        # partial logs are kept even when the run fails
        write_events(out / "events.jsonl", sim.controller.events)

    first = scenario.parameters[0].name
    for p in scenario.parameters:
        name = "utilities.csv" if p.name == first else f"utilities_{p.name}.csv"
        write_utilities_csv(out / name, *sim.utility_rows(p.name))

    artifact = RunArtifact(scenario_hash(path), scenario.seed, "events.jsonl", "result.json",
                           len(sim.controller.events))
    result = sim.result()
    result["artifact"] = artifact.to_dict()
    write_json(out / "result.json", result)
    return artifact
