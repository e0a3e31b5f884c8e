"""Command-line entry point: ``cancoord run|serve|classify|dataset``."""
from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import signal
import sys
from pathlib import Path

from .conflict import classify_conflicts, conflict_groups, format_table
from .controller import Controller
from .envsim import export_csv
from .errors import CoordinationError, ScenarioError
from .persistence import read_json
from .scenario import load_scenario
from .service import ControllerServer, parse_bind
from .simulation import run_scenario

logger = logging.getLogger("cancoord")

BIND_ENV = "CANCOORD_BIND"
DEFAULT_BIND = "127.0.0.1:7878"


def _out_dir(args, path: Path, scenario) -> Path:
    return Path(args.out) if args.out else path.parent / scenario.output_dir


def cmd_run(args) -> int:
    artifact = run_scenario(args.file, args.out, args.seed)
    out = Path(args.out) if args.out else Path(args.file).parent / load_scenario(args.file).output_dir
    result = read_json(out / artifact.result_path)
    print(json.dumps({"configuration": result["configuration"], "welfare": result["welfare"],
                      "out": str(out)}, sort_keys=True))
    return 0


def cmd_classify(args) -> int:
    scenario = load_scenario(args.file)
    descriptors = scenario.descriptors
    edges = classify_conflicts(descriptors)
    groups = conflict_groups(edges, descriptors)
    print(json.dumps({"edges": [e.to_dict() for e in edges], "groups": groups}, sort_keys=True, indent=2))
    print()
    print(format_table(edges, groups))
    return 0


def cmd_dataset(args) -> int:
    path = Path(args.file)
    scenario = load_scenario(path)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    out = _out_dir(args, path, scenario)
    grids = scenario.grids
    written = []
    for block in scenario.cfs:
        cf = block.descriptor.cf_id
        written += export_csv(scenario.env, grids[block.parameter], out, {cf: block.descriptor.objective_kpi})
    for p in sorted(written):
        print(p)
    return 0


async def _serve(scenario, host, port, events_path, tick_seconds) -> None:
    controller = Controller(scenario.grids, scenario.descriptors, scenario.preloaded, scenario.timeout_ticks)
    server = ControllerServer(controller, host, port, tick_seconds=tick_seconds, events_path=events_path)
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, lambda: asyncio.ensure_future(server.stop()))
        except NotImplementedError:  # pragma: no cover - non-POSIX loops
            pass
    await server.start()
    print(f"listening on {server.host}:{server.port}", flush=True)
    await server.wait_stopped()


def cmd_serve(args) -> int:
    path = Path(args.file)
    scenario = load_scenario(path)
    host, port = parse_bind(args.bind or os.environ.get(BIND_ENV, DEFAULT_BIND))
    out = _out_dir(args, path, scenario)
    out.mkdir(parents=True, exist_ok=True)
    try:
        asyncio.run(_serve(scenario, host, port, out / "events.jsonl", args.tick))
    except OSError as exc:
        print(f"error: cannot bind {host}:{port}: {exc.strerror or exc}", file=sys.stderr)
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cancoord", description="Controller-based CF coordination via NSWF.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("file", help="scenario JSON file")
        p.add_argument("--out", help="output directory (default: scenario output_dir)")
        if seed:
            p.add_argument("--seed", type=int, help="override the scenario seed")

    p = sub.add_parser("run", help="train CFs and run coordination cycles in-process")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="serve the controller over TCP (JSON lines)")
    common(p, seed=False)
    p.add_argument("--bind", help=f"host:port to listen on (default ${BIND_ENV} or {DEFAULT_BIND})")
    p.add_argument("--tick", type=float, default=0.1, help="seconds per logical clock tick")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("classify", help="print the conflict graph")
    p.add_argument("file", help="scenario JSON file")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("dataset", help="export the synthetic KPI dataset as CSV")
    common(p)
    p.set_defaults(func=cmd_dataset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CoordinationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
