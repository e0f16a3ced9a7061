"""Command-line front end.

Each subcommand runs one job and emits CSV, either to stdout or as fixed
file names inside ``--output DIR``.  The job functions are plain callables
returning (header, rows) pairs so they can also be driven from Python.

Exit codes: 0 success, 2 bad command line, 3 invalid scenario or
configuration, 4 simulation or protocol failure, 5 output I/O failure.
Failures print a single JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import topology as topo_mod
from .collectives import ScheduleKind, build_alltoall, uniform_sizes
from .energy import energy_vs_time_series
from .errors import (
    ConfigurationError,
    HaloflowError,
    ProtocolError,
    ScenarioError,
    SimulationError,
    TopologyError,
)
from .halo import (
    OverlapMode,
    Router,
    build_plan,
    partition_block,
    run_stencil,
    staged_vs_direct_cost,
)
from .netsim import SimConfig, TimestepScenario, simulate, simulate_timestep
from .perfmodel import roofline_report
from .reporting import render_csv, roofline_svg, write_json
from .scenario import (
    AlltoallJob,
    EnergySpec,
    HaloJob,
    RooflineSpec,
    Scenario,
    SweepSpec,
    TimestepJob,
    load_scenario,
    parse_grid,
)
from .topology import RankMap, Topology

__all__ = [
    "main",
    "resolve_seed",
    "parse_topology_arg",
    "alltoall_table",
    "halo_tables",
    "timestep_table",
    "sweep_table",
    "roofline_table",
    "energy_table",
]

SEED_ENV = "HALOFLOW_SEED"

EXIT_USAGE = 2
EXIT_SCENARIO = 3
EXIT_SIMULATION = 4
EXIT_IO = 5


def resolve_seed(flag_value: int | None, scenario_value: int = 0) -> int:
    """Seed precedence: environment, then --seed, then the scenario."""
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if flag_value is not None:
        return flag_value
    return scenario_value


def parse_topology_arg(spec: str) -> Topology:
    """Build a preset topology from ``name`` or ``name:key=value,...``."""
    name, _, params = spec.partition(":")
    doc: dict = {"preset": name}
    if params:
        for item in params.split(","):
            key, sep, value = item.partition("=")
            if not sep or not key or not value:
                raise ConfigurationError(f"bad topology parameter {item!r} in {spec!r}")
            try:
                doc[key] = json.loads(value)
            except json.JSONDecodeError:
                raise ConfigurationError(
                    f"bad topology parameter value {value!r} in {spec!r}"
                ) from None
    return topo_mod.from_spec(doc)


# --- job tables -------------------------------------------------------------

def alltoall_table(
    topo: Topology, job: AlltoallJob, cfg: SimConfig | None = None
) -> tuple[list[str], list[list[object]]]:
    """Makespan of one uniform all-to-all under each requested schedule."""
    cfg = cfg or SimConfig()
    rank_map = RankMap.identity(job.ranks)
    sizes = uniform_sizes(job.ranks, job.msg_bytes)
    rows: list[list[object]] = []
    for kind in job.schedules:
        flows = build_alltoall(kind, sizes)
        phases = 1 + max((f.phase for f in flows), default=0)
        res = simulate(topo, rank_map, flows, cfg)
        rows.append([kind.value, job.ranks, job.msg_bytes, phases, res.makespan])
    return ["schedule", "ranks", "msg_bytes", "phases", "makespan_seconds"], rows


def halo_tables(
    topo: Topology, job: HaloJob, seed: int, cfg: SimConfig | None = None
) -> tuple[tuple[list[str], list[list[object]]], tuple[list[str], list[list[object]]]]:
    """Run a halo stencil job; returns (checksum table, timing table)."""
    cfg = cfg or SimConfig()
    grid = parse_grid(job.grid)
    rng = np.random.default_rng(seed)
    init = rng.standard_normal(grid.n)
    fields, part, plan, checksums = run_stencil(
        grid, job.ranks, job.steps, init, mode=job.mode, schedule=job.schedule
    )
    check_rows: list[list[object]] = [[s + 1, c] for s, c in enumerate(checksums)]
    rank_map = RankMap.identity(job.ranks)
    staged, direct = staged_vs_direct_cost(
        part, plan, job.bytes_per_element, topo, rank_map, cfg
    )
    comp = job.compute_seconds
    timing_rows: list[list[object]] = [[
        job.grid,
        job.ranks,
        plan.total_sent(),
        comp,
        direct,
        staged,
        comp + direct,
        comp + staged,
        (comp + staged) / (comp + direct) if comp + direct > 0 else float("inf"),
    ]]
    return (
        (["step", "checksum"], check_rows),
        (
            ["grid", "ranks", "halo_elements", "compute_seconds",
             "direct_comm_seconds", "staged_comm_seconds",
             "direct_step_seconds", "staged_step_seconds", "staged_over_direct"],
            timing_rows,
        ),
    )


def timestep_table(
    topo: Topology, job: TimestepJob, cfg: SimConfig | None = None
) -> tuple[list[str], list[list[object]], float]:
    """Per-rank busy time for one compute+exchange timestep; returns makespan too."""
    cfg = cfg or SimConfig()
    nranks = len(job.compute_seconds)
    rank_map = RankMap.identity(nranks)
    scen = TimestepScenario(
        compute_seconds=tuple(job.compute_seconds),
        flows=job.flows,
        barrier_at_end=job.barrier,
    )
    res = simulate_timestep(topo, rank_map, scen, cfg)
    rows: list[list[object]] = [
        [r, job.compute_seconds[r], res.busy_seconds[r], res.busy_fraction[r]]
        for r in range(nranks)
    ]
    return (
        ["rank", "compute_seconds", "busy_seconds", "busy_fraction"],
        rows,
        res.makespan,
    )


def sweep_table(
    sweep: SweepSpec, cfg: SimConfig | None = None
) -> tuple[list[str], list[list[object]]]:
    """Evaluate one strong-scaling sweep.

    Each point exchanges ``total_bytes`` of uniform all-to-all traffic
    (``total_bytes / ranks**2`` per ordered pair) after an imbalanced
    compute phase of ``imbalance * compute_seconds_total / ranks``.
    """
    cfg = cfg or SimConfig()
    rows: list[list[object]] = []
    for pt in sweep.points:
        topo = topo_mod.from_spec(pt.topology)
        rank_map = RankMap.identity(pt.ranks)
        pair_bytes = int(round(sweep.total_bytes / (pt.ranks * pt.ranks)))
        flows = build_alltoall(sweep.schedule, uniform_sizes(pt.ranks, pair_bytes))
        comm = simulate(topo, rank_map, flows, cfg).makespan
        compute = pt.imbalance * sweep.compute_seconds_total / pt.ranks
        rows.append([pt.name, pt.ranks, pair_bytes, compute, comm, compute + comm])
    return (
        ["name", "ranks", "pair_bytes", "compute_seconds", "comm_seconds", "step_seconds"],
        rows,
    )


def roofline_table(spec: RooflineSpec) -> tuple[list[str], list[list[object]]]:
    points = roofline_report(spec.machine, spec.kernels)
    rows: list[list[object]] = [
        [p.name, p.intensity, p.achieved_flops, p.attainable, p.percent, p.seconds, p.time_share]
        for p in points
    ]
    return (
        ["kernel", "intensity", "achieved_flops", "attainable_flops",
         "percent_of_roofline", "seconds", "time_share"],
        rows,
    )


def energy_table(spec: EnergySpec) -> tuple[list[str], list[list[object]]]:
    points = energy_vs_time_series(spec.model, spec.configurations)
    rows: list[list[object]] = [
        [p.name, p.step_seconds, p.busy_fraction, p.devices, p.watts, p.joules]
        for p in points
    ]
    return (
        ["name", "step_seconds", "busy_fraction", "devices", "watts", "joules"],
        rows,
    )


# --- output plumbing --------------------------------------------------------

def _emit(
    table: tuple[Sequence[str], Sequence[Sequence[object]]],
    fmt: str,
    output: Path | None,
    filename: str,
) -> None:
    header, rows = table
    if output is None:
        if fmt == "json":
            doc = {"header": list(header), "rows": [list(r) for r in rows]}
            sys.stdout.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
        else:
            sys.stdout.write(render_csv(header, rows))
        return
    output.mkdir(parents=True, exist_ok=True)
    (output / filename).write_bytes(render_csv(header, rows).encode("utf-8"))


def _scenario_topology(scn: Scenario) -> Topology:
    return topo_mod.from_spec(scn.topology)


# --- subcommand handlers ----------------------------------------------------

def _cmd_alltoall(args: argparse.Namespace) -> None:
    if args.scenario:
        scn = load_scenario(args.scenario)
        if not isinstance(scn.workload, AlltoallJob):
            raise ScenarioError("scenario workload is not an all-to-all job", "workload.kind")
        job = scn.workload
        topo = _scenario_topology(scn)
    else:
        if args.ranks is None or args.msg_bytes is None:
            raise ConfigurationError("need --ranks and --msg-bytes (or --scenario)")
        schedules = tuple(ScheduleKind) if args.schedule == "all" else (ScheduleKind(args.schedule),)
        job = AlltoallJob(args.ranks, args.msg_bytes, schedules)
        topo = parse_topology_arg(args.topology)
    _emit(alltoall_table(topo, job), args.format, args.output, "alltoall.csv")


def _cmd_halo(args: argparse.Namespace) -> None:
    if args.scenario:
        scn = load_scenario(args.scenario)
        if not isinstance(scn.workload, HaloJob):
            raise ScenarioError("scenario workload is not a halo job", "workload.kind")
        job = scn.workload
        topo = _scenario_topology(scn)
        seed = resolve_seed(args.seed, scn.seed)
    else:
        if args.ranks is None:
            raise ConfigurationError("need --ranks (or --scenario)")
        job = HaloJob(
            grid=args.grid,
            ranks=args.ranks,
            steps=args.steps,
            mode=OverlapMode(args.mode),
            schedule=ScheduleKind(args.schedule if args.schedule != "all" else "rotated_concurrent"),
            bytes_per_element=args.bytes_per_element,
            compute_seconds=args.compute_seconds,
        )
        topo = parse_topology_arg(args.topology)
        seed = resolve_seed(args.seed)
    checksums, timing = halo_tables(topo, job, seed)
    _emit(checksums, args.format, args.output, "halo_checksums.csv")
    _emit(timing, args.format, args.output, "halo_timing.csv")


def _cmd_sweep(args: argparse.Namespace) -> None:
    scn = load_scenario(args.scenario)
    if scn.sweep is None:
        raise ScenarioError("scenario has no sweep section", "sweep")
    _emit(sweep_table(scn.sweep), args.format, args.output, "sweep.csv")


def _cmd_roofline(args: argparse.Namespace) -> None:
    scn = load_scenario(args.scenario)
    if scn.roofline is None:
        raise ScenarioError("scenario has no roofline section", "roofline")
    _emit(roofline_table(scn.roofline), args.format, args.output, "roofline.csv")
    if args.svg:
        if args.output is None:
            raise ConfigurationError("--svg needs --output DIR")
        points = roofline_report(scn.roofline.machine, scn.roofline.kernels)
        (args.output / "roofline.svg").write_bytes(
            roofline_svg(scn.roofline.machine, points).encode("utf-8")
        )


def _cmd_energy(args: argparse.Namespace) -> None:
    scn = load_scenario(args.scenario)
    if scn.energy is None:
        raise ScenarioError("scenario has no energy section", "energy")
    _emit(energy_table(scn.energy), args.format, args.output, "energy.csv")


def _cmd_report(args: argparse.Namespace) -> None:
    """Run every section of a scenario into one output directory."""
    scn = load_scenario(args.scenario)
    seed = resolve_seed(args.seed, scn.seed)
    out: Path = args.output
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, dict] = {}

    topo = _scenario_topology(scn)
    if isinstance(scn.workload, AlltoallJob):
        header, rows = alltoall_table(topo, scn.workload)
        _emit((header, rows), "csv", out, "alltoall.csv")
        artifacts["alltoall.csv"] = {
            "makespans": {str(r[0]): r[4] for r in rows},
        }
    elif isinstance(scn.workload, HaloJob):
        checksums, timing = halo_tables(topo, scn.workload, seed)
        _emit(checksums, "csv", out, "halo_checksums.csv")
        _emit(timing, "csv", out, "halo_timing.csv")
        artifacts["halo_checksums.csv"] = {"steps": len(checksums[1])}
        artifacts["halo_timing.csv"] = {"staged_over_direct": timing[1][0][-1]}
    else:
        header, rows, makespan = timestep_table(topo, scn.workload)
        _emit((header, rows), "csv", out, "timestep.csv")
        artifacts["timestep.csv"] = {"makespan_seconds": makespan}

    if scn.sweep is not None:
        header, rows = sweep_table(scn.sweep)
        _emit((header, rows), "csv", out, "sweep.csv")
        artifacts["sweep.csv"] = {
            "step_seconds": {str(r[0]): r[5] for r in rows},
        }
    if scn.roofline is not None:
        _emit(roofline_table(scn.roofline), "csv", out, "roofline.csv")
        points = roofline_report(scn.roofline.machine, scn.roofline.kernels)
        (out / "roofline.svg").write_bytes(
            roofline_svg(scn.roofline.machine, points).encode("utf-8")
        )
        artifacts["roofline.csv"] = {"kernels": len(points)}
        artifacts["roofline.svg"] = {"kernels": len(points)}
    if scn.energy is not None:
        header, rows = energy_table(scn.energy)
        _emit((header, rows), "csv", out, "energy.csv")
        artifacts["energy.csv"] = {"joules": {str(r[0]): r[5] for r in rows}}

    write_json(out / "summary.json", {
        "scenario": scn.name,
        "seed": seed,
        "artifacts": artifacts,
    })


# --- parser -----------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, scenario_required: bool) -> None:
    p.add_argument("--scenario", type=Path, required=scenario_required,
                   default=None, help="scenario JSON file")
    p.add_argument("--output", type=Path, default=None,
                   help="directory for result files (default: CSV on stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="stdout format when --output is not given")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="haloflow",
        description="Flow-level interconnect simulation and halo-exchange experiments.",
        epilog=(
            "exit codes: 0 success, 2 bad command line, 3 invalid scenario or "
            "configuration, 4 simulation or protocol failure, 5 output I/O failure. "
            f"The {SEED_ENV} environment variable overrides --seed and scenario seeds."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("alltoall", help="time one all-to-all under each schedule")
    _add_common(p, scenario_required=False)
    p.add_argument("--topology", default="dgx1v", help="preset name[:key=value,...]")
    p.add_argument("--ranks", type=int, default=None)
    p.add_argument("--msg-bytes", type=int, default=None, help="payload per ordered pair")
    p.add_argument("--schedule", default="all",
                   choices=("all",) + tuple(k.value for k in ScheduleKind))
    p.set_defaults(handler=_cmd_alltoall)

    p = sub.add_parser("halo", help="run a halo-exchange stencil and cost its transfers")
    _add_common(p, scenario_required=False)
    p.add_argument("--topology", default="dgx1v", help="preset name[:key=value,...]")
    p.add_argument("--grid", default="quad160x160",
                   help="ring<N>, quad<NX>x<NY> or random<N>d<D>s<S>")
    p.add_argument("--ranks", type=int, default=None)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--mode", default="none", choices=tuple(m.value for m in OverlapMode))
    p.add_argument("--schedule", default="rotated_concurrent",
                   choices=tuple(k.value for k in ScheduleKind))
    p.add_argument("--bytes-per-element", type=float, default=8.0)
    p.add_argument("--compute-seconds", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=_cmd_halo)

    p = sub.add_parser("sweep", help="evaluate the scenario's strong-scaling sweep")
    _add_common(p, scenario_required=True)
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("roofline", help="place the scenario's kernels on the roofline")
    _add_common(p, scenario_required=True)
    p.add_argument("--svg", action="store_true", help="also write roofline.svg")
    p.set_defaults(handler=_cmd_roofline)

    p = sub.add_parser("energy", help="energy bill for the scenario's configurations")
    _add_common(p, scenario_required=True)
    p.set_defaults(handler=_cmd_energy)

    p = sub.add_parser("report", help="run every scenario section into --output")
    _add_common(p, scenario_required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=_cmd_report)

    return parser


def _fail(code: int, exc: Exception) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc)}
    path = getattr(exc, "path", "")
    if path:
        doc["path"] = path
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.output is not None and not isinstance(args.output, Path):
        args.output = Path(args.output)
    try:
        args.handler(args)
    except ScenarioError as exc:
        return _fail(EXIT_SCENARIO, exc)
    except (ConfigurationError, TopologyError) as exc:
        return _fail(EXIT_SCENARIO, exc)
    except (SimulationError, ProtocolError) as exc:
        return _fail(EXIT_SIMULATION, exc)
    except HaloflowError as exc:
        return _fail(EXIT_SCENARIO, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
