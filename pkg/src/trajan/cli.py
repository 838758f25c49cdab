"""Command-line interface.

Subcommands: ``generate`` (ensemble / bilayer), ``psa``, ``leaflet``,
``throughput``, ``worker``. Every analysis subcommand writes its outputs
plus a ``manifest.json`` (RunManifest) capturing the resolved
parameters, so deterministic runs can be reproduced bit-identically.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error,
3 resource (memory budget) error.

Option precedence, lowest to highest: built-in defaults, then the
``TRAJAN_WORKERS`` / ``TRAJAN_LISTEN`` environment variables, then a
``--config`` key=value file, then explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__, io as tio, leaflet as lf, psa as tpsa
from .engine import (
    BACKEND_IN_PROCESS,
    BACKEND_MULTI_PROCESS,
    KIND_NOOP,
    Engine,
    EngineConfig,
    TaskSpec,
    throughput_benchmark,
    worker_serve,
)
from .errors import ResourceError, TrajanError, UsageError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3

ENV_WORKERS = "TRAJAN_WORKERS"
ENV_LISTEN = "TRAJAN_LISTEN"


@dataclass
class RunManifest:
    """Everything needed to reproduce a run of a deterministic subcommand."""

    subcommand: str
    parameters: dict
    seed: int | None
    version: str = __version__
    started: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))

    def write(self, directory: Path) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _resolve(args, key: str, env_var: str | None, cast, default):
    """defaults < environment < config file < flags."""
    value = default
    if env_var and os.environ.get(env_var):
        value = cast(os.environ[env_var])
    if getattr(args, "_config_values", None) and key in args._config_values:
        value = cast(args._config_values[key])
    explicit = getattr(args, key, None)
    if explicit is not None:
        value = explicit
    return value


def _engine_config(args) -> EngineConfig:
    workers = _resolve(args, "workers", ENV_WORKERS, int, 1)
    listen = _resolve(args, "listen", ENV_LISTEN, str, None)
    backend = _resolve(args, "backend", None, str, BACKEND_IN_PROCESS)
    budget = _resolve(args, "memory_budget", None, int, 1 << 30)
    return EngineConfig(
        backend=backend, workers=workers, memory_budget=budget, listen=listen
    )


def _outdir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_records(engine_records, out: Path):
    tio.write_results_csv(engine_records, out / "records.csv")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_generate(args) -> int:
    out = _outdir(args)
    if args.kind == "ensemble":
        trajectories = tio.generate_ensemble(args.traj, args.frames, args.atoms, args.seed)
        for t in trajectories:
            tio.write_trjb(t, out / f"{t.id}.trjb")
        params = dict(
            kind="ensemble", traj=args.traj, frames=args.frames,
            atoms=args.atoms, seed=args.seed, output=str(out),
        )
        print(f"wrote {len(trajectories)} trajectories to {out}")
    else:
        spec = tio.BilayerSpec(
            atoms_per_leaflet=args.atoms,
            separation=args.separation,
            lattice_spacing=args.spacing,
            jitter=args.jitter,
            seed=args.seed,
        )
        system, truth = tio.generate_bilayer(spec, cutoff=args.cutoff)
        tio.write_system_trjb(system, out / "system.trjb")
        with open(out / "truth.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["atom_index", "component_id"])
            for i, c in enumerate(truth.assignment.tolist()):
                writer.writerow([i, c])
        params = dict(
            kind="bilayer", atoms=args.atoms, separation=args.separation,
            spacing=args.spacing, jitter=args.jitter, seed=args.seed,
            cutoff=args.cutoff, output=str(out),
        )
        print(f"wrote bilayer system ({system.n_atoms} atoms) and ground truth to {out}")
    RunManifest("generate", params, seed=args.seed).write(out)
    return EXIT_OK


def cmd_psa(args) -> int:
    out = _outdir(args)
    config = _engine_config(args)
    variant = args.variant.replace("_", "-")
    with Engine(config) as engine:
        matrix = tpsa.psa_matrix(
            args.inputs, args.block, engine, variant=variant, full_grid=args.full_grid
        )
        matrix.write_csv(out / "matrix.csv")
        _write_records(engine.records, out)
    params = dict(
        inputs=[str(p) for p in args.inputs], block=args.block,
        workers=config.workers, backend=config.backend, variant=variant,
        full_grid=args.full_grid, output=str(out),
    )
    RunManifest("psa", params, seed=None).write(out)
    print(f"wrote {matrix.n}x{matrix.n} distance matrix to {out / 'matrix.csv'}")
    return EXIT_OK


def cmd_leaflet(args) -> int:
    out = _outdir(args)
    config = _engine_config(args)
    system = tio.read_system_trjb(args.input)
    with Engine(config) as engine:
        components = lf.run_approach(
            args.approach, system, args.cutoff, args.block, engine
        )
        with open(out / "components.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["atom_index", "component_id"])
            for i, c in enumerate(components.assignment.tolist()):
                writer.writerow([i, c])
        _write_records(engine.records, out)
    sizes = components.sizes()
    print(f"n_components={components.n_components} sizes={sizes}")
    params = dict(
        input=str(args.input), cutoff=args.cutoff, approach=args.approach,
        block=args.block, workers=config.workers, backend=config.backend,
        output=str(out),
    )
    RunManifest("leaflet", params, seed=None).write(out)
    return EXIT_OK


def cmd_throughput(args) -> int:
    if args.tasks < 1:
        raise UsageError("--tasks must be >= 1")
    out = _outdir(args)
    config = _engine_config(args)
    cold = throughput_benchmark(args.tasks, config)
    with Engine(config) as engine:
        warmup = [TaskSpec(i, KIND_NOOP) for i in range(min(64, args.tasks))]
        engine.submit_map(warmup, op="warmup")
        warm = throughput_benchmark(args.tasks, engine=engine)
    tio.write_results_csv([cold, warm], out / "records.csv")
    print(
        f"cold: {args.tasks / cold.wall_seconds:.0f} tasks/s  "
        f"warm: {args.tasks / warm.wall_seconds:.0f} tasks/s "
        f"({config.workers} workers, {config.backend})"
    )
    params = dict(
        tasks=args.tasks, workers=config.workers, backend=config.backend,
        output=str(out),
    )
    RunManifest("throughput", params, seed=None).write(out)
    return EXIT_OK


def cmd_worker(args) -> int:
    listen = _resolve(args, "connect", ENV_LISTEN, str, None)
    if not listen:
        raise UsageError("worker: --connect HOST:PORT (or TRAJAN_LISTEN) is required")
    budget = args.memory_budget if args.memory_budget is not None else 1 << 30
    return worker_serve(listen, budget)


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajan",
        description="Task-parallel MD trajectory analysis toolkit",
    )
    parser.add_argument("--version", action="version", version=f"trajan {__version__}")
    parser.add_argument("--config", help="key=value config file (flags override it)")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    gen = sub.add_parser("generate", help="synthetic datasets with known properties")
    gen_sub = gen.add_subparsers(dest="kind", required=True)
    ens = gen_sub.add_parser("ensemble", help="random-walk trajectory ensemble")
    ens.add_argument("--traj", type=int, required=True, help="number of trajectories")
    ens.add_argument("--frames", type=int, required=True)
    ens.add_argument("--atoms", type=int, required=True)
    ens.add_argument("--seed", type=int, required=True)
    ens.add_argument("-o", "--output", required=True)
    ens.set_defaults(func=cmd_generate)
    bil = gen_sub.add_parser("bilayer", help="flat two-sheet system with ground truth")
    bil.add_argument("--atoms", type=int, required=True, help="atoms per leaflet")
    bil.add_argument("--separation", type=float, required=True)
    bil.add_argument("--spacing", type=float, required=True)
    bil.add_argument("--jitter", type=float, required=True)
    bil.add_argument("--seed", type=int, required=True)
    bil.add_argument("--cutoff", type=float, default=None,
                     help="validate the spec against this intended cutoff")
    bil.add_argument("-o", "--output", required=True)
    bil.set_defaults(func=cmd_generate)

    psa_p = sub.add_parser("psa", help="all-pairs Hausdorff distance matrix")
    psa_p.add_argument("inputs", nargs="+", help="TRJB trajectory files")
    psa_p.add_argument("--block", type=int, required=True)
    psa_p.add_argument("--workers", type=int, default=None)
    psa_p.add_argument("--backend", choices=[BACKEND_IN_PROCESS, BACKEND_MULTI_PROCESS],
                       default=None)
    psa_p.add_argument("--listen", default=None, help="bind address (multi-process)")
    psa_p.add_argument("--memory-budget", dest="memory_budget", type=int, default=None)
    psa_p.add_argument("--variant", choices=["naive", "early-break"], default="early-break")
    psa_p.add_argument("--full-grid", action="store_true",
                       help="compute all k^2 blocks instead of mirroring i<=j")
    psa_p.add_argument("-o", "--output", required=True)
    psa_p.set_defaults(func=cmd_psa)

    lf_p = sub.add_parser("leaflet", help="leaflet assignment via connected components")
    lf_p.add_argument("input", help="TRJB system file (single frame)")
    lf_p.add_argument("--cutoff", type=float, required=True)
    lf_p.add_argument("--approach", type=int, choices=[1, 2, 3, 4], required=True)
    lf_p.add_argument("--block", type=int, required=True)
    lf_p.add_argument("--workers", type=int, default=None)
    lf_p.add_argument("--backend", choices=[BACKEND_IN_PROCESS, BACKEND_MULTI_PROCESS],
                      default=None)
    lf_p.add_argument("--listen", default=None)
    lf_p.add_argument("--memory-budget", dest="memory_budget", type=int, default=None)
    lf_p.add_argument("-o", "--output", required=True)
    lf_p.set_defaults(func=cmd_leaflet)

    thr = sub.add_parser("throughput", help="zero-workload dispatch benchmark")
    thr.add_argument("--tasks", type=int, required=True)
    thr.add_argument("--workers", type=int, default=None)
    thr.add_argument("--backend", choices=[BACKEND_IN_PROCESS, BACKEND_MULTI_PROCESS],
                     default=None)
    thr.add_argument("--listen", default=None)
    thr.add_argument("--memory-budget", dest="memory_budget", type=int, default=None)
    thr.add_argument("-o", "--output", required=True)
    thr.set_defaults(func=cmd_throughput)

    wrk = sub.add_parser("worker", help="serve tasks for a multi-process scheduler")
    wrk.add_argument("--connect", default=None, help="scheduler HOST:PORT")
    wrk.add_argument("--memory-budget", dest="memory_budget", type=int, default=None)
    wrk.set_defaults(func=cmd_worker)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            args._config_values = _read_config_file(args.config)
        except OSError as exc:
            print(f"trajan: cannot read config: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        except UsageError as exc:
            print(f"trajan: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        args._config_values = {}
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"trajan: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceError as exc:
        print(f"trajan: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (TrajanError, OSError) as exc:
        print(f"trajan: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
