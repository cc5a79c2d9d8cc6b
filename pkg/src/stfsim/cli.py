"""Command line entry point: ``stfsim run|probe|bench|validate``."""
import argparse
import dataclasses
import sys

from . import _backend
from .scenario_io import (
    PRESETS, ScenarioError, bench, bench_table, load_scenario, parse_program, probe, probe_csv, run,
)
from .world import NumericalAbort

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_IO = 0, 1, 2, 3


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser():
    ap = argparse.ArgumentParser(prog="stfsim", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="numba worker threads")
    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--config", required=True,
                      help=f"scenario file, or a preset name ({', '.join(PRESETS)})")
    scen.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", parents=[common, scen], help="simulate and write frames + metrics")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--steps", type=int, default=None, help="override the step count")
    p.add_argument("--no-timing", action="store_true",
                   help="write zero wall-clock columns so repeated runs are byte-identical")

    p = sub.add_parser("probe", parents=[common], help="history stiffness of one driven spring")
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--d", type=_ints, default=[50, 100, 500], help="comma separated window lengths")
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--k-min", type=float, default=30.0)
    p.add_argument("--k-hist", type=float, default=300.0)
    p.add_argument("--program", default="step:1,0",
                   help="zero | impulse:MAG,AT | step:MAG,START[,STOP]")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--out", default=None, help="CSV path (stdout when omitted)")

    p = sub.add_parser("bench", parents=[common, scen], help="step timings against history length")
    p.add_argument("--d", type=_ints, default=[0, 50, 100, 200, 500])
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--out", default=None, help="CSV path (stdout when omitted)")

    sub.add_parser("validate", parents=[scen], help="parse a scenario and report problems")
    return ap


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    _backend.set_threads(getattr(args, "threads", None))
    try:
        sc = None
        if hasattr(args, "config"):
            sc = load_scenario(args.config)
            if args.seed is not None:
                sc = sc.with_seed(args.seed)
        if args.verb == "validate":
            print(f"ok: {sc.name} ({sc.dimension}D, {sc.steps} steps, dt={sc.dt}, d={sc.spring.d})")
        elif args.verb == "run":
            if args.steps is not None:
                if args.steps < 1:
                    raise ScenarioError("--steps must be at least 1")
                sc = dataclasses.replace(sc, steps=args.steps)
            world = run(sc, args.out, timing=not args.no_timing)
            print(f"{sc.name}: {world.step_index} steps, {len(world.particles)} particles -> {args.out}")
        elif args.verb == "probe":
            try:
                program = parse_program(args.program)
                header, rows = probe(args.q, args.d, args.dt, args.k_min, args.k_hist, program, args.steps)
            except ValueError as exc:
                raise ScenarioError(str(exc)) from None
            _write(args.out, probe_csv(header, rows))
        elif args.verb == "bench":
            _write(args.out, bench_table(bench(sc, args.d, args.steps)))
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except OSError as exc:
        name = exc.filename or ""
        print(f"i/o error: {name}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
