"""Command-line entry point.

    epivisit run -c CONFIG -s SCHEMA [-l LEVEL]
    epivisit validate -c CONFIG -s SCHEMA
    epivisit generate-population smallville|random ... -o DIR
    epivisit epicurve GLOBAL_OBSERVABLES_CSV [-o OUT.csv] [--plot OUT.svg]

A bare ``-c CONFIG -s SCHEMA`` without subcommand means ``run``. Logs go to
stderr, summaries to stdout. Exit codes: 0 success, 1 validation or runtime
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .behavior import builtin
from .config import load_config, read_json, validate_config
from .engine import Engine, RunParameters
from .errors import ConfigError, EpivisitError
from .output import EPICURVE_FILE, OutputWriter, emit_epicurve, read_global_observables
from .population import (
    generate_random_population,
    generate_smallville,
    load_population,
    write_location_weights,
    write_persons,
    write_visits,
)

log = logging.getLogger("epivisit")

LOG_LEVELS = ("critical", "error", "warning", "info", "debug")
SUBCOMMANDS = ("run", "validate", "generate-population", "epicurve")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: usage error: {message}\n")


def _add_common(p: argparse.ArgumentParser, need_config: bool) -> None:
    if need_config:
        p.add_argument("-c", "--config", required=True, type=Path, help="configuration JSON file")
        p.add_argument("-s", "--schema", required=True, type=Path, help="configuration JSON schema")
    p.add_argument("-l", "--log-level", choices=LOG_LEVELS, default="warning", help="log level (default: warning)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="epivisit", description="Agent-based epidemic simulation on activity/visit schedules.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("run", help="run a simulation and write the output files")
    _add_common(p, True)
    p.add_argument("--num-workers", type=int, default=None, help="override num_workers from the config")
    p.add_argument("--seed", type=int, default=None, help="override seed from the config")
    p.add_argument("--plot", action="store_true", help="also render epicurve.svg (needs matplotlib)")

    p = sub.add_parser("validate", help="validate a configuration against the schema")
    _add_common(p, True)

    p = sub.add_parser("generate-population", help="write a synthetic population as CSV files")
    _add_common(p, False)
    p.add_argument("kind", choices=("smallville", "random"))
    p.add_argument("n_people", nargs="?", type=int, help="number of persons (random only)")
    p.add_argument("n_locations", nargs="?", type=int, help="number of activity locations (random only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output-directory", type=Path, default=Path("."))

    p = sub.add_parser("epicurve", help="regenerate epicurve data from a global observables file")
    _add_common(p, False)
    p.add_argument("global_observables", type=Path)
    p.add_argument("-o", "--output", type=Path, default=None, help=f"CSV path (default: {EPICURVE_FILE} alongside input)")
    p.add_argument("--plot", type=Path, default=None, help="also render the curves to this SVG/PDF path")
    return parser


def _normalize(argv: list[str]) -> list[str]:
    # legacy form: no subcommand, just -c/-s
    if argv and argv[0] not in SUBCOMMANDS and argv[0] not in ("-h", "--help", "--version"):
        return ["run", *argv]
    return argv


def _setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("epivisit")
    root.handlers[:] = [handler]
    root.setLevel(getattr(logging, level.upper()))
    root.propagate = False


def _validate(config_path: Path, schema_path: Path) -> int:
    report = validate_config(read_json(config_path), schema_path)
    if not report.ok:
        print(f"validation failed: {config_path}", file=sys.stderr)
        print(str(report), file=sys.stderr)
        return 1
    return 0


def cmd_validate(args) -> int:
    status = _validate(args.config, args.schema)
    if status == 0:
        load_config(args.config)  # semantic checks beyond the schema
        print(f"{args.config}: valid")
    return status


def cmd_run(args) -> int:
    status = _validate(args.config, args.schema)
    if status:
        return status
    config = load_config(args.config)
    overrides = {}
    if args.num_workers is not None:
        overrides["num_workers"] = args.num_workers
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = config.replace(**overrides) if overrides else config
    log.info("loading population from %s and %s", config.person_file, config.visit_file)
    population = load_population(config.person_file, config.visit_file, config.location_file)
    disease = config.disease_model()
    behavior = builtin(config.behavior_model.name, config.behavior_model.params, seed=config.seed)
    params = RunParameters.from_config(config)
    log.info("running %d iterations on %d persons, behavior %r, %d worker(s)",
             config.iterations, len(population), behavior, params.num_workers)

    out_dir = Path(config.output_directory)
    engine = Engine(population, disease, behavior, params)
    writer = OutputWriter(out_dir, write_local_observables=params.write_local_observables)
    with writer:
        writer.begin(population.pids, engine.model_classes)
        outputs = engine.run(on_step=writer)
        writer.transitions(outputs.transitions)
    plot = out_dir / "epicurve.svg" if args.plot else None
    emit_epicurve(outputs.global_counts or [outputs.final_counts], out_dir / EPICURVE_FILE, plot)
    print(json.dumps({**outputs.summary(), "output_directory": str(out_dir)}, indent=2))
    return 0


def cmd_generate_population(args) -> int:
    if args.kind == "random":
        if args.n_people is None or args.n_locations is None:
            raise _UsageError("generate-population random needs N_PEOPLE and N_LOCATIONS")
        pop = generate_random_population(args.n_people, args.n_locations, args.seed)
    else:
        pop = generate_smallville()
    d = args.output_directory
    d.mkdir(parents=True, exist_ok=True)
    paths = [write_persons(d / "persons.csv", pop.persons), write_visits(d / "visits.csv", pop)]
    if pop.location_weights:
        paths.append(write_location_weights(d / "locations.csv", pop.location_weights))
    for p in paths:
        print(p)
    return 0


def cmd_epicurve(args) -> int:
    rows = read_global_observables(args.global_observables)
    out = args.output or args.global_observables.with_name(EPICURVE_FILE)
    print(emit_epicurve(rows, out, args.plot))
    return 0


class _UsageError(Exception):
    pass


COMMANDS = {
    "run": cmd_run,
    "validate": cmd_validate,
    "generate-population": cmd_generate_population,
    "epicurve": cmd_epicurve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = _normalize(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    _setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"epivisit: usage error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"epivisit: configuration error: {exc}", file=sys.stderr)
        return 1
    except EpivisitError as exc:
        print(f"epivisit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"epivisit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
