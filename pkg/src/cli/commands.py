import argparse
import json
import logging
import os
import sys
from pathlib import Path

from cli.experiment_config import (ConfigurationError, build_environment,
                                   load_environment_document, load_experiment_config)
from harness import persistence
from harness.experiment_runner import ExperimentRunner
from harness.sweeps import concentration_suite, sweep_significant_switches, sweep_switches
from logging_util.logging_setup import logging_setup
from measures.nonstationarity import measure_report
from prefs.preference_matrix import PreferenceError


log = logging.getLogger("Cli_Log")

DEFAULT_LOG_CONFIG = Path("log_config") / "log_config.json"
OUTPUT_ENV_VAR = "ANACONDA_OUT"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ENVIRONMENT = 2
EXIT_ORDERING = 3


def output_directory(config, flag=None):
    """ANACONDA_OUT beats --output-dir, which beats the config's output_directory."""
    return Path(os.environ.get(OUTPUT_ENV_VAR) or flag or config.output_directory)


def _load(args):
    config = load_experiment_config(args.config)
    config = config.with_overrides(horizon=args.horizon, seeds=args.seeds,
                                   base_seed=args.base_seed, jobs=args.jobs,
                                   elim_constant=args.elim_constant)
    if config.log_config and not args.log_config:
        logging_setup(config.log_config)
    return config


def _environment(config):
    env = build_environment(config.environment, config.horizon)
    if env.horizon != config.horizon:
        raise ConfigurationError("horizon", f"environment has {env.horizon} rounds, "
                                            f"config asks for {config.horizon}")
    return env


def cmd_run(args):
    config = _load(args)
    env = _environment(config)
    directory = output_directory(config, args.output_dir)
    runner = ExperimentRunner(env, config.policy, config.seed_list, directory,
                              jobs=config.jobs, config_payload=config.payload,
                              schema_version=config.schema_version)
    persistence.write_json({"horizon": config.horizon, "environment": config.environment},
                           directory / "environment.json")
    runner.written_files.append(directory / "environment.json")
    runner.start_experiment()
    summary = runner.summary()
    print(f"{config.policy.name}: {len(runner.records)} runs over T={config.horizon}, "
          f"mean DR(T) = {summary['mean_dynamic_regret']:.3f} -> {directory}")
    return EXIT_OK


def cmd_sweep(args):
    config = _load(args)
    if config.sweep is None:
        raise ConfigurationError("sweep", "the sweep subcommand needs a 'sweep' section")
    if config.seeds < 2:
        raise ConfigurationError("seeds", f"a sweep needs at least 2 seeds, got {config.seeds}")
    sweep = config.sweep
    run_sweep = sweep_significant_switches if sweep.environment == "utility_drift" else sweep_switches
    result = run_sweep(sweep.num_arms, sweep.horizons, sweep.switch_counts, sweep.gap,
                       sweep.policies, config.seed_list, config.jobs)
    directory = output_directory(config, args.output_dir)
    payload = result.to_json()
    payload["schema_version"] = config.schema_version
    payload["config_sha256"] = persistence.config_hash(config.payload)
    path = persistence.write_json(payload, directory / "sweep_summary.json")
    persistence.write_manifest(directory, config.schema_version, config.payload, [path])
    for key, slope in sorted(result.switch_slopes.items()):
        print(f"{key}: slope {slope:.3f}")
    return EXIT_OK


def cmd_concentration(args):
    config = _load(args)
    if config.concentration is None:
        raise ConfigurationError("concentration", "the concentration subcommand needs a 'concentration' section")
    spec = config.concentration
    result = concentration_suite(config.horizon, spec.num_arms, spec.trials, spec.c1,
                                 base_seed=config.base_seed, gap=spec.gap, jobs=config.jobs)
    directory = output_directory(config, args.output_dir)
    path = persistence.write_json(result.to_json(), directory / "concentration.json")
    persistence.write_manifest(directory, config.schema_version, config.payload, [path])
    print(f"violation frequency {result.frequency:.4f} ({result.violations}/{result.trials})")
    return EXIT_OK


def cmd_measures(args):
    env, _, _ = load_environment_document(args.path)
    report = measure_report(env)
    payload = report.to_json()
    if args.output:
        persistence.write_json(payload, args.output)
    print(json.dumps(payload, indent=2, sort_keys=True))
    problems = report.check_orderings()
    if problems:
        for problem in problems:
            log.error(f"Measure ordering violated: {problem}")
        return EXIT_ORDERING
    return EXIT_OK


def cmd_validate(args):
    config = _load(args)
    env = _environment(config)
    print(f"OK: {env!r}, policy {config.policy.name}, {config.seeds} seeds")
    return EXIT_OK


def _add_experiment_flags(parser):
    parser.add_argument("config", help="JSON experiment configuration")
    parser.add_argument("--horizon", type=int, help="override the horizon T")
    parser.add_argument("--seeds", type=int, help="override the number of seeds")
    parser.add_argument("--base-seed", type=int, help="override the first seed (run i uses base + i)")
    parser.add_argument("--jobs", type=int, help="worker processes, -1 for one per CPU")
    parser.add_argument("--elim-constant", type=float, help="override the elimination constant C")
    parser.add_argument("--output-dir", help=f"output directory ({OUTPUT_ENV_VAR} takes precedence)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="anaconda-duel",
        description="Non-stationary dueling bandit experiments with ANACONDA and baselines.")
    parser.add_argument("--log-config", help=f"logging configuration (default {DEFAULT_LOG_CONFIG})")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="run one policy over all seeds")
    _add_experiment_flags(run)
    run.set_defaults(handler=cmd_run)

    sweep = subparsers.add_parser("sweep", help="sweep switch counts and fit log-log slopes")
    _add_experiment_flags(sweep)
    sweep.set_defaults(handler=cmd_sweep)

    concentration = subparsers.add_parser("concentration", help="Monte Carlo check of the estimator bound")
    _add_experiment_flags(concentration)
    concentration.set_defaults(handler=cmd_concentration)

    validate = subparsers.add_parser("validate", help="validate a configuration and its environment")
    _add_experiment_flags(validate)
    validate.set_defaults(handler=cmd_validate)

    measures = subparsers.add_parser("measures", help="non-stationarity measures of an environment")
    measures.add_argument("path", help="experiment config or environment.json written by 'run'")
    measures.add_argument("--output", help="also write the report to this JSON file")
    measures.set_defaults(handler=cmd_measures)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging_setup(args.log_config or DEFAULT_LOG_CONFIG)
    try:
        return args.handler(args)
    except ConfigurationError as e:
        log.error(f"Invalid configuration: {e}")
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PreferenceError as e:
        log.error(f"Invalid environment: {e}")
        print(f"error: invalid environment: {e}", file=sys.stderr)
        return EXIT_ENVIRONMENT


if __name__ == "__main__":
    sys.exit(main())
