import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from harness.experiment_runner import PolicySpec
from prefs.preference_matrix import PreferenceMatrix
from prefs.sequences import (explicit_sequence, make_link, periodic_sequence,
                             piecewise_constant_sequence, scripted_switch_sequence,
                             stationary_sequence, utility_drift_sequence)


log = logging.getLogger("Config_Log")

SCHEMA_VERSION = 1
SCHEMA_PATH = Path(__file__).with_name("experiment.schema.json")


class ConfigurationError(ValueError):
    """Raised for an invalid experiment configuration; `key` is the dotted path of the culprit."""

    def __init__(self, key, message):
        self.key = key
        self.message = message
        super().__init__(f"{key}: {message}")


def load_schema():
    with open(SCHEMA_PATH, encoding="utf-8") as f:
        return json.load(f)


def environment_document_schema(schema):
    """Schema of a bare {"horizon", "environment"} document, sharing the definitions of `schema`."""
    return {"$schema": schema["$schema"],
            "type": "object",
            "required": ["horizon", "environment"],
            "additionalProperties": False,
            "properties": {"horizon": schema["properties"]["horizon"],
                           "environment": {"$ref": "#/$defs/environment"}},
            "$defs": schema["$defs"]}


def dotted_path(path):
    """["sweep", "policies", 0, "name"] → "sweep.policies[0].name"; the empty path is "<root>"."""
    key = ""
    for part in path:
        if isinstance(part, int):
            key += f"[{part}]"
        else:
            key += f".{part}" if key else str(part)
    return key or "<root>"


def validate_against_schema(payload, schema):
    """
    Raises:
        ConfigurationError: keyed by the dotted path of the first violation jsonschema reports.
    """
    try:
        jsonschema.validate(instance=payload, schema=schema)
    except jsonschema.ValidationError as e:
        key = dotted_path(e.absolute_path)
        log.error(f"Schema violation at {key}: {e.message}")
        raise ConfigurationError(key, e.message) from e


@dataclass(frozen=True)
class SweepSpec:
    num_arms: int
    switch_counts: tuple
    gap: float
    horizons: tuple
    policies: tuple
    environment: str = "scripted_switches"


@dataclass(frozen=True)
class ConcentrationSpec:
    num_arms: int
    trials: int
    c1: float
    gap: float = 0.2


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A validated experiment configuration.

    Attributes:
        horizon (int): T.
        environment (dict): Environment section, built lazily by build_environment.
        policy (PolicySpec): The policy run by `run`.
        seeds (int): Number of seeds; run i uses base_seed + i.
        base_seed (int): Seed of the first run.
        output_directory (str): Artefact directory.
        jobs (int): Worker processes, -1 for one per CPU.
        log_config (str or None): Logging configuration file, resolved against the directory of
                                  the configuration file.
        sweep (SweepSpec or None): Options of the `sweep` subcommand.
        concentration (ConcentrationSpec or None): Options of the `concentration` subcommand.
        payload (dict): The configuration as JSON, hashed into manifests.
    """
    horizon: int
    environment: dict
    policy: PolicySpec
    seeds: int = 1
    base_seed: int = 0
    output_directory: str = "results"
    jobs: int = 1
    log_config: str | None = None
    sweep: SweepSpec | None = None
    concentration: ConcentrationSpec | None = None
    schema_version: int = SCHEMA_VERSION
    payload: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def seed_list(self):
        return [self.base_seed + i for i in range(self.seeds)]

    def with_overrides(self, **overrides):
        """Copy with the non-None overrides applied, re-stamped into the payload."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if not overrides:
            return self
        payload = dict(self.payload)
        elim_constant = overrides.pop("elim_constant", None)
        policy = self.policy
        if elim_constant is not None:
            policy = replace(policy, elim_constant=float(elim_constant))
            payload["policy"] = dict(payload.get("policy", {}), elim_constant=float(elim_constant))
        payload.update(overrides)
        validate_against_schema(payload, load_schema())
        return replace(self, policy=policy, payload=payload, **overrides)


def _parse_policy(payload):
    return PolicySpec(
        name=payload.get("name", "anaconda"),
        elim_constant=float(payload.get("elim_constant", 1.0)),
        log_replay_tree=payload.get("log_replay_tree", True),
        num_restarts=payload.get("num_restarts", 0),
        forced_replays=tuple(tuple(pair) for pair in payload.get("forced_replays", [])))


def _check_environment(environment, horizon):
    """Cross-field checks the schema cannot express."""
    if environment["type"] == "explicit" and len(environment["matrices"]) != horizon:
        raise ConfigurationError("environment.matrices",
                                 f"explicit sequences need one matrix per round ({horizon})")
    return dict(environment)


def _parse_sweep(payload, horizon, default_policy):
    counts = tuple(payload["switch_counts"])
    horizons = tuple(payload.get("horizons", [horizon]))
    environment = payload.get("environment", "scripted_switches")
    # drift phases need at least 2 rounds each
    per_phase = 2 if environment == "utility_drift" else 1
    for h in horizons:
        if h < per_phase * (max(counts) + 1):
            raise ConfigurationError("sweep.horizons", f"horizon {h} too short for {max(counts)} switches")
    if environment == "utility_drift" and payload["gap"] >= 0.5:
        raise ConfigurationError("sweep.gap", "utility drift sweeps need a gap below 0.5")
    if "policies" in payload:
        specs = tuple(_parse_policy(p) for p in payload["policies"])
    else:
        specs = (default_policy,)
    return SweepSpec(payload["num_arms"], counts, float(payload["gap"]), horizons, specs, environment)


def _parse_concentration(payload):
    return ConcentrationSpec(num_arms=payload["num_arms"],
                             trials=payload["trials"],
                             c1=float(payload["c1"]),
                             gap=float(payload.get("gap", 0.2)))


def parse_experiment_config(payload, source=None):
    """
    Validates a decoded JSON document into an ExperimentConfig.

    Args:
        payload (dict): The decoded document.
        source (Path or None): File the document came from; relative paths inside it resolve
                               against its directory.
    """
    validate_against_schema(payload, load_schema())
    horizon = payload["horizon"]
    environment = _check_environment(payload["environment"], horizon)
    policy = _parse_policy(payload.get("policy", {}))
    sweep = payload.get("sweep")
    concentration = payload.get("concentration")
    log_config = payload.get("log_config")
    if log_config is not None and source is not None:
        log_config = str(Path(source).parent / log_config)
    return ExperimentConfig(
        horizon=horizon,
        environment=environment,
        policy=policy,
        seeds=payload.get("seeds", 1),
        base_seed=payload.get("base_seed", 0),
        output_directory=payload.get("output_directory", "results"),
        jobs=payload.get("jobs", 1),
        log_config=log_config,
        sweep=_parse_sweep(sweep, horizon, policy) if sweep is not None else None,
        concentration=_parse_concentration(concentration) if concentration is not None else None,
        schema_version=payload["schema_version"],
        payload=dict(payload))


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        log.error(f"Cannot read configuration {path}: {e}")
        raise ConfigurationError(str(path), f"cannot read file ({e.strerror})") from e
    except json.JSONDecodeError as e:
        log.error(f"Configuration {path} is not valid JSON: {e}")
        raise ConfigurationError(str(path), f"invalid JSON at line {e.lineno}: {e.msg}") from e


def load_experiment_config(path):
    """
    Reads and validates a JSON experiment configuration.

    Raises:
        ConfigurationError: If the file cannot be read or decoded, or fails validation.
    """
    path = Path(path)
    payload = _read_json(path)
    try:
        return parse_experiment_config(payload, source=path)
    except ConfigurationError as e:
        log.error(f"Configuration {path} rejected: {e}")
        raise


def build_environment(environment, horizon):
    """
    Builds the PreferenceSequence described by an environment section.

    Raises:
        PreferenceError: Invalid matrices, utilities or switch metadata.
        NoCondorcetWinner: Some round lacks a Condorcet winner.
    """
    kind = environment["type"]
    if kind == "stationary":
        return stationary_sequence(PreferenceMatrix.from_rows(environment["matrix"]), horizon)
    if kind == "piecewise_constant":
        segments = [(s["start"], PreferenceMatrix.from_rows(s["matrix"]))
                    for s in environment["segments"]]
        return piecewise_constant_sequence(horizon, segments)
    if kind == "scripted_switches":
        return scripted_switch_sequence(environment["num_arms"], horizon,
                                        environment["num_switches"], environment["gap"])
    if kind == "periodic":
        return periodic_sequence([PreferenceMatrix.from_rows(m) for m in environment["matrices"]],
                                 horizon)
    if kind == "explicit":
        return explicit_sequence([PreferenceMatrix.from_rows(m) for m in environment["matrices"]])
    link = make_link(environment.get("link", "linear"), environment.get("link_scale", 1.0))
    keyframes = [(k["round"], k["utilities"]) for k in environment["keyframes"]]
    return utility_drift_sequence(horizon, keyframes, link)


def load_environment_document(path):
    """
    Environment of a JSON document: either a full experiment configuration or an object with
    exactly the keys `horizon` and `environment`.

    Returns:
        tuple: (PreferenceSequence, the validated environment section, horizon)
    """
    path = Path(path)
    payload = _read_json(path)
    if isinstance(payload, dict) and "schema_version" in payload:
        config = parse_experiment_config(payload, source=path)
        horizon, environment = config.horizon, config.environment
    else:
        validate_against_schema(payload, environment_document_schema(load_schema()))
        horizon = payload["horizon"]
        environment = _check_environment(payload["environment"], horizon)
    return build_environment(environment, horizon), environment, horizon
