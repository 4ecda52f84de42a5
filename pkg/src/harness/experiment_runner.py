import functools
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import repeat
from pathlib import Path

import numpy as np
from scipy import stats

from anaconda.anaconda import AnacondaConfig, AnacondaPolicy
from baselines.baseline_policies import fixed_budget_restart, oracle_restart, uniform_random
from baselines.policy import rng_stream
from harness import persistence
from harness.regret import regret_series
from measures.nonstationarity import measure_report
from measures.oracles import bad_segments


log = logging.getLogger("Harness_Log")

POLICY_NAMES = ("anaconda", "uniform_random", "oracle_restart", "fixed_budget_restart")


@dataclass(frozen=True)
class PolicySpec:
    """
    Picklable description of a policy; build_policy turns it into a fresh instance per seed.

    Attributes:
        name (str): One of POLICY_NAMES.
        elim_constant (float): C of the elimination threshold (eliminating policies only).
        log_replay_tree (bool): ANACONDA only.
        num_restarts (int): fixed_budget_restart only.
        forced_replays (tuple): ANACONDA only, (s, m) pairs forced in the first episode.
    """
    name: str = "anaconda"
    elim_constant: float = 1.0
    log_replay_tree: bool = True
    num_restarts: int = 0
    forced_replays: tuple = ()

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ValueError(f"unknown policy '{self.name}' (expected one of {', '.join(POLICY_NAMES)})")


def build_policy(spec, env, seed):
    if spec.name == "anaconda":
        return AnacondaPolicy(AnacondaConfig(horizon=env.horizon,
                                             num_arms=env.num_arms,
                                             elim_constant=spec.elim_constant,
                                             seed=seed,
                                             log_replay_tree=spec.log_replay_tree,
                                             forced_replays=tuple(spec.forced_replays)))
    if spec.name == "uniform_random":
        return uniform_random(env.num_arms, env.horizon, seed)
    if spec.name == "oracle_restart":
        return oracle_restart(env.num_arms, env.horizon, seed, env.switch_rounds, spec.elim_constant)
    return fixed_budget_restart(env.num_arms, env.horizon, seed, spec.num_restarts, spec.elim_constant)


@dataclass
class RunRecord:
    """
    Outcome of one policy run against one preference sequence.

    Attributes:
        seed (int): Run seed.
        policy (str): Policy name.
        regret (np.ndarray): Per-round expected regret r_t ∈ [0, 1/2].
        cumulative (np.ndarray): Running sum of `regret`.
        episode_starts (tuple): First round of every episode (restart).
        eliminations (list): EliminationRecord entries of the run.
        trace (PolicyTrace): Full per-round trace.
        store (EstimateStore or None): Duel events of eliminating policies.
        measures (MeasureReport or None): Non-stationarity measures of the environment.
        wall_time (float): Seconds spent playing.
    """
    seed: int
    policy: str
    regret: np.ndarray
    cumulative: np.ndarray
    episode_starts: tuple
    eliminations: list
    trace: object
    store: object = None
    measures: object = None
    wall_time: float = 0.0

    @property
    def dynamic_regret(self):
        return float(self.cumulative[-1])

    @property
    def restarts(self):
        return len(self.episode_starts) - 1

    def summary(self):
        return {"seed": self.seed,
                "policy": self.policy,
                "dynamic_regret": self.dynamic_regret,
                "restarts": self.restarts,
                "eliminations": len(self.eliminations)}


def run_single(env, spec, seed, measures=None):
    """Plays `spec` against `env` for its whole horizon; deterministic per (env, spec, seed)."""
    policy = build_policy(spec, env, seed)
    env_rng = rng_stream(seed, "environment")
    started = time.perf_counter()
    for _ in range(env.horizon):
        policy.step(env, env_rng)
    elapsed = time.perf_counter() - started

    trace = policy.trace
    regret = regret_series(env, trace.first, trace.second)
    record = RunRecord(seed=seed,
                       policy=spec.name,
                       regret=regret,
                       cumulative=np.cumsum(regret),
                       episode_starts=tuple(trace.episode_starts),
                       eliminations=list(trace.eliminations),
                       trace=trace,
                       store=getattr(policy, "store", None),
                       measures=measures,
                       wall_time=elapsed)
    log.debug(f"{spec.name} seed {seed}: DR(T) = {record.dynamic_regret:.3f}, "
              f"{record.restarts} restarts, {elapsed:.2f}s")
    return record


def resolve_jobs(jobs):
    """-1 means one worker per CPU."""
    if jobs == -1:
        return os.cpu_count() or 1
    if jobs < 1:
        raise ValueError(f"jobs must be -1 or at least 1, got {jobs}")
    return jobs


def run_seeds(env, spec, seeds, jobs=1, measures=None):
    """Runs one record per seed, in parallel when jobs > 1; results come back in seed order."""
    seeds = list(seeds)
    workers = min(resolve_jobs(jobs), max(len(seeds), 1))
    if workers == 1:
        return [run_single(env, spec, seed, measures) for seed in seeds]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(run_single, repeat(env), repeat(spec), seeds, repeat(measures)))


def mean_and_stderr(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError(f"a standard error needs at least 2 runs, got {values.size}")
    return float(values.mean()), float(stats.sem(values))


def cw_retention(record, env):
    """A_good eliminations that removed the Condorcet winner of their round (empty when it was kept)."""
    return [r for r in record.eliminations
            if r.source == "good" and r.arm == env.winner(r.round)]


@dataclass(frozen=True)
class RestartAttribution:
    episode_start: int
    restart_round: int
    cw_switched: bool


def restart_attribution(record, env):
    """For every restart, whether the Condorcet winner changed inside the episode it ended."""
    starts = record.episode_starts
    attributions = []
    for start, restart in zip(starts, starts[1:]):
        switched = any(start < tau < restart for tau in env.switch_rounds)
        attributions.append(RestartAttribution(start, restart, switched))
    return attributions


@dataclass(frozen=True)
class PerfectReplayTrial:
    seed: int
    arm: int
    replay_start: int
    replay_length: int
    eliminated: bool
    elimination_round: int | None


def staged_replay(env, arm, c3):
    """
    (s, m) of a replay covering the first bad segment of `arm` after the first Condorcet winner
    switch, with m the smallest power of two ≥ the segment length.
    """
    if not env.switch_rounds:
        raise ValueError("a perfect replay needs a Condorcet winner switch")
    switch = env.switch_rounds[0]
    for segment in bad_segments(env, switch, arm, c3):
        if segment.is_bad:
            m = 2
            while m < segment.length:
                m *= 2
            return segment.start, m
    raise ValueError(f"arm {arm} has no bad segment after round {switch}")


def perfect_replay_trial(env, arm, c3, seed, elim_constant=1.0):
    """
    Forces a replay over the first bad segment of `arm` and reports whether `arm` left A_good
    before that replay ended.
    """
    s, m = staged_replay(env, arm, c3)
    spec = PolicySpec("anaconda", elim_constant=elim_constant, forced_replays=((s, m),))
    record = run_single(env, spec, seed)
    node = next((n for n in record.trace.replay_nodes if n.episode == 0 and n.start == s), None)
    if node is None:
        # The first episode ended before the staged round.
        return PerfectReplayTrial(seed, arm, s, m, False, None)
    end = node.end if node.end is not None else env.horizon + 1
    hit = next((r for r in record.eliminations
                if r.source == "good" and r.arm == arm and s <= r.round <= end), None)
    return PerfectReplayTrial(seed, arm, s, node.duration, hit is not None,
                              hit.round if hit is not None else None)


class ExperimentRunner:
    def __init__(self, env, spec, seeds, output_directory, jobs=1,
                 stages_to_process=(1, 1, 1, 1), config_payload=None, schema_version=1):
        """
        Runs one policy over many seeds against one environment and persists the artefacts.

        NOTE: The experiment is composed of 4 sequential stages. \n
        The `stages_to_process` tuple determines which of these stages should be executed:
            - stages_to_process[0]: Run Stage 1 (1 to run, 0 to skip) | Computes the environment's measures
            - stages_to_process[1]: Run Stage 2 (1 to run, 0 to skip) | Plays every seed
            - stages_to_process[2]: Run Stage 3 (1 to run, 0 to skip) | Writes per-run CSV/JSON files
            - stages_to_process[3]: Run Stage 4 (1 to run, 0 to skip) | Writes summary.json and manifest.json

        Parameters:
          env (PreferenceSequence): The environment.
          spec (PolicySpec): The policy to run.
          seeds (list): Run seeds, usually base_seed + index.
          output_directory (str or Path): Where artefacts are written.
          jobs (int): Worker processes; -1 uses one per CPU.
          config_payload (dict, optional): Canonical config, hashed into the manifest.
          schema_version (int): Config schema version stamped into the manifest.
        """
        self.env = env
        self.spec = spec
        self.seeds = list(seeds)
        self.output_directory = Path(output_directory)
        self.jobs = jobs
        self.stages_to_process = stages_to_process
        self.config_payload = config_payload or {}
        self.schema_version = schema_version
        self.measures = None
        self.records = []
        self.written_files = []

        self.logger = logging.getLogger("Harness_Log")

        if len(self.stages_to_process) != 4 or any(v not in (0, 1) for v in self.stages_to_process):
            self.logger.error("Stages to process have been incorrectly set!")
            raise ValueError("Stages to process must be a tuple of four 0 or 1 values")
        if not self.seeds:
            self.logger.error("No seeds to run")
            raise ValueError("at least one seed is required")

    @staticmethod
    def process_decorator(function):
        @functools.wraps(function)
        def wrap(self, *args, **kwargs):
            activate = kwargs.pop('activate', 1)
            if activate == 1:
                self.logger.info(f"Processing Started For: {function.__name__}")
                started = time.perf_counter()
                result = function(self, *args, **kwargs)
                self.logger.info(f"Processing Finished For: {function.__name__} "
                                 f"in {time.perf_counter() - started:.2f}s")
                return result
            self.logger.info(f"Processing Skipped For: {function.__name__}")
            return None
        return wrap

    @process_decorator
    def _compute_measures(self):
        self.measures = measure_report(self.env)
        problems = self.measures.check_orderings()
        for problem in problems:
            self.logger.warning(f"Measure ordering violated: {problem}")

    @process_decorator
    def _run_policies(self):
        self.records = run_seeds(self.env, self.spec, self.seeds, self.jobs, self.measures)

    @process_decorator
    def _write_runs(self):
        for record in self.records:
            self.written_files.extend(persistence.write_run_artifacts(record, self.output_directory))
        if self.measures is not None:
            path = self.output_directory / "measures.json"
            persistence.write_json(self.measures.to_json(), path)
            self.written_files.append(path)

    @process_decorator
    def _write_summary(self):
        path = self.output_directory / "summary.json"
        persistence.write_json(self.summary(), path)
        self.written_files.append(path)
        self.written_files.append(persistence.write_manifest(
            self.output_directory, self.schema_version, self.config_payload, self.written_files))

    def summary(self):
        regrets = [record.dynamic_regret for record in self.records]
        payload = {"policy": self.spec.name,
                   "environment": self.env.describe(),
                   "seeds": self.seeds,
                   "runs": [record.summary() for record in self.records]}
        if len(regrets) >= 2:
            payload["mean_dynamic_regret"], payload["stderr_dynamic_regret"] = mean_and_stderr(regrets)
        elif regrets:
            payload["mean_dynamic_regret"] = regrets[0]
        return payload

    def start_experiment(self):
        """Runs the enabled stages in order and returns the run records."""
        self._compute_measures(activate=self.stages_to_process[0])
        self._run_policies(activate=self.stages_to_process[1])
        self._write_runs(activate=self.stages_to_process[2])
        self._write_summary(activate=self.stages_to_process[3])
        return self.records
