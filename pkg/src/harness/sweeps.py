import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import repeat

import numpy as np
from scipy import stats

from baselines.policy import rng_stream
from estimator.estimate_store import DuelEvent, EstimateStore
from harness.experiment_runner import mean_and_stderr, resolve_jobs, run_seeds
from measures.nonstationarity import significant_cw_switches
from prefs.preference_matrix import with_condorcet_winner
from prefs.sequences import rotating_drift_sequence, scripted_switch_sequence, stationary_sequence


log = logging.getLogger("Harness_Log")


@dataclass(frozen=True)
class SweepCell:
    """
    Mean and standard error of DR(T) for one (policy, horizon, environment) over all seeds.

    `num_switches` is the x-axis count: scripted winner switches S, or significant winner switches
    S̃ for utility drift environments.
    """
    label: str
    policy: str
    horizon: int
    num_switches: int
    seeds: tuple
    mean: float
    stderr: float
    environment: str = "scripted_switches"


@dataclass
class SweepResult:
    """
    Attributes:
        cells (list): One SweepCell per grid point.
        switch_slopes (dict): "label@T" → slope of ln(mean DR) against ln(count + 1).
        horizon_slopes (dict): "label@count" → slope of ln(mean DR) against ln(T), when several horizons ran.
    """
    cells: list
    switch_slopes: dict = field(default_factory=dict)
    horizon_slopes: dict = field(default_factory=dict)

    def to_json(self):
        cells = []
        for cell in self.cells:
            entry = asdict(cell)
            entry["seeds"] = list(cell.seeds)
            cells.append(entry)
        return {"cells": cells,
                "switch_slopes": dict(self.switch_slopes),
                "horizon_slopes": dict(self.horizon_slopes)}


def scaling_fit(xs, mean_regrets):
    """Least-squares slope of ln(mean DR) against ln(x)."""
    xs = np.asarray(xs, dtype=float)
    means = np.asarray(mean_regrets, dtype=float)
    if xs.size < 2 or xs.size != means.size:
        raise ValueError("a slope needs at least 2 matching points")
    if np.any(xs <= 0) or np.any(means <= 0):
        raise ValueError("log-log fit needs positive values")
    if np.unique(xs).size < 2:
        raise ValueError("a slope needs at least 2 distinct x values")
    return float(stats.linregress(np.log(xs), np.log(means)).slope)


def spec_labels(specs):
    """Policy names, suffixed with their list position when a name occurs more than once."""
    names = [spec.name for spec in specs]
    return [f"{name}#{i}" if names.count(name) > 1 else name for i, name in enumerate(names)]


def _fit_slopes(cells, labels):
    result = SweepResult(cells)
    for label in labels:
        own = [c for c in cells if c.label == label]
        for horizon in sorted({c.horizon for c in own}):
            row = [c for c in own if c.horizon == horizon]
            if len({c.num_switches for c in row}) >= 2:
                result.switch_slopes[f"{label}@{horizon}"] = scaling_fit(
                    [c.num_switches + 1 for c in row], [c.mean for c in row])
        for count in sorted({c.num_switches for c in own}):
            column = [c for c in own if c.num_switches == count]
            if len({c.horizon for c in column}) >= 2:
                result.horizon_slopes[f"{label}@{count}"] = scaling_fit(
                    [c.horizon for c in column], [c.mean for c in column])
    return result


def _run_grid(grid, specs, seeds, jobs, environment):
    """Runs every spec on every (horizon, count, env) grid point."""
    labels = spec_labels(specs)
    cells = []
    for horizon, count, env in grid:
        for label, spec in zip(labels, specs):
            records = run_seeds(env, spec, seeds, jobs)
            mean, stderr = mean_and_stderr([r.dynamic_regret for r in records])
            log.info(f"Sweep {label} T={horizon} {environment} count={count}: "
                     f"mean DR {mean:.2f} ± {stderr:.2f}")
            cells.append(SweepCell(label, spec.name, horizon, count, tuple(seeds), mean, stderr,
                                   environment))
    return _fit_slopes(cells, labels)


def sweep_switches(num_arms, horizons, switch_counts, gap, specs, seeds, jobs=1):
    """
    Runs every policy spec on scripted-switch environments over the grid horizons × switch_counts.

    The switch count of each environment is the scripted ground truth; slopes use S + 1.
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError(f"a sweep needs at least 2 seeds, got {len(seeds)}")
    grid = [(horizon, num_switches, scripted_switch_sequence(num_arms, horizon, num_switches, gap))
            for horizon in horizons for num_switches in switch_counts]
    return _run_grid(grid, specs, seeds, jobs, "scripted_switches")


def sweep_significant_switches(num_arms, horizons, rotation_counts, gap, specs, seeds, jobs=1):
    """
    Runs every policy spec on rotating utility drift environments. The x-axis of each cell is the
    measured number of significant winner switches S̃ of its environment; slopes use S̃ + 1.
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError(f"a sweep needs at least 2 seeds, got {len(seeds)}")
    grid = []
    for horizon in horizons:
        for rotations in rotation_counts:
            env = rotating_drift_sequence(num_arms, horizon, rotations, gap)
            count = len(significant_cw_switches(env))
            log.info(f"Drift environment T={horizon} with {rotations} rotations has {count} "
                     f"significant switches")
            grid.append((horizon, count, env))
    return _run_grid(grid, specs, seeds, jobs, "utility_drift")


@dataclass(frozen=True)
class ConcentrationResult:
    horizon: int
    num_arms: int
    trials: int
    c1: float
    violations: int
    intervals_checked: int

    @property
    def frequency(self):
        return self.violations / self.trials

    def to_json(self):
        payload = asdict(self)
        payload["c1"] = self.c1 if math.isfinite(self.c1) else str(self.c1)
        payload["frequency"] = self.frequency
        return payload


def dyadic_intervals(horizon):
    """Aligned intervals [1 + i·2^j, (i + 1)·2^j] inside [1, T] for every j."""
    intervals = []
    length = 1
    while length <= horizon:
        for start in range(1, horizon - length + 2, length):
            intervals.append((start, start + length - 1))
        length *= 2
    return intervals


def concentration_trial(env, seed, c1, intervals):
    """
    Plays uniform pairs from all K arms and checks every ordered pair on every interval for
    |Σ (δ̂_t − δ_t)| > c1·ln(T)·(K·√len + K²). Returns True when some deviation crossed.
    """
    k, horizon = env.num_arms, env.horizon
    store = EstimateStore(k)
    pair_rng = rng_stream(seed, "pairs")
    env_rng = rng_stream(seed, "environment")
    for t in range(1, horizon + 1):
        first, second = (int(x) for x in pair_rng.integers(k, size=2))
        store.record(DuelEvent(t, first, second, env.sample_outcome(t, first, second, env_rng), k))

    deviation = store.dense_estimates(1, horizon) - (env.p - 0.5)
    prefix = np.concatenate((np.zeros((1, k, k)), np.cumsum(deviation, axis=0)))
    starts = np.array([s for s, _ in intervals])
    ends = np.array([e for _, e in intervals])
    sums = np.abs(prefix[ends] - prefix[starts - 1])
    lengths = (ends - starts + 1).astype(float)
    bounds = c1 * math.log(horizon) * (k * np.sqrt(lengths) + k * k)
    return bool(np.any(sums > bounds[:, None, None]))


def concentration_suite(horizon, num_arms, trials, c1, base_seed=0, gap=0.2, jobs=1):
    """Fraction of `trials` stationary runs in which some dyadic-interval deviation exceeds the bound."""
    if trials < 1:
        raise ValueError(f"trials must be positive, got {trials}")
    if c1 < 0:
        raise ValueError(f"c1 must be non-negative, got {c1}")
    env = stationary_sequence(with_condorcet_winner(num_arms, 0, gap), horizon)
    intervals = dyadic_intervals(horizon)
    seeds = [base_seed + i for i in range(trials)]
    workers = min(resolve_jobs(jobs), trials)
    if workers == 1:
        outcomes = [concentration_trial(env, seed, c1, intervals) for seed in seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            outcomes = list(executor.map(concentration_trial, repeat(env), seeds,
                                         repeat(c1), repeat(intervals)))
    result = ConcentrationResult(horizon, num_arms, trials, float(c1), int(sum(outcomes)),
                                 len(intervals))
    log.info(f"Concentration: {result.violations}/{trials} trials crossed c1={c1}")
    return result
