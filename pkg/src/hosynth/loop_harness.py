"""Closed sampling/feedback loop driven by a simulated learner.

The learner stands in for a trained network: every triplet has a fixed base
difficulty that decays exponentially with the number of times the triplet has
been trained on. Running the loop with and without feedback re-weighting on
paired seeds compares how quickly the whole space is learned.
"""
import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import binomtest

from .ccv_space import FeedbackRecord, WeightMap, apply_epoch_feedback, sample_triplets
from .errors import InvalidArgument
from .seeding import derive_seed

SCHEMES = ("online", "uniform")


@dataclass
class LoopConfig:
    n_objects: int = 4
    n_poses: int = 8
    grid: tuple = (4, 8)
    epochs: int = 50
    samples: int = 256           # synthetic triplets per epoch
    batch_size: int = 64
    ratio: float = 1.0           # synthetic : real
    real_pool: int = 0           # 0 -> same as samples
    online: bool = True
    learn_rate: float = 0.05
    noise_sigma: float = -1.0    # < 0 -> 10% of the median base difficulty
    difficulty: str = "lognormal"
    difficulty_mu: float = math.log(0.02)
    difficulty_sigma: float = 0.75
    target_error: float = -1.0   # < 0 -> half the initial expected error

    @property
    def dims(self):
        return (self.n_objects, self.n_poses, self.grid[0] * self.grid[1])


@dataclass
class SimulatedLearner:
    base_difficulty: np.ndarray    # flat, one per triplet
    learn_rate: float
    noise_sigma: float
    exposures: np.ndarray = None

    def __post_init__(self):
        self.base_difficulty = np.asarray(self.base_difficulty, dtype=float).reshape(-1)
        if self.exposures is None:
            self.exposures = np.zeros(self.base_difficulty.size, dtype=np.int64)

    def expected_error(self):
        """Noise-free error averaged over the whole space."""
        return float(np.mean(self.base_difficulty * np.exp(-self.learn_rate * self.exposures)))


@dataclass
class EpochReport:
    epoch: int
    mean_error: float            # mean of the errors fed back this epoch
    expected_error: float        # whole-space noise-free error after the epoch
    records: list
    samples_drawn: int
    mix_real: int
    mix_syn: int
    weights: WeightMap = field(repr=False, default=None)


@dataclass
class ExperimentReport:
    seeds: list
    curves: dict                 # scheme -> (n_seeds, epochs) expected error
    mean_curves: dict            # scheme -> (epochs,)
    final: dict                  # scheme -> across-seed mean at the last epoch
    epoch_to_target: dict        # scheme -> first epoch reaching target (or -1)
    target_error: float
    wins: int                    # seeds where online ended strictly lower
    ties: int
    p_value: float               # one-sided sign test, online < uniform
    final_maps: dict = None      # scheme -> final WeightMap of the first seed


def make_learner(dims, config, rng):
    n = int(np.prod(dims))
    if config.difficulty == "lognormal":
        base = rng.lognormal(config.difficulty_mu, config.difficulty_sigma, n)
    elif config.difficulty == "uniform":
        base = np.full(n, math.exp(config.difficulty_mu))
    else:
        raise InvalidArgument(f"unknown difficulty model {config.difficulty!r}")
    sigma = 0.1 * float(np.median(base)) if config.noise_sigma < 0 else config.noise_sigma
    return SimulatedLearner(base, config.learn_rate, sigma)


def _flat(learner_dims, triplet):
    return int(np.ravel_multi_index(tuple(triplet), learner_dims))


def learner_error(learner, triplet, rng, dims=None):
    """One training query: decayed difficulty plus folded Gaussian noise."""
    i = _flat(dims, triplet) if dims is not None else int(triplet)
    e = learner.base_difficulty[i] * math.exp(-learner.learn_rate * learner.exposures[i])
    e += abs(rng.normal(0.0, learner.noise_sigma)) if learner.noise_sigma > 0 else 0.0
    learner.exposures[i] += 1
    return float(e)


def learner_errors(learner, flat_ids, rng):
    """Vectorised :func:`learner_error` over distinct triplets."""
    flat_ids = np.asarray(flat_ids, dtype=np.int64)
    e = learner.base_difficulty[flat_ids] * np.exp(-learner.learn_rate * learner.exposures[flat_ids])
    if learner.noise_sigma > 0:
        e = e + np.abs(rng.normal(0.0, learner.noise_sigma, len(flat_ids)))
    learner.exposures[flat_ids] += 1
    return e


def mix_batches(real_pool, synthetic, batch_size, ratio, rng):
    """One mixed batch: ``round(bs * r / (1 + r))`` synthetic items, the rest real.

    Items are ("syn", x) or ("real", x); order is shuffled with ``rng``.
    """
    if batch_size < 1 or ratio < 0:
        raise InvalidArgument("batch_size must be >= 1 and ratio >= 0")
    n_syn = int(round(batch_size * ratio / (1.0 + ratio)))
    n_real = batch_size - n_syn
    if n_syn > len(synthetic) or n_real > len(real_pool):
        raise InvalidArgument(f"need {n_syn} synthetic and {n_real} real items, "
                              f"have {len(synthetic)} and {len(real_pool)}")
    items = [("syn", s) for s in list(synthetic)[:n_syn]]
    items += [("real", r) for r in list(real_pool)[:n_real]]
    order = rng.permutation(len(items))
    return [items[k] for k in order]


def _mix_counts(n_syn_total, config):
    """Real/synthetic counts when an epoch's synthetic samples are batched."""
    if config.ratio <= 0:
        return 0, n_syn_total
    per = int(round(config.batch_size * config.ratio / (1.0 + config.ratio)))
    if per <= 0:
        return 0, n_syn_total
    n_batches = -(-n_syn_total // per)
    return n_batches * (config.batch_size - per), n_syn_total


def run_epoch(wmap, learner, config, rng, epoch=0):
    """Sample, query the learner, and (online only) re-weight the map."""
    n = config.samples
    if n > wmap.size:
        raise InvalidArgument(f"samples per epoch ({n}) exceed the space size ({wmap.size})")
    triplets = sample_triplets(wmap, n, rng)
    flat = np.array([wmap.flat_index(t) for t in triplets], dtype=np.int64)
    errors = learner_errors(learner, flat, rng)
    records = [FeedbackRecord(t, float(e)) for t, e in zip(triplets, errors)]
    new_map = apply_epoch_feedback(wmap, records) if config.online and records else wmap
    mix_real, mix_syn = _mix_counts(n, config)
    return EpochReport(epoch, float(errors.mean()) if n else 0.0, learner.expected_error(),
                       records, mix_real + mix_syn, mix_real, mix_syn, new_map)


def run_scheme(config, seed, online):
    """Initial error, per-epoch whole-space expected error, and the final map."""
    dims = config.dims
    learner = make_learner(dims, config, np.random.default_rng(derive_seed(seed, "learner")))
    rng = np.random.default_rng(derive_seed(seed, "sampling"))
    cfg = replace(config, online=online)
    wmap = WeightMap.uniform(dims)
    start = learner.expected_error()
    curve = []
    for ep in range(config.epochs):
        rep = run_epoch(wmap, learner, cfg, rng, ep)
        wmap = rep.weights
        curve.append(rep.expected_error)
    return start, np.array(curve), wmap


def run_experiment(config, seeds):
    if len(seeds) < 2:
        raise InvalidArgument("run_experiment needs at least 2 seeds")
    curves = {s: [] for s in SCHEMES}
    starts, final_maps = [], {}
    for seed in seeds:
        for scheme in SCHEMES:
            start, c, wmap = run_scheme(config, seed, scheme == "online")
            curves[scheme].append(c)
            final_maps.setdefault(scheme, wmap)
        starts.append(start)
    curves = {s: np.array(v) for s, v in curves.items()}
    means = {s: v.mean(axis=0) for s, v in curves.items()}
    target = 0.5 * float(np.mean(starts)) if config.target_error < 0 else config.target_error
    reach = {}
    for s, m in means.items():
        hit = np.flatnonzero(m <= target)
        reach[s] = int(hit[0]) if len(hit) else -1
    diff = curves["uniform"][:, -1] - curves["online"][:, -1]
    wins, ties = int(np.sum(diff > 0)), int(np.sum(diff == 0))
    trials = len(seeds) - ties
    p = binomtest(wins, trials, 0.5, alternative="greater").pvalue if trials else 1.0
    return ExperimentReport(list(seeds), curves, means,
                            {s: float(m[-1]) for s, m in means.items()}, reach, target,
                            wins, ties, float(p), final_maps)


def write_curves_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "scheme", "epoch", "mean_error"])
        for scheme in SCHEMES:
            for k, seed in enumerate(report.seeds):
                for ep, v in enumerate(report.curves[scheme][k]):
                    w.writerow([seed, scheme, ep, repr(float(v))])


def read_curves_csv(path):
    """Returns {(seed, scheme): array of per-epoch values}."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault((int(row["seed"]), row["scheme"]), []).append(float(row["mean_error"]))
    return {k: np.array(v) for k, v in out.items()}
