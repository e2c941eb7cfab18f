"""Receptive-field adaptation and fusion-weight fitting.

Parameter search runs a bound-constrained DE/rand/1/bin differential
evolution over the eight SRF scalars. Because the evaporation rate is by
far the most sensitive parameter, adaptation is split into two phases:

* global phase: score uniformly sampled parameter vectors by their mean
  fitness over every level's training set, keep the best decile, and
  take the evaporation interval they span;
* local phase: one DE run per level with the evaporation bounds pinned
  to that interval and everything else statically bounded.

Fitness is the mean squared error between each training window's
activation and its 1 (same archetype) or 0 (neighboring archetype)
target. Fusion weights mapping the three perceptron outputs to a PAL
are an ordinary ridge-stabilized least-squares solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .archetypes import LabeledWindow
from .srf import SrfParams, TrailConfig, build_trail, build_trails_batch, clump, smoothstep, srf_evaluate

PARAM_NAMES = ("low_mid_start", "low_mid_end", "mid_high_start", "mid_high_end",
               "mark_width", "evaporation", "activation_start", "activation_end")
ORDER_GAP = 1e-3


@dataclass(frozen=True)
class Bounds:
    """Closed search interval per SRF parameter, in PARAM_NAMES order."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != 8 or len(self.upper) != 8:
            raise ValueError("Bounds cover exactly the 8 SRF parameters")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("each lower bound must not exceed its upper bound")

    @classmethod
    def default(cls) -> "Bounds":
        # inflection points span [0, 1]; mark width and evaporation keep a
        # small margin away from their open endpoints
        return cls(
            lower=(0.0, 0.0, 0.0, 0.0, 1e-3, 1e-3, 0.0, 0.0),
            upper=(1.0, 1.0, 1.0, 1.0, 0.5, 0.999, 1.0, 1.0),
        )

    def with_evaporation(self, interval: tuple[float, float]) -> "Bounds":
        lo, hi = interval
        lower = list(self.lower)
        upper = list(self.upper)
        lower[5], upper[5] = lo, hi
        return Bounds(tuple(lower), tuple(upper))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.lower), np.array(self.upper)


@dataclass(frozen=True)
class DeConfig:
    population: int = 20
    weight: float = 0.5          # differential weight F
    crossover: float = 0.9       # crossover probability CR
    max_generations: int = 100
    early_stop_fitness: float = 1e-4
    stall_generations: int = 30
    seed: int = 0

    def validate(self) -> None:
        if self.population < 4:
            raise ValueError(f"population must be >= 4, got {self.population}")
        if not (0.0 < self.weight <= 2.0):
            raise ValueError(f"differential weight must be in (0, 2], got {self.weight}")
        if not (0.0 <= self.crossover <= 1.0):
            raise ValueError(f"crossover must be in [0, 1], got {self.crossover}")


@dataclass(frozen=True)
class TrainingPair:
    samples: np.ndarray
    target: float                # 1.0 same archetype, 0.0 dissimilar


@dataclass(frozen=True)
class FusionWeights:
    """Linear map from perceptron outputs (step, heart, motion) to PAL."""

    bias: float
    step_rate: float
    heart_rate: float
    wrist_motion: float

    def fuse(self, step_level: float, heart_level: float, motion_level: float) -> float:
        return (self.bias + self.step_rate * step_level
                + self.heart_rate * heart_level + self.wrist_motion * motion_level)


@dataclass
class DeResult:
    x: np.ndarray
    fitness: float
    history: list[float]         # best-so-far per generation, init included
    generations: int


# ---------------------------------------------------------------------------
# Differential evolution (DE/rand/1/bin)
# ---------------------------------------------------------------------------

def _reflect(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    for _ in range(64):
        over = x > upper
        under = x < lower
        if not (over.any() or under.any()):
            return x
        x = np.where(over, 2.0 * upper - x, x)
        x = np.where(under, 2.0 * lower - x, x)
    return np.clip(x, lower, upper)


def _distinct_triples(rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, 3) indices, each row distinct among itself and from its row number."""
    idx = rng.integers(0, n, size=(n, 3))
    rows = np.arange(n)
    for _ in range(1000):
        bad = ((idx[:, 0] == rows) | (idx[:, 1] == rows) | (idx[:, 2] == rows)
               | (idx[:, 0] == idx[:, 1]) | (idx[:, 0] == idx[:, 2])
               | (idx[:, 1] == idx[:, 2]))
        if not bad.any():
            return idx
        idx[bad] = rng.integers(0, n, size=(int(bad.sum()), 3))
    raise RuntimeError("could not sample distinct DE indices")


def srf_param_repair(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Restore the SRF ordering constraints on one parameter vector.

    The four clumping inflections are sorted ascending and the two
    activation inflections swapped into order; exact ties on the pairs
    that must be strict are separated by ORDER_GAP. Assumes the four
    clumping coordinates share one bound interval, as the defaults do.
    """
    x = x.copy()
    quad = np.sort(x[0:4])
    if quad[1] <= quad[0]:
        quad[1] = quad[0] + ORDER_GAP
    if quad[2] < quad[1]:
        quad[2] = quad[1]
    if quad[3] <= quad[2]:
        quad[3] = quad[2] + ORDER_GAP
    hi = upper[3]
    if quad[3] > hi:                      # gap bumps pushed past the bound
        quad[3] = hi
        quad[2] = min(quad[2], quad[3] - ORDER_GAP)
        quad[1] = min(quad[1], quad[2])
        quad[0] = min(quad[0], quad[1] - ORDER_GAP)
    x[0:4] = quad
    a, b = (x[6], x[7]) if x[6] <= x[7] else (x[7], x[6])
    if b <= a:
        b = a + ORDER_GAP
        if b > upper[7]:
            b = upper[7]
            a = b - ORDER_GAP
    x[6], x[7] = a, b
    return x


def de_optimize(objective: Callable[[np.ndarray], float],
                lower: Sequence[float], upper: Sequence[float],
                config: DeConfig,
                repair: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]] = None,
                objective_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> DeResult:
    """Minimize a bound-constrained objective with DE/rand/1/bin.

    Uniform random init inside the bounds; mutant a + F (b - c) with
    distinct partners; binomial crossover with one forced coordinate;
    out-of-bounds coordinates reflected back inside; greedy selection.
    Fully deterministic for a given config.seed. ``repair`` (applied to
    every initial and trial vector) restores hard ordering constraints;
    ``objective_batch``, if given, scores a whole (n, dim) population in
    one call and must agree with ``objective`` row by row.
    """
    config.validate()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or lower.ndim != 1:
        raise ValueError("lower and upper bounds must be 1-D and the same length")
    if np.any(lower > upper) or not (np.isfinite(lower).all() and np.isfinite(upper).all()):
        raise ValueError("infeasible bounds")
    dim = lower.size
    n = config.population
    rng = np.random.default_rng(config.seed)

    def score(pop: np.ndarray) -> np.ndarray:
        if objective_batch is not None:
            return np.asarray(objective_batch(pop), dtype=float)
        return np.array([float(objective(x)) for x in pop])

    pop = lower + rng.random((n, dim)) * (upper - lower)
    if repair is not None:
        pop = np.array([repair(x, lower, upper) for x in pop])
    fit = score(pop)
    best_i = int(np.argmin(fit))
    best_x, best_f = pop[best_i].copy(), float(fit[best_i])
    history = [best_f]
    stall = 0
    gens = 0

    for _ in range(config.max_generations):
        if best_f <= config.early_stop_fitness or stall >= config.stall_generations:
            break
        gens += 1
        abc = _distinct_triples(rng, n)
        mutant = pop[abc[:, 0]] + config.weight * (pop[abc[:, 1]] - pop[abc[:, 2]])
        mutant = _reflect(mutant, lower, upper)
        cross = rng.random((n, dim)) < config.crossover
        cross[np.arange(n), rng.integers(0, dim, n)] = True
        trial = np.where(cross, mutant, pop)
        if repair is not None:
            trial = np.array([repair(x, lower, upper) for x in trial])
        trial_fit = score(trial)
        better = trial_fit <= fit
        pop[better] = trial[better]
        fit[better] = trial_fit[better]
        gen_best = int(np.argmin(fit))
        if float(fit[gen_best]) < best_f:
            best_f = float(fit[gen_best])
            best_x = pop[gen_best].copy()
            stall = 0
        else:
            stall += 1
        history.append(best_f)

    return DeResult(best_x, best_f, history, gens)


# ---------------------------------------------------------------------------
# SRF fitness
# ---------------------------------------------------------------------------

def fitness_mse(params: SrfParams, pairs: Sequence[TrainingPair],
                reference_builder: Callable[[SrfParams], np.ndarray],
                config: TrailConfig) -> float:
    """Mean squared target-vs-activation error over a training set.

    The archetype trail is rebuilt with the candidate parameters (via
    ``reference_builder``) before any window is scored, since the
    reference side of an SRF runs through the same processing chain.
    """
    if not pairs:
        raise ValueError("training pairs must be non-empty")
    ref_trail = reference_builder(params)
    errors = [(p.target - srf_evaluate(p.samples, ref_trail, params, config)) ** 2
              for p in pairs]
    return float(np.mean(errors))


def _stack_pairs(pairs: Sequence[TrainingPair]) -> tuple[np.ndarray, np.ndarray]:
    windows = np.stack([np.asarray(p.samples, dtype=float) for p in pairs])
    targets = np.array([p.target for p in pairs], dtype=float)
    return windows, targets


def srf_fitness_batch(candidates: np.ndarray, windows: np.ndarray, targets: np.ndarray,
                      reference_signal: np.ndarray, config: TrailConfig) -> np.ndarray:
    """Fitness of many candidate parameter vectors over one training set.

    Row-for-row equal to fitness_mse; the trails for every candidate's
    reference signal and training windows are built in one JIT batch.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if windows.shape[1] != reference_signal.shape[0]:
        raise ValueError("training windows and reference signal must share a width")
    n_cand = candidates.shape[0]
    n_win, width = windows.shape
    block = n_win + 1

    positions = np.empty((n_cand * block, width))
    widths = np.empty(n_cand * block)
    rates = np.empty(n_cand * block)
    for i, x in enumerate(candidates):
        p = SrfParams.from_array(x)
        positions[i * block] = clump(reference_signal, p)
        positions[i * block + 1:(i + 1) * block] = clump(windows, p)
        widths[i * block:(i + 1) * block] = x[4]
        rates[i * block:(i + 1) * block] = x[5]

    trails = build_trails_batch(positions, widths, rates, config)
    out = np.empty(n_cand)
    for i, x in enumerate(candidates):
        ref_trail = trails[i * block]
        win_trails = trails[i * block + 1:(i + 1) * block]
        mins = np.minimum(win_trails, ref_trail).sum(axis=1)
        maxs = np.maximum(win_trails, ref_trail).sum(axis=1)
        sims = np.where(maxs == 0.0, 1.0, mins / np.where(maxs == 0.0, 1.0, maxs))
        acts = smoothstep(sims, x[6], x[7])
        out[i] = np.mean((targets - acts) ** 2)
    return out


# ---------------------------------------------------------------------------
# Two-phase protocol
# ---------------------------------------------------------------------------

def build_srf_training_set(level: int, pools: Mapping[str, Sequence[LabeledWindow]],
                           ladder: Sequence[str], pair_count: int) -> list[TrainingPair]:
    """Half same-archetype positives, half nearest-neighbor negatives.

    Levels are 1-based positions on the ladder. Interior levels split
    the negative half evenly between the two neighbors; edge levels take
    it all from their single neighbor. Slices are deterministic:
    positives from the front of a pool, negatives from the back.
    """
    k = len(ladder)
    if not 1 <= level <= k:
        raise ValueError(f"level {level} outside ladder of {k}")
    n_pos = pair_count // 2
    n_neg = pair_count - n_pos
    own = ladder[level - 1]
    neighbors = [ladder[level - 2]] if level > 1 else []
    if level < k:
        neighbors.append(ladder[level])
    shares = ([n_neg] if len(neighbors) == 1 else [n_neg // 2, n_neg - n_neg // 2])

    def take(name: str, count: int, tail: bool) -> list[TrainingPair]:
        pool = pools.get(name, ())
        if len(pool) < count:
            raise ValueError(
                f"pool for class {name!r} has {len(pool)} windows, need {count}")
        chosen = pool[-count:] if tail else pool[:count]
        target = 0.0 if tail else 1.0
        return [TrainingPair(np.asarray(w.samples, dtype=float), target) for w in chosen]

    pairs = take(own, n_pos, tail=False)
    for name, share in zip(neighbors, shares):
        pairs.extend(take(name, share, tail=True))
    return pairs


def global_phase(training_sets: Sequence[Sequence[TrainingPair]],
                 reference_signals: Sequence[np.ndarray],
                 bounds: Bounds, trail_config: TrailConfig,
                 samples: int = 200, seed: int = 0) -> tuple[float, float]:
    """Find the evaporation interval spanned by the best decile.

    Uniform random parameter vectors are scored by their mean fitness
    over every level's training set; the decile with the lowest error
    survives, and its evaporation rates bound the interval handed to
    the local phase. The interval is widened symmetrically to at least
    0.01 and clipped to the static evaporation bounds.
    """
    if samples < 20:
        raise ValueError(f"global phase needs at least 20 samples, got {samples}")
    if len(training_sets) != len(reference_signals):
        raise ValueError("one reference signal per training set required")
    lower, upper = bounds.arrays()
    rng = np.random.default_rng(seed)
    cands = lower + rng.random((samples, 8)) * (upper - lower)
    cands = np.array([srf_param_repair(x, lower, upper) for x in cands])

    total = np.zeros(samples)
    for pairs, ref in zip(training_sets, reference_signals):
        windows, targets = _stack_pairs(pairs)
        total += srf_fitness_batch(cands, windows, targets, np.asarray(ref, dtype=float),
                                   trail_config)
    total /= len(training_sets)

    best = np.argsort(total, kind="stable")[:samples // 10]
    rates = cands[best, 5]
    lo, hi = float(rates.min()), float(rates.max())
    if hi - lo < 0.01:
        center = (lo + hi) / 2.0
        lo, hi = center - 0.005, center + 0.005
    lo = max(lo, bounds.lower[5])
    hi = min(hi, bounds.upper[5])
    return lo, hi


def local_phase(level: int, evaporation_interval: tuple[float, float],
                training_set: Sequence[TrainingPair], reference_signal: np.ndarray,
                bounds: Bounds, de_config: DeConfig,
                trail_config: TrailConfig) -> tuple[SrfParams, float, DeResult]:
    """Adapt one SRF with DE, evaporation pinned to the global interval."""
    lo, hi = evaporation_interval
    if not (0.0 < lo <= hi < 1.0):
        raise ValueError(f"evaporation interval must sit inside (0, 1), got [{lo}, {hi}]")
    local_bounds = bounds.with_evaporation((lo, hi))
    lower, upper = local_bounds.arrays()
    windows, targets = _stack_pairs(training_set)
    ref = np.asarray(reference_signal, dtype=float)

    def objective(x: np.ndarray) -> float:
        return float(srf_fitness_batch(x[None, :], windows, targets, ref, trail_config)[0])

    def objective_batch(pop: np.ndarray) -> np.ndarray:
        return srf_fitness_batch(pop, windows, targets, ref, trail_config)

    result = de_optimize(objective, lower, upper, de_config,
                         repair=srf_param_repair, objective_batch=objective_batch)
    return SrfParams.from_array(result.x), result.fitness, result


@dataclass
class TrainedSrf:
    level: int
    class_name: str
    params: SrfParams
    fitness: float
    generations: int


def train_srf_bank(pools: Mapping[str, Sequence[LabeledWindow]], ladder: Sequence[str],
                   reference_signals: Mapping[str, np.ndarray],
                   trail_config: TrailConfig, de_config: DeConfig,
                   bounds: Optional[Bounds] = None, pair_count: int = 40,
                   global_samples: int = 200, seed: int = 0) -> tuple[list[TrainedSrf], tuple[float, float]]:
    """Run the full two-phase protocol for one ordered bank of SRFs.

    Returns the trained fields (one per ladder level) and the shared
    evaporation interval the global phase produced. Per-level DE seeds
    are spawned deterministically from ``seed``.
    """
    bounds = bounds or Bounds.default()
    refs = [np.asarray(reference_signals[name], dtype=float) for name in ladder]
    sets = [build_srf_training_set(i, pools, ladder, pair_count)
            for i in range(1, len(ladder) + 1)]
    interval = global_phase(sets, refs, bounds, trail_config,
                            samples=global_samples, seed=seed)
    trained = []
    for level, (name, pairs, ref) in enumerate(zip(ladder, sets, refs), start=1):
        child = int(np.random.SeedSequence([seed, level]).generate_state(1)[0])
        params, fit, res = local_phase(level, interval, pairs, ref, bounds,
                                       replace(de_config, seed=child), trail_config)
        trained.append(TrainedSrf(level, name, params, fit, res.generations))
    return trained, interval


# ---------------------------------------------------------------------------
# Sensor fusion weights
# ---------------------------------------------------------------------------

def fit_fusion_weights(X: np.ndarray, y: np.ndarray, ridge: float = 1e-8) -> FusionWeights:
    """Least-squares fusion weights from rows (1, step, heart, motion).

    Solves the normal equations with a tiny ridge on the diagonal for
    rank safety; with full-rank inputs the ridge perturbs the solution
    far below reporting precision.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] != 4:
        raise ValueError(f"X must have 4 columns (1, step, heart, motion), got {X.shape}")
    if X.shape[0] < 4:
        raise ValueError(f"need at least 4 rows, got {X.shape[0]}")
    if y.shape != (X.shape[0],):
        raise ValueError("y must have one entry per row of X")
    gram = X.T @ X + ridge * np.eye(4)
    w = np.linalg.solve(gram, X.T @ y)
    return FusionWeights(bias=float(w[0]), step_rate=float(w[1]),
                         heart_rate=float(w[2]), wrist_motion=float(w[3]))
