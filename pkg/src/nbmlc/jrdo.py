"""Joint rate and degree-distribution optimization by differential evolution.

A genome is ``(L_2, ..., L_dmax, R)``: node-perspective VN degree fractions
over the degree support followed by the coding rate. The objective for layer
``i`` is ``(1 - E) R`` where ``E`` is the Monte-Carlo frame error rate of a
graph drawn from the candidate ensemble, decoded on the layer's equivalent
channel with earlier layers decoded by their fixed codes.

All candidates of a run are scored on one frozen frame set (common random
numbers), and each genome maps to a single graph via a hash-derived seed, so
fitness is a deterministic function of the genome and greedy selection can
never lower a population member's score.
"""
from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelModel, sample_frames
from .codes import CodeCandidate, CodeError, TannerGraph, sample_graph
from .decoder import DecoderConfig, decode_batch
from .mlc import LayerPlan, PlanError, layer_priors, split


class DEError(ValueError):
    """Invalid optimizer configuration."""


@dataclass(frozen=True)
class DEConfig:
    population: int = 20
    max_iterations: int = 30
    mutation_factor: float = 0.5
    crossover_rate: float = 0.9
    mc_trials: int = 250
    rate_bounds: tuple[float, float] = (0.05, 0.95)
    degrees: tuple[int, ...] = (2, 3, 4, 5)
    seed: int = 0
    final_graph_samples: int = 5

    def __post_init__(self):
        if self.population < 4:
            raise DEError("population must be >= 4 for rand/1 mutation")
        if self.max_iterations < 0:
            raise DEError("max_iterations must be >= 0")
        if not 0 < self.mutation_factor <= 1:
            raise DEError("mutation factor must lie in (0, 1]")
        if not 0 <= self.crossover_rate <= 1:
            raise DEError("crossover rate must lie in [0, 1]")
        if self.mc_trials < 1:
            raise DEError("mc_trials must be >= 1")
        lo, hi = self.rate_bounds
        if not 0 < lo <= hi < 1:
            raise DEError(f"rate bounds {self.rate_bounds} must satisfy 0 < lo <= hi < 1")
        if not self.degrees or min(self.degrees) < 2 or len(set(self.degrees)) != len(self.degrees):
            raise DEError("degree support must list distinct degrees >= 2")

    @property
    def dim(self) -> int:
        return len(self.degrees) + 1


@dataclass
class Candidate:
    genome: np.ndarray
    fitness: float | None = None
    degrees: tuple[int, ...] = (2, 3, 4, 5)

    @property
    def rate(self) -> float:
        return float(self.genome[-1])

    @property
    def vn_distribution(self) -> dict[int, float]:
        return {d: float(f) for d, f in zip(self.degrees, self.genome[:-1]) if f > 0}

    def code_candidate(self) -> CodeCandidate:
        return CodeCandidate(self.vn_distribution, self.rate)


@dataclass
class OptimizationTrace:
    best_fitness: list[float] = field(default_factory=list)
    best_genome: list[np.ndarray] = field(default_factory=list)
    evaluations: int = 0
    wall_time: float = 0.0
    final_samples: list[float] = field(default_factory=list)

    @property
    def final_mean(self) -> float:
        return float(np.mean(self.final_samples)) if self.final_samples else float("nan")


@dataclass(frozen=True)
class LayerContext:
    """Where a layer sits: channel, split, 1-based layer index and earlier codes."""
    model: ChannelModel
    plan: LayerPlan
    layer_index: int
    n: int
    previous_codes: tuple[TannerGraph, ...] = ()
    decoder: DecoderConfig = DecoderConfig()

    def __post_init__(self):
        if not 1 <= self.layer_index <= self.plan.num_layers:
            raise PlanError(f"layer index {self.layer_index} outside 1..{self.plan.num_layers}")
        if len(self.previous_codes) != self.layer_index - 1:
            raise PlanError(f"layer {self.layer_index} needs {self.layer_index - 1} earlier codes")

    @property
    def alpha(self) -> int:
        return self.plan.alphas[self.layer_index - 1]


@dataclass(frozen=True)
class LayerFrames:
    truth: np.ndarray        # (F, N) layer symbols
    priors: np.ndarray       # (F, N, 2^alpha)


def prepare_frames(ctx: LayerContext, trials: int, seed) -> LayerFrames:
    """Sample frames and decode the earlier layers once, yielding this layer's inputs."""
    x, y = sample_frames(ctx.model, ctx.n, trials, seed)
    truth = split(ctx.plan, x)
    decoded = []
    for i, graph in enumerate(ctx.previous_codes):
        pri = layer_priors(ctx.model, ctx.plan, i, y, decoded)
        decoded.append(decode_batch(graph, graph.syndrome(truth[i]), pri, ctx.decoder).estimates)
    k = ctx.layer_index - 1
    return LayerFrames(truth[k], layer_priors(ctx.model, ctx.plan, k, y, decoded))


def project(genome, config: DEConfig = DEConfig()) -> np.ndarray:
    g = np.array(genome, dtype=np.float64)
    if g.shape != (config.dim,):
        raise DEError(f"genome must have {config.dim} components")
    lam = np.clip(g[:-1], 0.0, None)
    total = lam.sum()
    g[:-1] = lam / total if total > 0 else 1.0 / lam.size
    g[-1] = np.clip(g[-1], *config.rate_bounds)
    return g


def diff_mutation(j: int, population, f: float, rng) -> np.ndarray:
    """rand/1: x_r1 + F (x_r2 - x_r3) with r1, r2, r3 distinct and != j."""
    pop = np.asarray(population, dtype=np.float64)
    if pop.shape[0] < 4:
        raise DEError("rand/1 mutation needs at least 4 population members")
    rng = np.random.default_rng(rng)
    others = [k for k in range(pop.shape[0]) if k != j]
    r1, r2, r3 = rng.choice(others, size=3, replace=False)
    return pop[r1] + f * (pop[r2] - pop[r3])


def crossover(mutant, target, cr: float, rng) -> np.ndarray:
    """Binomial crossover; one uniformly chosen component always comes from the mutant."""
    mutant = np.asarray(mutant, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if mutant.shape != target.shape:
        raise DEError("mutant and target differ in length")
    rng = np.random.default_rng(rng)
    take = rng.random(mutant.size) < cr
    take[rng.integers(mutant.size)] = True
    return np.where(take, mutant, target)


def genome_seed(genome, salt: int = 0) -> int:
    digest = hashlib.sha256(np.asarray(genome, dtype=np.float64).tobytes() + salt.to_bytes(8, "little")).digest()
    return int.from_bytes(digest[:8], "little")


def evaluate(candidate: Candidate | np.ndarray, ctx: LayerContext, frames: LayerFrames,
             config: DEConfig = DEConfig(), graph_seed: int | None = None) -> float:
    """(1 - E) R for one graph drawn from the candidate; 0 when no graph can be built."""
    genome = candidate.genome if isinstance(candidate, Candidate) else np.asarray(candidate, dtype=np.float64)
    cand = Candidate(genome, degrees=config.degrees)
    seed = genome_seed(genome, config.seed) if graph_seed is None else graph_seed
    try:
        graph = sample_graph(cand.code_candidate(), ctx.alpha, ctx.n, seed)
    except CodeError:
        return 0.0
    res = decode_batch(graph, graph.syndrome(frames.truth), frames.priors, ctx.decoder)
    fer = float(np.mean(np.any(res.estimates != frames.truth, axis=1)))
    return (1.0 - fer) * graph.rate


def initial_population(config: DEConfig, rng) -> np.ndarray:
    k = len(config.degrees)
    lam = rng.exponential(size=(config.population, k))
    lam /= lam.sum(axis=1, keepdims=True)
    rates = rng.uniform(*config.rate_bounds, size=(config.population, 1))
    pop = np.hstack([lam, rates])
    if 3 in config.degrees:
        pop[0] = project(np.append(np.eye(k)[config.degrees.index(3)], 0.5), config)
    return pop


def optimize(ctx: LayerContext, config: DEConfig = DEConfig(), log=None):
    """Run DE on one layer; returns the best Candidate and the trace."""
    start = time.perf_counter()
    root = np.random.SeedSequence(config.seed)
    frame_seq, evo_seq, final_seq = root.spawn(3)
    rng = np.random.default_rng(evo_seq)
    frames = prepare_frames(ctx, config.mc_trials, frame_seq)
    trace = OptimizationTrace()

    pop = initial_population(config, rng)
    fit = np.array([evaluate(g, ctx, frames, config) for g in pop])
    trace.evaluations += len(pop)
    _record(trace, pop, fit)
    for gen in range(config.max_iterations):
        for j in range(config.population):
            mutant = diff_mutation(j, pop, config.mutation_factor, rng)
            trial = project(crossover(mutant, pop[j], config.crossover_rate, rng), config)
            f = evaluate(trial, ctx, frames, config)
            trace.evaluations += 1
            if f > fit[j]:
                pop[j], fit[j] = trial, f
        _record(trace, pop, fit)
        if log is not None:
            log(f"generation {gen + 1}: best fitness {fit.max():.4f}")

    best = int(np.argmax(fit))
    winner = Candidate(pop[best].copy(), float(fit[best]), config.degrees)
    if config.final_graph_samples:
        check = prepare_frames(ctx, config.mc_trials, final_seq)
        sample_seeds = final_seq.spawn(config.final_graph_samples)
        trace.final_samples = [
            evaluate(winner, ctx, check, config, graph_seed=int(s.generate_state(1)[0]))
            for s in sample_seeds
        ]
    trace.wall_time = time.perf_counter() - start
    return winner, trace


def _record(trace: OptimizationTrace, pop, fit):
    best = int(np.argmax(fit))
    trace.best_fitness.append(float(fit[best]))
    trace.best_genome.append(pop[best].copy())


def winner_graph(candidate: Candidate, a: int, n: int, config: DEConfig = DEConfig()) -> TannerGraph:
    """The exact graph the optimizer scored for this genome."""
    return sample_graph(candidate.code_candidate(), a, n, genome_seed(candidate.genome, config.seed))
