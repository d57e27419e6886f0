"""Monte-Carlo campaign engine: code selection, key-rate estimation and sweeps.

Random streams are keyed by the master seed and a stream tag, so that
evaluation frames, rate-selection frames, graph draws and optimizer runs never
share randomness. Evaluation frames depend only on (seed, q, N, channel), so
every configuration compared within one campaign sees the same frames.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..channel import ChannelModel, sample_frames
from ..codes import CodeCandidate, CodeError, TannerGraph, load_code, num_checks, sample_graph
from ..decoder import decode_batch
from ..jrdo import Candidate, DEConfig, LayerContext, genome_seed, optimize
from ..mlc import LayerPlan, layer_priors, merge, split
from .config import ChannelSpec, CodeSpec, ConfigError, RunConfig

STREAM_EVAL = 0
STREAM_SELECT = 1
STREAM_GRAPH = 2
STREAM_DE = 3

START_BACKOFF = 0.12     # rate search starts this far below the genie-aided layer capacity


class NumericalFailure(RuntimeError):
    """The decoder reported NaN or underflow in at least one frame."""


def stream(seed: int, tag: int, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, tag, *extra])


def graph_seed(seed: int, layer: int, m: int, spec: CodeSpec) -> int:
    tag = ("regular", "mlc", "distribution").index(spec.kind)
    words = stream(seed, STREAM_GRAPH, layer, m, tag).generate_state(2, dtype=np.uint32)
    return int(words[0]) << 32 | int(words[1])


# ---------------------------------------------------------------- records

@dataclass
class RatePoint:
    rate: float
    m: int
    frames: int = 0
    failures: int = 0
    status: str = "done"      # done | aborted | pruned | infeasible
    term: float = float("nan")

    @property
    def fer(self) -> float:
        return self.failures / self.frames if self.frames else float("nan")


@dataclass
class RateSweep:
    layer_index: int
    alpha: int
    points: list[RatePoint]
    best: RatePoint | None

    def curve(self) -> list[RatePoint]:
        return sorted(self.points, key=lambda p: p.m, reverse=True)


@dataclass
class LayerChoice:
    layer_index: int
    alpha: int
    spec: str
    graph: TannerGraph
    sweep: RateSweep | None = None

    @property
    def m(self) -> int:
        return self.graph.m

    @property
    def rate(self) -> float:
        return self.graph.rate


@dataclass
class PointRecord:
    value: object
    key_rate: float
    key_rate_se: float
    fer: list[float]
    m: list[int]
    alphas: list[int]
    latency_s: float
    layer_latency_s: list[float]
    frames: int
    seed: int
    numerical_failures: int = 0
    choices: list[LayerChoice] = field(default_factory=list)

    @property
    def num_layers(self) -> int:
        return len(self.alphas)


@dataclass
class Campaign:
    name: str
    swept: str
    records: list[PointRecord]
    config: RunConfig
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------- frames

def layer_capacity(model: ChannelModel, plan: LayerPlan, layer: int) -> float:
    """1 - H(X_i | Y, X_<i) / alpha_i with a genie-aided prefix (0-based layer)."""
    def prefix_entropy(bits):
        if bits == 0:
            return 0.0
        return _cond_entropy(model.joint.reshape(1 << bits, -1, model.size).sum(axis=1))

    lo = sum(plan.alphas[:layer])
    h = prefix_entropy(lo + plan.alphas[layer]) - prefix_entropy(lo)
    return 1.0 - h / plan.alphas[layer]


def _cond_entropy(joint: np.ndarray) -> float:
    py = joint.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(py > 0, joint / py, 1.0)
        terms = np.where(joint > 0, -joint * np.log2(post), 0.0)
    return float(terms.sum())


class FrameSet:
    """Sampled (X, Y) frames plus hard decisions for the layers decoded so far."""

    def __init__(self, model: ChannelModel, plan: LayerPlan, x: np.ndarray, y: np.ndarray, chunk: int, threads: int):
        self.model, self.plan = model, plan
        self.x, self.y = x, y
        self.truth = split(plan, x)
        self.decoded: list[np.ndarray] = []
        self.chunk = chunk
        self.threads = threads

    @property
    def frames(self) -> int:
        return self.x.shape[0]

    def slices(self, count: int | None = None):
        count = self.frames if count is None else count
        for lo in range(0, count, self.chunk):
            yield slice(lo, min(lo + self.chunk, count))

    def priors(self, layer: int, sl: slice) -> np.ndarray:
        return layer_priors(self.model, self.plan, layer, self.y[sl], [d[sl] for d in self.decoded[:layer]])

    def decode_layer(self, layer: int, graph: TannerGraph, decoder):
        """Decode layer ``layer`` on every frame and append the decisions."""
        est = np.empty_like(self.truth[layer])
        lat = np.empty(self.frames)
        bad = 0
        for sl in self.slices():
            res = decode_batch(graph, graph.syndrome(self.truth[layer][sl]), self.priors(layer, sl), decoder,
                               threads=self.threads)
            est[sl] = res.estimates
            lat[sl] = res.elapsed_seconds
            bad += int(res.numerical_failure.sum())
        self.decoded.append(est)
        return est, lat, bad


def eval_frames(config: RunConfig, model: ChannelModel, plan: LayerPlan) -> FrameSet:
    x, y = sample_frames(model, config.n, config.mc_frames, stream(config.seed, STREAM_EVAL))
    return FrameSet(model, plan, x, y, config.chunk_frames, config.threads)


def selection_frames(config: RunConfig, model: ChannelModel, plan: LayerPlan) -> FrameSet:
    x, y = sample_frames(model, config.n, config.frames_for_selection, stream(config.seed, STREAM_SELECT))
    return FrameSet(model, plan, x, y, min(config.chunk_frames, 50), config.threads)


# ---------------------------------------------------------------- rate search

def exhaustive_rate_baseline(config: RunConfig, frames: FrameSet, layer: int, spec: CodeSpec,
                             grid: list[float] | None = None, full_curve: bool | None = None) -> RateSweep:
    """Pick the rate maximizing alpha (1 - E) (N - m) / N for 0-based ``layer``.

    ``frames`` must already hold decisions for layers ``< layer``. With
    pruning on, a rate is skipped once ``alpha (N - m) / N`` cannot beat the
    best term, a point stops early once its failure count rules it out, and
    the upward scan stops when even the top rate could not win at the FER
    lower bound just observed (valid when FER is non-decreasing in rate) or
    after ``patience`` consecutive points above the best fail to beat it
    (valid when the term is unimodal in rate).
    """
    plan, n = frames.plan, config.n
    alpha = plan.alphas[layer]
    prune = config.rate_grid.prune if full_curve is None else not full_curve
    rates = config.rate_grid.rates() if grid is None else sorted(grid)
    by_m: dict[int, RatePoint] = {}
    state = {"best": None}

    def run(rate: float) -> RatePoint | None:
        m = num_checks(rate, n)
        if m in by_m:
            return by_m[m]
        pt = RatePoint(rate, m)
        by_m[m] = pt
        best = state["best"]
        ceiling = alpha * (n - m) / n
        if prune and best is not None and ceiling <= best.term:
            pt.status = "pruned"
            return pt
        try:
            graph = sample_graph(CodeCandidate(spec.vn_distribution, rate), alpha, n,
                                 graph_seed(config.seed, layer + 1, m, spec), spec.cn_mode)
        except CodeError:
            pt.status = "infeasible"
            return pt
        for sl in frames.slices():
            res = decode_batch(graph, graph.syndrome(frames.truth[layer][sl]), frames.priors(layer, sl),
                               config.decoder, threads=frames.threads)
            pt.failures += int(np.sum(np.any(res.estimates != frames.truth[layer][sl], axis=1)))
            pt.frames = sl.stop
            if prune and best is not None and ceiling * (1 - pt.failures / frames.frames) <= best.term:
                pt.status = "aborted"
                return pt
        pt.term = ceiling * (1 - pt.fer)
        if best is None or pt.term > best.term:
            state["best"] = pt
        return pt

    def lower_bound_fer(pt: RatePoint) -> float:
        return pt.failures / frames.frames if pt.status in ("done", "aborted") else 0.0

    # start where FER is most likely near zero so the first incumbent is strong
    # and points above it abort after a few failures; walk down, then up
    cap = layer_capacity(frames.model, plan, layer)
    start = max([k for k, r in enumerate(rates) if r <= cap - START_BACKOFF], default=0)
    top = alpha * (n - num_checks(rates[-1], n)) / n
    for r in reversed(rates[: start + 1]):
        pt = run(r)
        if prune and pt.status == "pruned":
            break
    stale = 0
    for r in rates[start + 1:]:
        pt = run(r)
        best = state["best"]
        if not prune or best is None or pt.status not in ("done", "aborted"):
            continue
        stale = 0 if pt is best else stale + 1
        if top * (1 - lower_bound_fer(pt)) <= best.term or stale >= config.rate_grid.patience:
            break
    refine = config.rate_grid.refine
    if refine and state["best"] is not None:
        centre = state["best"].rate
        step = config.rate_grid.step / (refine + 1)
        for k in range(1, refine + 1):
            for r in (centre - k * step, centre + k * step):
                if 0 < r < 1:
                    run(round(r, 10))
    best = state["best"]
    return RateSweep(layer + 1, alpha, list(by_m.values()), best)


# ---------------------------------------------------------------- code resolution

def load_jrdo_result(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        from ..codes import CodeFormatError
        raise CodeFormatError(f"cannot read optimizer result {path}: {exc}") from exc


def fixed_code(config: RunConfig, layer: int, alpha: int, spec: CodeSpec) -> TannerGraph:
    """Graph for a spec that needs no Monte-Carlo selection (0-based layer)."""
    n = config.n
    if spec.kind == "file":
        g = load_code(spec.path)
    elif spec.kind == "jrdo":
        result = load_jrdo_result(spec.path)
        want = spec.layer if spec.layer is not None else layer + 1
        entry = next((e for e in result.get("layers", []) if e.get("layer") == want), None)
        if entry is None:
            raise ConfigError(f"optimizer result {spec.path} has no layer {want}")
        cand = Candidate(np.array(entry["genome"], dtype=np.float64), degrees=tuple(entry["degrees"]))
        g = sample_graph(cand.code_candidate(), int(entry["alpha"]), int(result["n"]), int(entry["graph_seed"]))
    else:
        m = num_checks(spec.rate, n)
        try:
            g = sample_graph(CodeCandidate(spec.vn_distribution, spec.rate), alpha, n,
                             graph_seed(config.seed, layer + 1, m, spec), spec.cn_mode)
        except CodeError as exc:
            raise ConfigError(f"layer {layer + 1}: {exc}") from exc
    if g.a != alpha or g.n != n:
        raise ConfigError(f"layer {layer + 1} needs a GF(2^{alpha}) code of length {n}, "
                          f"got GF(2^{g.a}) length {g.n}")
    return g


def select_codes(config: RunConfig, model: ChannelModel, plan: LayerPlan, log=None) -> list[LayerChoice]:
    """Resolve one code per layer, running the rate search where requested."""
    choices: list[LayerChoice] = []
    frames = None
    for i, alpha in enumerate(plan.alphas):
        spec = config.layer_code(i)
        if spec.kind in ("regular", "mlc", "distribution") and spec.exhaustive:
            if frames is None:
                frames = selection_frames(config, model, plan)
                for k, c in enumerate(choices):
                    frames.decode_layer(k, c.graph, config.decoder)
            sweep = exhaustive_rate_baseline(config, frames, i, spec)
            if sweep.best is None:
                raise ConfigError(f"layer {i + 1}: no feasible rate on the grid")
            best_spec = replace(spec, rate=sweep.best.rate)
            graph = fixed_code(config, i, alpha, best_spec)
            choices.append(LayerChoice(i + 1, alpha, spec.name, graph, sweep))
            if log:
                log(f"layer {i + 1}: rate {graph.rate:.4f} (m={graph.m}), selection FER {sweep.best.fer:.4f}")
        else:
            choices.append(LayerChoice(i + 1, alpha, spec.name, fixed_code(config, i, alpha, spec)))
        if frames is not None and i + 1 < plan.num_layers:
            frames.decode_layer(i, choices[-1].graph, config.decoder)
    return choices


# ---------------------------------------------------------------- simulation

def build_channel(config: RunConfig) -> ChannelModel:
    return config.channel.build(config.q)


def run_simulation(config: RunConfig, value=None, log=None, model: ChannelModel | None = None,
                   choices: list[LayerChoice] | None = None) -> PointRecord:
    """Key rate, per-layer FER and latency of one configuration."""
    model = build_channel(config) if model is None else model
    plan = LayerPlan(config.q, config.a)
    if choices is None:
        choices = select_codes(config, model, plan, log)
    frames = eval_frames(config, model, plan)
    n = config.n
    per_frame = np.zeros(frames.frames)
    fers, lats, bad = [], [], 0
    for i, c in enumerate(choices):
        est, lat, nb = frames.decode_layer(i, c.graph, config.decoder)
        ok = np.all(est == frames.truth[i], axis=1)
        per_frame += c.alpha * ok * (n - c.m) / n
        fers.append(float(1 - ok.mean()))
        lats.append(float(lat.mean()))
        bad += nb
    se = float(per_frame.std(ddof=1) / math.sqrt(frames.frames)) if frames.frames > 1 else 0.0
    return PointRecord(value=value, key_rate=float(per_frame.mean()), key_rate_se=se, fer=fers,
                       m=[c.m for c in choices], alphas=list(plan.alphas), latency_s=float(sum(lats)),
                       layer_latency_s=lats, frames=frames.frames, seed=config.seed,
                       numerical_failures=bad, choices=choices)


def merged_estimate(frames: FrameSet) -> np.ndarray:
    return merge(frames.plan, frames.decoded)


# ---------------------------------------------------------------- sweeps

def sweep_a(config: RunConfig, a_values, log=None) -> Campaign:
    model = build_channel(config)
    records = []
    for a in a_values:
        if not 1 <= a <= config.q:
            raise ConfigError(f"a={a} outside [1, q={config.q}]")
        if log:
            log(f"a={a}")
        records.append(run_simulation(config.with_(a=a), value=a, log=log, model=model))
    return Campaign("sweep_a", "a", records, config)


def sweep_binwidth(config: RunConfig, binwidths, log=None) -> Campaign:
    if config.channel.kind != "surrogate":
        raise ConfigError("binwidth sweeps need a surrogate channel")
    records = []
    for bw in binwidths:
        if log:
            log(f"binwidth={bw}")
        cfg = replace(config, channel=replace(config.channel, binwidth_ps=float(bw)))
        records.append(run_simulation(cfg, value=float(bw), log=log))
    return Campaign("sweep_binwidth", "binwidth_ps", records, config)


def sweep_rate(config: RunConfig, layer: int = 1, log=None) -> Campaign:
    """Full key-rate-term curve over the rate grid for one layer (1-based).

    Earlier layers use their configured codes; no pruning is applied so the
    whole curve is measured. Each record's key_rate is the layer's term.
    """
    model = build_channel(config)
    plan = LayerPlan(config.q, config.a)
    if not 1 <= layer <= plan.num_layers:
        raise ConfigError(f"layer {layer} outside 1..{plan.num_layers}")
    spec = config.layer_code(layer - 1)
    if spec.kind not in ("regular", "mlc", "distribution"):
        raise ConfigError("rate sweeps need a regular, mlc or distribution code spec")
    earlier = select_codes(replace(config, codes=tuple(config.layer_code(i) for i in range(layer - 1))
                                   + tuple(CodeSpec("regular", 0.5) for _ in range(plan.num_layers - layer + 1))),
                           model, plan, log)[: layer - 1] if layer > 1 else []
    frames = eval_frames(config, model, plan)
    for k, c in enumerate(earlier):
        frames.decode_layer(k, c.graph, config.decoder)
    sweep = exhaustive_rate_baseline(config, frames, layer - 1, spec, full_curve=True)
    records = []
    for pt in sweep.curve():
        if pt.status == "infeasible":
            continue
        records.append(PointRecord(value=round((config.n - pt.m) / config.n, 10), key_rate=pt.term,
                                   key_rate_se=_term_se(pt, sweep.alpha, config.n), fer=[pt.fer], m=[pt.m],
                                   alphas=[sweep.alpha], latency_s=float("nan"), layer_latency_s=[],
                                   frames=pt.frames, seed=config.seed))
    records.sort(key=lambda r: r.value)
    best = sweep.best
    extra = {"layer": layer, "argmax_rate": None if best is None else round((config.n - best.m) / config.n, 10),
             "argmax_fer": None if best is None else best.fer}
    return Campaign("sweep_rate", "rate", records, config, extra)


def _term_se(pt: RatePoint, alpha: int, n: int) -> float:
    if pt.frames < 2:
        return 0.0
    p = pt.fer
    return alpha * (n - pt.m) / n * math.sqrt(p * (1 - p) / pt.frames)


def compare_codes(config: RunConfig, entries, log=None) -> Campaign:
    """One record per entry; each entry is a dict with optional ``a``, ``codes`` and ``label``."""
    if len(entries) < 2:
        raise ConfigError("compare-codes needs at least two code specs")
    from .config import parse_code
    model = build_channel(config)
    records = []
    for k, entry in enumerate(entries):
        codes = entry.get("codes", entry if "kind" in entry else None)
        if codes is None:
            raise ConfigError(f"entry {k + 1} has no codes")
        codes = codes if isinstance(codes, list) else [codes]
        cfg = replace(config, a=int(entry.get("a", config.a)), codes=tuple(parse_code(c) for c in codes))
        RunConfig.__post_init__(cfg)
        label = entry.get("label") or f"{cfg.codes[0].name}@a={cfg.a}"
        if log:
            log(f"code spec {label}")
        records.append(run_simulation(cfg, value=label, log=log, model=model))
    return Campaign("compare_codes", "code", records, config)


# ---------------------------------------------------------------- optimization

def optimize_layers(config: RunConfig, de: DEConfig | None = None, log=None) -> dict:
    """Run the optimizer layer by layer; returns a JSON-ready result document."""
    de = config.de if de is None else de
    model = build_channel(config)
    plan = LayerPlan(config.q, config.a)
    layers, graphs = [], []
    for i, alpha in enumerate(plan.alphas):
        cfg_i = replace(de, seed=int(stream(config.seed, STREAM_DE, i + 1).generate_state(1)[0]))
        ctx = LayerContext(model, plan, i + 1, config.n, tuple(graphs), config.decoder)
        best, trace = optimize(ctx, cfg_i, log=log)
        seed = genome_seed(best.genome, cfg_i.seed)
        graph = sample_graph(best.code_candidate(), alpha, config.n, seed)
        graphs.append(graph)
        layers.append({
            "layer": i + 1, "alpha": alpha, "degrees": list(best.degrees),
            "genome": [float(v) for v in best.genome], "fitness": best.fitness,
            "rate": graph.rate, "m": graph.m, "graph_seed": seed,
            "trace": trace.best_fitness, "evaluations": trace.evaluations,
            "final_samples": trace.final_samples,
        })
        if log:
            log(f"layer {i + 1}: fitness {best.fitness:.4f} rate {graph.rate:.4f} "
                f"L={ {d: round(f, 4) for d, f in best.vn_distribution.items()} }")
    return {"q": config.q, "a": config.a, "n": config.n, "seed": config.seed, "layers": layers}


# ---------------------------------------------------------------- calibration

def calibrate(config: RunConfig, target_fer: float = 0.05, lo: float = 0.0, hi: float = 1.0,
              steps: int = 12, tol: float = 0.005, log=None) -> dict:
    """Bisect the surrogate's uniform weight until the worst layer FER hits the target.

    Codes must have fixed rates. FER is taken to grow with the uniform weight;
    the evaluation frames are re-drawn for each candidate weight from the same
    seed so successive estimates are comparable.
    """
    if config.channel.kind != "surrogate":
        raise ConfigError("calibration tunes a surrogate channel")
    if any(config.layer_code(i).exhaustive and config.layer_code(i).kind in ("regular", "mlc", "distribution")
           for i in range(config.num_layers)):
        raise ConfigError("calibration needs fixed-rate reference codes")
    if not 0 < target_fer < 1:
        raise ConfigError("target FER must lie in (0, 1)")
    history = []

    def measure(eps):
        cfg = replace(config, channel=replace(config.channel, uniform_weight=eps))
        rec = run_simulation(cfg)
        fer = max(rec.fer)
        history.append({"uniform_weight": eps, "fer": fer, "fer_layers": rec.fer, "key_rate": rec.key_rate})
        if log:
            log(f"uniform_weight={eps:.6f} worst-layer FER={fer:.4f}")
        return fer

    best = None
    for _ in range(steps):
        mid = (lo + hi) / 2
        fer = measure(mid)
        if best is None or abs(fer - target_fer) < abs(best[1] - target_fer):
            best = (mid, fer)
        if abs(fer - target_fer) <= tol:
            break
        if fer < target_fer:
            lo = mid
        else:
            hi = mid
    channel = replace(config.channel, uniform_weight=best[0])
    return {"uniform_weight": best[0], "fer": best[1], "target_fer": target_fer,
            "channel": channel.to_dict(), "history": history}
