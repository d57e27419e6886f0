"""Non-binary multi-level coding: bit-layer split of GF(2^q) symbols and sequential reconciliation.

A symbol's binary representation is cut most-significant-bits first into
groups of ``a`` bits (the last group holds the ``q mod a`` leftover bits and
is dropped when empty). Layers are decoded in order; layer ``i`` uses Bob's
observation together with the hard decisions already made for layers
``1..i-1`` as side information, so earlier decoding errors propagate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelModel
from .codes import TannerGraph
from .decoder import DecoderConfig, decode_batch
from .galois import MAX_BITS


class PlanError(ValueError):
    """Invalid layer decomposition or mismatched layer widths."""


class AccountingError(ValueError):
    """Key-rate inputs violate m_i <= N or 0 <= E_i <= 1."""


@dataclass(frozen=True)
class LayerPlan:
    q: int
    a: int

    def __post_init__(self):
        if not 1 <= self.q <= MAX_BITS:
            raise PlanError(f"q must lie in [1, {MAX_BITS}], got {self.q}")
        if not 1 <= self.a <= self.q:
            raise PlanError(f"layer width a must lie in [1, q={self.q}], got {self.a}")

    @property
    def b(self) -> int:
        return self.q // self.a

    @property
    def rem(self) -> int:
        return self.q - self.a * self.b

    @property
    def alphas(self) -> tuple[int, ...]:
        return (self.a,) * self.b + ((self.rem,) if self.rem else ())

    @property
    def num_layers(self) -> int:
        return len(self.alphas)

    def shift(self, i: int) -> int:
        """Number of bits below layer ``i`` (0-based)."""
        return self.q - sum(self.alphas[: i + 1])


def split(plan: LayerPlan, x) -> list[np.ndarray]:
    """Layer symbols of ``x`` (any shape), one array per layer."""
    x = np.asarray(x, dtype=np.int64)
    if x.size and (x.min() < 0 or x.max() >= (1 << plan.q)):
        raise PlanError(f"symbols must lie in GF(2^{plan.q})")
    return [(x >> plan.shift(i)) & ((1 << al) - 1) for i, al in enumerate(plan.alphas)]


def merge(plan: LayerPlan, layers) -> np.ndarray:
    if len(layers) != plan.num_layers:
        raise PlanError(f"expected {plan.num_layers} layers, got {len(layers)}")
    out = None
    for i, (al, layer) in enumerate(zip(plan.alphas, layers)):
        layer = np.asarray(layer, dtype=np.int64)
        if layer.size and (layer.min() < 0 or layer.max() >= (1 << al)):
            raise PlanError(f"layer {i + 1} holds symbols wider than {al} bits")
        part = layer << plan.shift(i)
        out = part if out is None else out | part
    return out


def layer_priors(model: ChannelModel, plan: LayerPlan, layer: int, y, decoded_prev) -> np.ndarray:
    """P(X_i = v | Y = y, X_1..X_{i-1} = decoded_prev) for every position.

    ``layer`` is 0-based. ``y`` has any shape S; ``decoded_prev`` is a list of
    ``layer`` arrays of shape S. Returns shape S + (2^alpha_i,). Positions
    whose conditioning event has zero probability get the uniform vector.
    """
    if model.q != plan.q:
        raise PlanError(f"channel q={model.q} does not match plan q={plan.q}")
    if not 0 <= layer < plan.num_layers:
        raise PlanError(f"layer index {layer} out of range")
    if len(decoded_prev) != layer:
        raise PlanError(f"layer {layer + 1} needs {layer} decoded layers, got {len(decoded_prev)}")
    y = np.asarray(y, dtype=np.int64)
    alpha = plan.alphas[layer]
    low = plan.shift(layer)
    prefix = _prefix_value(plan, decoded_prev) if layer else np.zeros(y.shape, dtype=np.int64)
    # column y of the joint law, restricted to inputs sharing the decoded prefix
    joint_t = model.joint.T
    base = (prefix << (alpha + low))[..., None] + np.arange(1 << (alpha + low))
    mass = joint_t[y[..., None], base].reshape(y.shape + (1 << alpha, 1 << low)).sum(axis=-1)
    total = mass.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 0, mass / total, 1.0 / (1 << alpha))
    return out


def _prefix_value(plan: LayerPlan, decoded_prev) -> np.ndarray:
    value = None
    for al, layer in zip(plan.alphas, decoded_prev):
        layer = np.asarray(layer, dtype=np.int64)
        value = layer if value is None else (value << al) | layer
    return value


def layer_prior(model: ChannelModel, plan: LayerPlan, layer_i: int, y: int, decoded_prev) -> np.ndarray:
    """Single-symbol form of ``layer_priors`` with a 1-based layer index."""
    prev = [np.asarray(v) for v in decoded_prev]
    return layer_priors(model, plan, layer_i - 1, np.asarray(y), prev)


@dataclass
class LayerReport:
    layer_index: int                 # 1-based
    alpha_bits: int
    syndrome_length: int             # m_i
    success: np.ndarray              # per frame, estimate == truth
    latencies: np.ndarray            # per-frame wall-clock decode seconds
    syndrome_satisfied: np.ndarray = field(default=None)
    iterations: np.ndarray = field(default=None)

    @property
    def decode_latency(self) -> float:
        """Mean decode seconds per frame."""
        return float(self.latencies.mean()) if self.latencies.size else 0.0

    @property
    def frames(self) -> int:
        return int(self.success.size)

    @property
    def fer_estimate(self) -> float:
        return float(1.0 - self.success.mean()) if self.success.size else 0.0


def reconcile(model: ChannelModel, plan: LayerPlan, codes, x_alice, y_bob,
              decoder_config: DecoderConfig = DecoderConfig(), force_fail=()):
    """Sequentially reconcile every layer of a batch of frames.

    ``x_alice``/``y_bob`` are (F, N) or (N,) symbol arrays over GF(2^q).
    ``codes`` lists one TannerGraph per layer. Layers listed (1-based) in
    ``force_fail`` have their decoded output corrupted before it is passed on,
    a hook for exercising error propagation. Returns the merged estimate and
    one LayerReport per layer.
    """
    x_alice = np.asarray(x_alice, dtype=np.int64)
    y_bob = np.asarray(y_bob, dtype=np.int64)
    single = x_alice.ndim == 1
    if single:
        x_alice, y_bob = x_alice[None], y_bob[None]
    if x_alice.shape != y_bob.shape:
        raise PlanError("Alice and Bob sequences differ in shape")
    _check_codes(plan, codes, x_alice.shape[1])
    truth = split(plan, x_alice)
    decoded: list[np.ndarray] = []
    reports = []
    for i, graph in enumerate(codes):
        syn = graph.syndrome(truth[i])
        priors = layer_priors(model, plan, i, y_bob, decoded)
        res = decode_batch(graph, syn, priors, decoder_config)
        est = res.estimates
        if (i + 1) in force_fail:
            est = est ^ 1
        decoded.append(est)
        success = np.all(est == truth[i], axis=1)
        reports.append(LayerReport(i + 1, plan.alphas[i], graph.m, success,
                                   res.elapsed_seconds,
                                   res.syndrome_satisfied, res.iterations_used))
    out = merge(plan, decoded)
    return (out[0] if single else out), reports


def _check_codes(plan: LayerPlan, codes, n: int):
    if len(codes) != plan.num_layers:
        raise PlanError(f"plan has {plan.num_layers} layers but {len(codes)} codes were given")
    for i, (al, g) in enumerate(zip(plan.alphas, codes)):
        if not isinstance(g, TannerGraph):
            raise PlanError(f"code for layer {i + 1} is not a TannerGraph")
        if g.a != al:
            raise PlanError(f"layer {i + 1} needs a GF(2^{al}) code, got GF(2^{g.a})")
        if g.n != n:
            raise PlanError(f"layer {i + 1} code length {g.n} != block length {n}")


def key_rate(reports, n: int) -> float:
    """Secret bits per photon: sum_i alpha_i (1 - E_i) (N - m_i) / N."""
    total = 0.0
    for r in reports:
        alpha, m, fer = _report_terms(r)
        if not 0 <= m <= n:
            raise AccountingError(f"syndrome length {m} outside [0, N={n}]")
        if not 0.0 <= fer <= 1.0:
            raise AccountingError(f"FER {fer} outside [0, 1]")
        total += alpha * (1.0 - fer) * (n - m) / n
    return total


def _report_terms(r):
    if isinstance(r, LayerReport):
        return r.alpha_bits, r.syndrome_length, r.fer_estimate
    alpha, m, fer = r
    return alpha, m, fer
