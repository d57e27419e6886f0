"""FFT-based q-ary sum-product decoder for Slepian-Wolf (syndrome) decoding.

Messages live in the probability domain. Over GF(2^a) the additive group is
(Z_2)^a, so the check-node convolution is done with the Walsh-Hadamard
transform: every incoming VN->CN message is permuted by its edge weight,
transformed, multiplied with the others, transformed back, shifted by the
syndrome symbol and un-permuted. The schedule is flooding (all checks, then
all variables). Each frame is decoded on its own by a compiled kernel, so
batching never changes a result.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .codes import TannerGraph
from .galois import field


class DecoderError(ValueError):
    """Inputs inconsistent with the graph."""


@dataclass(frozen=True)
class DecoderConfig:
    max_iterations: int = 50
    eps_min: float = 1e-12
    early_exit_on_syndrome: bool = True

    def __post_init__(self):
        if self.max_iterations < 0:
            raise DecoderError("max_iterations must be >= 0")
        if not 0 < self.eps_min < 1:
            raise DecoderError("eps_min must lie in (0, 1)")


@dataclass
class DecodeOutcome:
    estimate: np.ndarray
    syndrome_satisfied: bool
    iterations_used: int
    elapsed_seconds: float
    beliefs: np.ndarray | None = None
    numerical_failure: bool = False


@dataclass
class BatchOutcome:
    estimates: np.ndarray           # (F, N)
    syndrome_satisfied: np.ndarray  # (F,)
    iterations_used: np.ndarray     # (F,)
    numerical_failure: np.ndarray   # (F,)
    elapsed_seconds: np.ndarray     # (F,) wall time per frame
    beliefs: np.ndarray | None = None

    def __len__(self):
        return self.estimates.shape[0]


def wht(v) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along the last axis."""
    x = np.array(v, dtype=np.float64)
    size = x.shape[-1]
    if size < 1 or size & (size - 1):
        raise DecoderError(f"WHT length must be a power of two, got {size}")
    lead = x.shape[:-1]
    h = 1
    while h < size:
        x = x.reshape(lead + (size // (2 * h), 2, h))
        lo, hi = x[..., 0, :], x[..., 1, :]
        x = np.stack((lo + hi, lo - hi), axis=-2)
        h *= 2
    return x.reshape(lead + (size,))


@numba.njit(cache=True)
def _wht_inplace(x):
    size = x.shape[0]
    h = 1
    while h < size:
        for i in range(0, size, 2 * h):
            for j in range(i, i + h):
                u = x[j]
                v = x[j + h]
                x[j] = u + v
                x[j + h] = u - v
        h *= 2


@numba.njit(cache=True)
def _normalize_clamp(x, eps):
    q = x.shape[0]
    tot = 0.0
    for k in range(q):
        if not x[k] > 0.0:  # also catches NaN
            x[k] = 0.0
        tot += x[k]
    if not tot > 0.0 or tot == np.inf:
        for k in range(q):
            x[k] = 1.0 / q
        return
    tot2 = 0.0
    for k in range(q):
        x[k] = x[k] / tot
        if x[k] < eps:
            x[k] = eps
        tot2 += x[k]
    for k in range(q):
        x[k] = x[k] / tot2


@numba.njit(cache=True)
def _syndrome_ok(est, synd, cn_ptr, cn_edges, edge_vn, mulw):
    m = synd.shape[0]
    for j in range(m):
        acc = 0
        for p in range(cn_ptr[j], cn_ptr[j + 1]):
            e = cn_edges[p]
            acc ^= mulw[e, est[edge_vn[e]]]
        if acc != synd[j]:
            return False
    return True


@numba.njit(cache=True, nogil=True)
def _decode_frame(prior, synd, vn_ptr, cn_ptr, cn_edges, edge_vn, perm, mulw,
                  max_iter, eps, early_exit, est, post):
    n, q = prior.shape
    m = synd.shape[0]
    n_edges = edge_vn.shape[0]
    v2c = np.empty((n_edges, q))
    c2v = np.empty((n_edges, q))
    dmax = 1
    for j in range(m):
        d = cn_ptr[j + 1] - cn_ptr[j]
        if d > dmax:
            dmax = d
    spec = np.empty((dmax, q))
    fwd = np.empty((dmax + 1, q))
    bwd = np.empty((dmax + 1, q))
    tmp = np.empty(q)

    for v in range(n):
        for k in range(q):
            post[v, k] = prior[v, k]
        _normalize_clamp(post[v], eps)
        best = 0
        for k in range(1, q):
            if post[v, k] > post[v, best]:
                best = k
        est[v] = best
        for e in range(vn_ptr[v], vn_ptr[v + 1]):
            for k in range(q):
                v2c[e, k] = post[v, k]
    base = np.empty((n, q))
    for v in range(n):
        for k in range(q):
            base[v, k] = post[v, k]

    satisfied = _syndrome_ok(est, synd, cn_ptr, cn_edges, edge_vn, mulw)
    if satisfied and early_exit:
        return 0, True, False

    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        # check nodes
        for j in range(m):
            p0 = cn_ptr[j]
            d = cn_ptr[j + 1] - p0
            if d == 0:
                continue
            for k in range(d):
                e = cn_edges[p0 + k]
                for y in range(q):
                    spec[k, y] = v2c[e, perm[e, y]]
                _wht_inplace(spec[k])
            for y in range(q):
                fwd[0, y] = 1.0
                bwd[d, y] = 1.0
            for k in range(d):
                for y in range(q):
                    fwd[k + 1, y] = fwd[k, y] * spec[k, y]
            for k in range(d - 1, -1, -1):
                for y in range(q):
                    bwd[k, y] = bwd[k + 1, y] * spec[k, y]
            s = synd[j]
            for k in range(d):
                e = cn_edges[p0 + k]
                for y in range(q):
                    tmp[y] = fwd[k, y] * bwd[k + 1, y]
                _wht_inplace(tmp)
                for x in range(q):
                    c2v[e, x] = tmp[s ^ mulw[e, x]] / q
                _normalize_clamp(c2v[e], eps)
        # variable nodes
        failed = False
        for v in range(n):
            e0 = vn_ptr[v]
            e1 = vn_ptr[v + 1]
            for k in range(q):
                post[v, k] = base[v, k]
            for e in range(e0, e1):
                mx = 0.0
                for k in range(q):
                    post[v, k] *= c2v[e, k]
                    if post[v, k] > mx:
                        mx = post[v, k]
                if not mx > 0.0 or mx == np.inf:
                    failed = True
                    break
                for k in range(q):
                    post[v, k] /= mx
            if failed:
                break
            for e in range(e0, e1):
                for k in range(q):
                    v2c[e, k] = post[v, k] / c2v[e, k]
                _normalize_clamp(v2c[e], eps)
            best = 0
            for k in range(1, q):
                if post[v, k] > post[v, best]:
                    best = k
            est[v] = best
        if failed:
            return iterations, False, True
        if early_exit or it == max_iter:
            satisfied = _syndrome_ok(est, synd, cn_ptr, cn_edges, edge_vn, mulw)
            if satisfied and early_exit:
                return iterations, True, False
    if max_iter == 0:
        satisfied = _syndrome_ok(est, synd, cn_ptr, cn_edges, edge_vn, mulw)
    return iterations, satisfied, False


def weight_permutation(a: int, w) -> np.ndarray:
    """Gather index realizing multiplication by ``w``: ``v[idx]`` moves the entry at x to w*x.

    ``w`` may be an array of nonzero weights; the result then has one row per weight.
    """
    gf = field(a)
    w = np.asarray(w, dtype=np.int64)
    if np.any(w == 0):
        raise DecoderError("edge weights must be nonzero")
    return gf.mul_table[gf.inv_table[w][..., None], np.arange(gf.size)]


def permute(v, w: int, a: int) -> np.ndarray:
    return np.asarray(v)[..., weight_permutation(a, w)]


class _Plan:
    """Index tables for one graph, built once and cached on it."""

    def __init__(self, graph: TannerGraph):
        gf = field(graph.a)
        elems = np.arange(graph.q)
        w = graph.weights
        self.perm = np.ascontiguousarray(weight_permutation(graph.a, w))
        # c2v[x] = conv[s ^ (w * x)]
        self.mulw = np.ascontiguousarray(gf.mul_table[w[:, None], elems[None, :]])
        self.vn_ptr = np.r_[0, np.cumsum(graph.vn_degrees)].astype(np.int64)
        self.cn_ptr = np.r_[0, np.cumsum(graph.cn_degrees)].astype(np.int64)
        self.cn_edges = np.ascontiguousarray(graph.cn_order, dtype=np.int64)
        self.edge_vn = np.ascontiguousarray(graph.vn, dtype=np.int64)


def _plan(graph: TannerGraph) -> _Plan:
    plan = graph.__dict__.get("_bp_plan")
    if plan is None:
        plan = _Plan(graph)
        graph.__dict__["_bp_plan"] = plan
    return plan


def _check(graph, syndromes, priors):
    if syndromes.shape[-1] != graph.m:
        raise DecoderError(f"syndrome length {syndromes.shape[-1]} != M={graph.m}")
    if priors.shape[-2:] != (graph.n, graph.q):
        raise DecoderError(f"priors must have shape (..., {graph.n}, {graph.q}), got {priors.shape}")
    if syndromes.shape[:-1] != priors.shape[:-2]:
        raise DecoderError("batch dimensions of syndromes and priors differ")
    if syndromes.size and (syndromes.min() < 0 or syndromes.max() >= graph.q):
        raise DecoderError("syndrome symbol outside the field")


def decode_batch(graph: TannerGraph, syndromes, priors, config: DecoderConfig = DecoderConfig(),
                 return_beliefs: bool = False, threads: int = 1) -> BatchOutcome:
    """Decode F frames against one graph.

    ``syndromes`` has shape (F, M) and ``priors`` (F, N, 2^a); each prior row
    is a probability vector over field elements. Per-frame wall time covers
    the decoding kernel only. With ``threads > 1`` frames are spread over a
    thread pool (the kernel releases the GIL); outcomes do not depend on the
    thread count.
    """
    syndromes = np.ascontiguousarray(syndromes, dtype=np.int64)
    priors = np.ascontiguousarray(priors, dtype=np.float64)
    _check(graph, syndromes, priors)
    plan = _plan(graph)
    frames = syndromes.shape[0]
    est = np.zeros((frames, graph.n), dtype=np.int64)
    sat = np.zeros(frames, dtype=bool)
    its = np.zeros(frames, dtype=np.int64)
    bad = np.zeros(frames, dtype=bool)
    elapsed = np.zeros(frames)
    beliefs = np.zeros(priors.shape) if return_beliefs else None

    def work(indices):
        post = np.empty((graph.n, graph.q))
        for f in indices:
            t0 = time.perf_counter()
            its[f], sat[f], bad[f] = _decode_frame(
                priors[f], syndromes[f], plan.vn_ptr, plan.cn_ptr, plan.cn_edges, plan.edge_vn,
                plan.perm, plan.mulw, config.max_iterations, config.eps_min,
                config.early_exit_on_syndrome, est[f], post)
            elapsed[f] = time.perf_counter() - t0
            if beliefs is not None:
                beliefs[f] = post / post.sum(axis=1, keepdims=True)

    if threads <= 1 or frames < 2:
        work(range(frames))
    else:
        chunks = np.array_split(np.arange(frames), min(threads, frames))
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(work, chunks))
    return BatchOutcome(est, sat, its, bad, elapsed, beliefs)


def decode(graph: TannerGraph, syndrome, priors, config: DecoderConfig = DecoderConfig()) -> DecodeOutcome:
    """Decode a single frame; ``priors`` has shape (N, 2^a)."""
    syndrome = np.asarray(syndrome, dtype=np.int64)
    priors = np.asarray(priors, dtype=np.float64)
    if syndrome.ndim != 1 or priors.ndim != 2:
        raise DecoderError("decode() takes one frame; use decode_batch for several")
    res = decode_batch(graph, syndrome[None], priors[None], config, return_beliefs=True)
    return DecodeOutcome(res.estimates[0], bool(res.syndrome_satisfied[0]), int(res.iterations_used[0]),
                         float(res.elapsed_seconds[0]), res.beliefs[0], bool(res.numerical_failure[0]))


def decode_hard_success(outcome, truth) -> bool:
    """True iff the estimate equals the true sequence symbol for symbol."""
    est = outcome.estimate if hasattr(outcome, "estimate") else outcome
    return bool(np.array_equal(np.asarray(est), np.asarray(truth)))
