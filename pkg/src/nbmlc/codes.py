"""Degree distributions, ensemble sampling of non-binary Tanner graphs, syndromes and code files."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .galois import MAX_BITS, field


class CodeError(ValueError):
    """Infeasible code parameters."""


class SamplingError(CodeError):
    """Swap repair could not remove all parallel edges."""


class CodeFormatError(ValueError):
    """Malformed code file."""


def _validate_dist(dist: dict, what: str) -> dict[int, float]:
    out = {int(d): float(f) for d, f in dist.items() if float(f) != 0.0}
    if not out:
        raise CodeError(f"{what} distribution is empty")
    if any(d < 1 for d in out) or any(f < 0 for f in out.values()):
        raise CodeError(f"{what} distribution has invalid degrees or negative fractions")
    if abs(sum(out.values()) - 1.0) > 1e-9:
        raise CodeError(f"{what} fractions sum to {sum(out.values())}, not 1")
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class DegreeDistribution:
    """Node-perspective VN (``vn``) and CN (``cn``) degree fractions."""

    vn: dict
    cn: dict

    def __post_init__(self):
        object.__setattr__(self, "vn", _validate_dist(self.vn, "VN"))
        object.__setattr__(self, "cn", _validate_dist(self.cn, "CN"))

    @property
    def rate(self) -> float:
        """Design rate 1 - L'(1)/P'(1)."""
        return 1.0 - mean_degree(self.vn) / mean_degree(self.cn)


def mean_degree(dist: dict) -> float:
    return sum(d * f for d, f in dist.items())


@dataclass(frozen=True)
class CodeCandidate:
    vn_dist: dict
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "vn_dist", _validate_dist(self.vn_dist, "VN"))
        if not 0.0 < self.rate < 1.0:
            raise CodeError(f"rate must lie in (0, 1), got {self.rate}")


REGULAR_VN3 = {3: 1.0}


def num_checks(rate: float, n: int) -> int:
    """M = round(N (1 - R)), halves rounded up."""
    return int(math.floor(n * (1.0 - rate) + 0.5 + 1e-9))


def realize_vn_counts(vn_dist: dict, n: int) -> dict[int, int]:
    """Integer VN counts per degree by largest remainder (ties go to the lower degree)."""
    dist = _validate_dist(vn_dist, "VN")
    degrees = list(dist)
    exact = [n * dist[d] for d in degrees]
    counts = [int(math.floor(e + 1e-9)) for e in exact]
    rema = [e - c for e, c in zip(exact, counts)]
    short = n - sum(counts)
    order = sorted(range(len(degrees)), key=lambda i: (-round(rema[i], 12), degrees[i]))
    for i in order[:short]:
        counts[i] += 1
    # guarantee presence of every degree carrying at least half a node
    for i, e in enumerate(exact):
        if counts[i] == 0 and e >= 0.5:
            donor = max(range(len(counts)), key=lambda k: (counts[k], -degrees[k]))
            counts[donor] -= 1
            counts[i] += 1
    return {d: c for d, c in zip(degrees, counts) if c > 0}


def _cn_counts(total_edges: int, m: int) -> dict[int, int]:
    if m < 1 or total_edges < m:
        raise CodeError(f"infeasible: {total_edges} edges cannot cover {m} checks")
    dc = total_edges // m
    hi = total_edges - dc * m
    return {d: c for d, c in ((dc, m - hi), (dc + 1, hi)) if c > 0}


def two_element_cn(vn_dist: dict, rate: float, n: int) -> dict[int, float]:
    """Node-perspective CN distribution over two consecutive degrees realizing ``rate``."""
    counts = two_element_cn_counts(vn_dist, rate, n)
    m = sum(counts.values())
    return {d: c / m for d, c in counts.items()}


def two_element_cn_counts(vn_dist: dict, rate: float, n: int) -> dict[int, int]:
    if not 0.0 < rate < 1.0:
        raise CodeError(f"rate must lie in (0, 1), got {rate}")
    vn_counts = realize_vn_counts(vn_dist, n)
    edges = sum(d * c for d, c in vn_counts.items())
    return _cn_counts(edges, num_checks(rate, n))


class TannerGraph:
    """Sparse parity-check matrix over GF(2^a) stored as an edge list.

    Edges are kept sorted by (vn, cn). Instances are treated as immutable.
    """

    def __init__(self, a: int, n: int, m: int, vn, cn, weights):
        if not 1 <= a <= MAX_BITS:
            raise CodeError(f"field bit-width {a} outside [1, {MAX_BITS}]")
        vn = np.asarray(vn, dtype=np.int64)
        cn = np.asarray(cn, dtype=np.int64)
        w = np.asarray(weights, dtype=np.int64)
        if not (vn.shape == cn.shape == w.shape and vn.ndim == 1):
            raise CodeError("edge arrays must be 1-D and equally long")
        if vn.size and (vn.min() < 0 or vn.max() >= n or cn.min() < 0 or cn.max() >= m):
            raise CodeError("edge endpoint out of range")
        if np.any(w < 1) or np.any(w >= (1 << a)):
            raise CodeError("edge weights must be nonzero elements of the field")
        order = np.lexsort((cn, vn))
        vn, cn, w = vn[order], cn[order], w[order]
        if vn.size > 1 and np.any((np.diff(vn) == 0) & (np.diff(cn) == 0)):
            raise CodeError("parallel edges are not allowed")
        for arr in (vn, cn, w):
            arr.flags.writeable = False
        self.a, self.n, self.m = int(a), int(n), int(m)
        self.vn, self.cn, self.weights = vn, cn, w

    @property
    def q(self) -> int:
        return 1 << self.a

    @property
    def num_edges(self) -> int:
        return int(self.vn.size)

    @property
    def rate(self) -> float:
        return (self.n - self.m) / self.n

    @cached_property
    def vn_degrees(self) -> np.ndarray:
        return np.bincount(self.vn, minlength=self.n)

    @cached_property
    def cn_degrees(self) -> np.ndarray:
        return np.bincount(self.cn, minlength=self.m)

    @cached_property
    def cn_order(self) -> np.ndarray:
        """Edge indices sorted by check node (stable)."""
        return np.argsort(self.cn, kind="stable")

    def degree_distribution(self) -> DegreeDistribution:
        def frac(deg):
            d, c = np.unique(deg, return_counts=True)
            return {int(k): v / deg.size for k, v in zip(d, c)}
        return DegreeDistribution(frac(self.vn_degrees), frac(self.cn_degrees))

    def dense(self) -> np.ndarray:
        h = np.zeros((self.m, self.n), dtype=np.int64)
        h[self.cn, self.vn] = self.weights
        return h

    def syndrome(self, x) -> np.ndarray:
        """S = H x over GF(2^a); ``x`` may carry leading batch dimensions."""
        x = np.asarray(x, dtype=np.int64)
        if x.shape[-1] != self.n:
            raise CodeError(f"sequence length {x.shape[-1]} != N={self.n}")
        if x.size and (x.min() < 0 or x.max() >= self.q):
            raise CodeError("symbol outside GF(2^a)")
        prod = field(self.a).mul_table[self.weights, x[..., self.vn]]
        out = np.zeros(x.shape[:-1] + (self.m,), dtype=np.int64)
        if self.num_edges == 0:
            return out
        order = self.cn_order
        cns = self.cn[order]
        starts = np.flatnonzero(np.r_[True, cns[1:] != cns[:-1]])
        out[..., cns[starts]] = np.bitwise_xor.reduceat(prod[..., order], starts, axis=-1)
        return out

    def __eq__(self, other):
        if not isinstance(other, TannerGraph):
            return NotImplemented
        return ((self.a, self.n, self.m) == (other.a, other.n, other.m)
                and np.array_equal(self.vn, other.vn)
                and np.array_equal(self.cn, other.cn)
                and np.array_equal(self.weights, other.weights))

    def __repr__(self):
        return f"TannerGraph(a={self.a}, N={self.n}, M={self.m}, edges={self.num_edges})"


def syndrome(graph: TannerGraph, x) -> np.ndarray:
    return graph.syndrome(x)


def _repair_parallel(vn_sock, cn_sock, rng, max_attempts):
    """Swap CN endpoints of duplicated (vn, cn) pairs with random other edges."""
    counts: dict[tuple[int, int], int] = {}
    for v, c in zip(vn_sock.tolist(), cn_sock.tolist()):
        counts[(v, c)] = counts.get((v, c), 0) + 1
    dup = [e for e in range(vn_sock.size) if counts[(int(vn_sock[e]), int(cn_sock[e]))] > 1]
    attempts = 0
    e_total = vn_sock.size
    while dup:
        if attempts >= max_attempts:
            raise SamplingError(f"{len(dup)} parallel edges left after {attempts} swaps")
        attempts += 1
        e = dup[-1]
        ve, ce = int(vn_sock[e]), int(cn_sock[e])
        if counts[(ve, ce)] < 2:
            dup.pop()
            continue
        f = int(rng.integers(e_total))
        vf, cf = int(vn_sock[f]), int(cn_sock[f])
        if ve == vf or ce == cf or (ve, cf) in counts or (vf, ce) in counts:
            continue
        for key in ((ve, ce), (vf, cf)):
            counts[key] -= 1
            if counts[key] == 0:
                del counts[key]
        counts[(ve, cf)] = 1
        counts[(vf, ce)] = 1
        cn_sock[e], cn_sock[f] = cf, ce
        dup.pop()
    return cn_sock


def sample_graph(candidate: CodeCandidate, a: int, n: int, seed, cn_mode: str = "two_element") -> TannerGraph:
    """Draw one graph from the (L(x), R) ensemble with uniform nonzero edge labels.

    ``cn_mode="two_element"`` uses configuration-model socket matching against
    two consecutive CN degrees. ``cn_mode="unconstrained"`` connects every VN
    to distinct checks chosen uniformly, leaving CN degrees unconstrained.
    """
    rng = np.random.default_rng(seed)
    vn_counts = realize_vn_counts(candidate.vn_dist, n)
    vn_deg = np.repeat(list(vn_counts), list(vn_counts.values()))
    total = int(vn_deg.sum())
    m = num_checks(candidate.rate, n)
    vn_sock = np.repeat(np.arange(n), vn_deg)
    if cn_mode == "two_element":
        cn_counts = _cn_counts(total, m)
        cn_deg = np.repeat(list(cn_counts), list(cn_counts.values()))
        cn_sock = np.repeat(np.arange(m), cn_deg)
        cn_sock = cn_sock[rng.permutation(total)]
        cn_sock = _repair_parallel(vn_sock, cn_sock, rng, 10 * total)
    elif cn_mode == "unconstrained":
        if m < 1 or vn_deg.max() > m:
            raise CodeError(f"infeasible: VN degree {vn_deg.max()} exceeds M={m}")
        cn_sock = np.concatenate([rng.choice(m, size=d, replace=False) for d in vn_deg])
    else:
        raise CodeError(f"unknown cn_mode {cn_mode!r}")
    weights = rng.integers(1, 1 << a, size=total)
    return TannerGraph(a, n, m, vn_sock, cn_sock, weights)


def save_code(graph: TannerGraph, path) -> None:
    """Write the non-binary alist-style text format."""
    vdeg, cdeg = graph.vn_degrees, graph.cn_degrees
    starts = np.r_[0, np.cumsum(vdeg)]
    lines = [f"{graph.n} {graph.m} {graph.a}",
             f"{int(vdeg.max(initial=0))} {int(cdeg.max(initial=0))}"]
    for v in range(graph.n):
        sl = slice(starts[v], starts[v + 1])
        lines.append(" ".join(f"{c + 1}:{w}" for c, w in zip(graph.cn[sl], graph.weights[sl])))
    lines.append(f"# edges={graph.num_edges}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_code(path) -> TannerGraph:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CodeFormatError(f"cannot read {path}: {exc}") from exc

    def ints(line, k, what):
        parts = line.split()
        if len(parts) != k:
            raise CodeFormatError(f"{what}: expected {k} integers, got {line!r}")
        try:
            return [int(p) for p in parts]
        except ValueError as exc:
            raise CodeFormatError(f"{what}: {exc}") from exc

    if len(lines) < 3:
        raise CodeFormatError("file too short")
    n, m, a = ints(lines[0], 3, "header")
    if not 1 <= a <= MAX_BITS or n < 1 or m < 0:
        raise CodeFormatError(f"bad header values N={n} M={m} a={a}")
    max_v, max_c = ints(lines[1], 2, "degree line")
    body = lines[2:2 + n]
    if len(body) != n or len(lines) < n + 3:
        raise CodeFormatError(f"expected {n} VN lines and an edge checksum")
    trailer = lines[2 + n].strip()
    if not trailer.startswith("# edges="):
        raise CodeFormatError("missing '# edges=<E>' checksum line")
    vn, cn, w = [], [], []
    for v, line in enumerate(body):
        for tok in line.split():
            try:
                c, wt = (int(t) for t in tok.split(":"))
            except ValueError as exc:
                raise CodeFormatError(f"VN {v + 1}: bad entry {tok!r}") from exc
            if c == 0:
                raise CodeFormatError(f"VN {v + 1}: zero padding is not allowed")
            if not 1 <= c <= m:
                raise CodeFormatError(f"VN {v + 1}: check index {c} out of range")
            if not 1 <= wt < (1 << a):
                raise CodeFormatError(f"VN {v + 1}: weight {wt} is not a nonzero element of GF(2^{a})")
            vn.append(v)
            cn.append(c - 1)
            w.append(wt)
    if int(trailer.split("=")[1]) != len(vn):
        raise CodeFormatError("edge checksum mismatch")
    try:
        graph = TannerGraph(a, n, m, vn, cn, w)
    except CodeError as exc:
        raise CodeFormatError(str(exc)) from exc
    if graph.vn_degrees.max(initial=0) != max_v or graph.cn_degrees.max(initial=0) != max_c:
        raise CodeFormatError("declared maximum degrees do not match the edge list")
    return graph
