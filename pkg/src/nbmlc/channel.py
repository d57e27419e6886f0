"""Discrete memoryless channel P(Y|X) over the 2^q bins of a frame.

Two sources of a transition law are supported: a parametric surrogate (a
truncated discretized Gaussian timing-jitter kernel mixed with a uniform
background) and an empirical matrix read from CSV. The surrogate defaults
(60 ps jitter, 5 % background) are calibration knobs, not measured values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .galois import MAX_BITS

ROW_TOL = 1e-9
LOAD_TOL = 1e-6


class ChannelError(ValueError):
    """Invalid channel parameters or matrix."""


class ChannelFormatError(ChannelError):
    """Malformed channel matrix file."""


@dataclass(frozen=True)
class SurrogateParams:
    q: int
    binwidth_ps: float = 300.0
    jitter_ps: float = 60.0
    uniform_weight: float = 0.05

    def __post_init__(self):
        if not 1 <= self.q <= MAX_BITS:
            raise ChannelError(f"q must be in [1, {MAX_BITS}]")
        if not self.binwidth_ps > 0:
            raise ChannelError("binwidth_ps must be positive")
        if not self.jitter_ps >= 0:
            raise ChannelError("jitter_ps must be non-negative")
        if not 0.0 <= self.uniform_weight <= 1.0:
            raise ChannelError("uniform_weight must lie in [0, 1]")

    @property
    def sigma_bins(self) -> float:
        return self.jitter_ps / self.binwidth_ps


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """Row-stochastic transition matrix ``transition[x, y] = P(Y=y | X=x)``."""

    q: int
    transition: np.ndarray
    input_prior: np.ndarray = field(default=None)

    def __post_init__(self):
        size = 1 << self.q
        t = np.array(self.transition, dtype=np.float64)
        if t.shape != (size, size):
            raise ChannelError(f"transition must be {size}x{size}, got {t.shape}")
        if np.any(t < 0) or not np.all(np.abs(t.sum(axis=1) - 1.0) <= ROW_TOL):
            raise ChannelError("transition rows must be non-negative and sum to 1")
        if self.input_prior is None:
            p = np.full(size, 1.0 / size)
        else:
            p = np.array(self.input_prior, dtype=np.float64)
            if p.shape != (size,) or np.any(p < 0) or abs(p.sum() - 1.0) > ROW_TOL:
                raise ChannelError("input_prior must be a probability vector of length 2^q")
        t.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "input_prior", p)

    @property
    def size(self) -> int:
        return 1 << self.q

    @property
    def joint(self) -> np.ndarray:
        """P(X=x, Y=y) as a ``size x size`` array."""
        return self.input_prior[:, None] * self.transition

    def __eq__(self, other):
        if not isinstance(other, ChannelModel):
            return NotImplemented
        return (self.q == other.q
                and np.array_equal(self.transition, other.transition)
                and np.array_equal(self.input_prior, other.input_prior))

    def allclose(self, other: "ChannelModel", atol: float = 1e-12) -> bool:
        return (self.q == other.q
                and np.allclose(self.transition, other.transition, rtol=0, atol=atol)
                and np.allclose(self.input_prior, other.input_prior, rtol=0, atol=atol))


def noiseless(q: int) -> ChannelModel:
    return ChannelModel(q, np.eye(1 << q))


def build_surrogate(params: SurrogateParams) -> ChannelModel:
    """Mixture of a frame-truncated Gaussian jitter kernel and a uniform floor."""
    size = 1 << params.q
    offsets = np.arange(size)[None, :] - np.arange(size)[:, None]   # y - x
    sigma = params.sigma_bins
    if sigma == 0:
        local = (offsets == 0).astype(np.float64)
    else:
        with np.errstate(over="ignore"):
            local = ndtr((offsets + 0.5) / sigma) - ndtr((offsets - 0.5) / sigma)
        # far tails underflow to 0; the diagonal always keeps mass
        local /= local.sum(axis=1, keepdims=True)
    eps = params.uniform_weight
    transition = (1.0 - eps) * local + eps / size
    transition /= transition.sum(axis=1, keepdims=True)
    return ChannelModel(params.q, transition)


def load_empirical(path) -> ChannelModel:
    """Read a ``# qkd-channel q=<q>`` CSV matrix; near-stochastic rows are renormalized."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ChannelFormatError(f"cannot read {path}: {exc}") from exc
    if not lines or not lines[0].startswith("# qkd-channel"):
        raise ChannelFormatError("missing '# qkd-channel q=<q>' header")
    try:
        q = int(lines[0].split("q=")[1].split()[0])
    except (IndexError, ValueError) as exc:
        raise ChannelFormatError(f"bad header: {lines[0]!r}") from exc
    if not 1 <= q <= MAX_BITS:
        raise ChannelFormatError(f"q={q} outside [1, {MAX_BITS}]")
    rows = [ln for ln in lines[1:] if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        matrix = np.array([[float(v) for v in ln.split(",")] for ln in rows])
    except ValueError as exc:
        raise ChannelFormatError(f"non-numeric entry: {exc}") from exc
    size = 1 << q
    if matrix.shape != (size, size):
        raise ChannelFormatError(f"expected {size}x{size} matrix for q={q}, got {matrix.shape}")
    if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
        raise ChannelFormatError("negative or non-finite probability")
    sums = matrix.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > LOAD_TOL)
    if bad.size:
        raise ChannelFormatError(f"row {bad[0]} sums to {sums[bad[0]]!r}, not 1")
    return ChannelModel(q, matrix / sums[:, None])


def export(model: ChannelModel, path) -> None:
    """Write the transition matrix in the format read by ``load_empirical``."""
    with open(path, "w") as fh:
        fh.write(f"# qkd-channel q={model.q}\n")
        for row in model.transition:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def sample_pairs(model: ChannelModel, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` i.i.d. (X, Y) symbol pairs. ``seed`` may be an int or a Generator."""
    if n < 1:
        raise ChannelError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.choice(model.size, size=n, p=model.input_prior)
    cdf = np.cumsum(model.transition, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(n)
    y = np.empty(n, dtype=np.int64)
    # searchsorted per distinct input row keeps memory O(n)
    for xv in np.unique(x):
        sel = x == xv
        y[sel] = np.searchsorted(cdf[xv], u[sel], side="right")
    np.minimum(y, model.size - 1, out=y)
    return x.astype(np.int64), y


def sample_frames(model: ChannelModel, n: int, frames: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """(frames, n) arrays of X and Y; frame k depends only on the seed and k.

    ``seed`` is an int, a sequence of ints or a SeedSequence. Since each frame
    gets its own spawned stream, the first k frames of a larger draw match a
    smaller draw with the same seed.
    """
    if frames < 1:
        raise ChannelError("frames must be >= 1")
    if isinstance(seed, np.random.SeedSequence):
        # rebuild so repeated calls do not advance the caller's spawn counter
        root = np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    else:
        root = np.random.SeedSequence(seed)
    pairs = [sample_pairs(model, n, np.random.default_rng(s)) for s in root.spawn(frames)]
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def conditional_entropy(model: ChannelModel) -> float:
    """H(X | Y) in bits."""
    joint = model.joint
    py = joint.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(py > 0, joint / py, 0.0)
        terms = np.where(joint > 0, -joint * np.log2(post), 0.0)
    return float(terms.sum())
