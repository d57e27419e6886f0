"""Run configuration: a JSON document resolved into validated dataclasses.

Example::

    {
      "q": 6, "a": 3, "n": 2000,
      "channel": {"kind": "surrogate", "binwidth_ps": 300, "jitter_ps": 60, "uniform_weight": 0.05},
      "codes": {"kind": "regular", "rate": "exhaustive"},
      "decoder": {"max_iterations": 50},
      "mc_frames": 1000, "seed": 1, "output": "runs/a3"
    }

``codes`` is one spec for every layer or a list with one spec per layer.
Code kinds: ``regular`` (L(x)=x^3, two-element CN), ``mlc`` (L(x)=x^3,
unconstrained CN), ``distribution`` (explicit ``vn`` fractions, two-element
CN), ``file`` (``path`` to a code file) and ``jrdo`` (``path`` to an optimizer
result file, ``layer`` picks its entry). The first three take a ``rate`` that
is either a number or ``"exhaustive"``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..channel import ChannelError, ChannelModel, SurrogateParams, build_surrogate, load_empirical
from ..decoder import DecoderConfig, DecoderError
from ..galois import MAX_BITS
from ..jrdo import DEConfig, DEError

CODE_KINDS = ("regular", "mlc", "distribution", "file", "jrdo")


class ConfigError(ValueError):
    """Inconsistent or malformed run configuration."""


@dataclass(frozen=True)
class ChannelSpec:
    kind: str = "surrogate"
    binwidth_ps: float = 300.0
    jitter_ps: float = 60.0
    uniform_weight: float = 0.05
    path: str | None = None

    def build(self, q: int) -> ChannelModel:
        if self.kind == "empirical":
            model = load_empirical(self.path)
            if model.q != q:
                raise ConfigError(f"channel file is for q={model.q}, run config says q={q}")
            return model
        return build_surrogate(SurrogateParams(q, self.binwidth_ps, self.jitter_ps, self.uniform_weight))

    def to_dict(self) -> dict:
        if self.kind == "empirical":
            return {"kind": "empirical", "path": self.path}
        return {"kind": "surrogate", "binwidth_ps": self.binwidth_ps, "jitter_ps": self.jitter_ps,
                "uniform_weight": self.uniform_weight}


@dataclass(frozen=True)
class CodeSpec:
    kind: str = "regular"
    rate: float | str = "exhaustive"
    vn: tuple[tuple[int, float], ...] = ()
    path: str | None = None
    layer: int | None = None
    label: str | None = None

    @property
    def exhaustive(self) -> bool:
        return self.rate == "exhaustive"

    @property
    def vn_distribution(self) -> dict[int, float]:
        if self.kind in ("regular", "mlc"):
            return {3: 1.0}
        return dict(self.vn)

    @property
    def cn_mode(self) -> str:
        return "unconstrained" if self.kind == "mlc" else "two_element"

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind in ("file", "jrdo"):
            return f"{self.kind}:{Path(self.path).name}"
        return self.kind

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("regular", "mlc", "distribution"):
            out["rate"] = self.rate
        if self.kind == "distribution":
            out["vn"] = {str(d): f for d, f in self.vn}
        if self.path is not None:
            out["path"] = self.path
        if self.layer is not None:
            out["layer"] = self.layer
        if self.label:
            out["label"] = self.label
        return out


@dataclass(frozen=True)
class RateGrid:
    start: float = 0.05
    stop: float = 0.95
    step: float = 0.02
    refine: int = 0           # extra points on each side of the coarse argmax
    prune: bool = True
    patience: int = 2         # non-improving points above the best before the upward scan stops

    def rates(self) -> list[float]:
        count = int(round((self.stop - self.start) / self.step)) + 1
        return [round(self.start + k * self.step, 10) for k in range(count)]


@dataclass(frozen=True)
class RunConfig:
    q: int
    a: int
    n: int = 2000
    channel: ChannelSpec = ChannelSpec()
    codes: tuple[CodeSpec, ...] = (CodeSpec(),)
    decoder: DecoderConfig = DecoderConfig()
    mc_frames: int = 1000
    selection_frames: int | None = None
    seed: int = 0
    output: str = "out"
    rate_grid: RateGrid = RateGrid()
    de: DEConfig = DEConfig()
    chunk_frames: int = 100
    threads: int = 1

    def __post_init__(self):
        if not 1 <= self.q <= MAX_BITS:
            raise ConfigError(f"q must lie in [1, {MAX_BITS}]")
        if not 1 <= self.a <= self.q:
            raise ConfigError(f"a must lie in [1, q={self.q}]")
        if self.n < 2:
            raise ConfigError("N must be >= 2")
        if self.mc_frames < 1:
            raise ConfigError("mc_frames must be >= 1")
        if self.selection_frames is not None and self.selection_frames < 1:
            raise ConfigError("selection_frames must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if len(self.codes) not in (1, self.num_layers):
            raise ConfigError(f"{len(self.codes)} code specs for {self.num_layers} layers")
        if self.chunk_frames < 1 or self.threads < 1:
            raise ConfigError("chunk_frames and threads must be >= 1")

    @property
    def num_layers(self) -> int:
        return -(-self.q // self.a)

    def layer_code(self, i: int) -> CodeSpec:
        """Spec for 0-based layer ``i``."""
        return self.codes[0] if len(self.codes) == 1 else self.codes[i]

    @property
    def frames_for_selection(self) -> int:
        return self.selection_frames or self.mc_frames

    def with_(self, **changes) -> "RunConfig":
        # a per-layer code list stops matching once a changes; fall back to its first entry
        if "a" in changes and "codes" not in changes and len(self.codes) > 1:
            changes["codes"] = self.codes[:1]
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "q": self.q, "a": self.a, "n": self.n,
            "channel": self.channel.to_dict(),
            "codes": [c.to_dict() for c in self.codes],
            "decoder": asdict(self.decoder),
            "mc_frames": self.mc_frames,
            "selection_frames": self.selection_frames,
            "seed": self.seed,
            "output": self.output,
            "rate_grid": asdict(self.rate_grid),
            "de": {**asdict(self.de), "rate_bounds": list(self.de.rate_bounds), "degrees": list(self.de.degrees)},
            "chunk_frames": self.chunk_frames,
        }


def _take(d: dict, allowed: set, what: str) -> dict:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    return d


def parse_channel(d: dict) -> ChannelSpec:
    if not isinstance(d, dict):
        raise ConfigError("channel must be an object")
    kind = d.get("kind", "surrogate")
    if kind == "empirical":
        _take(d, {"kind", "path"}, "channel")
        if not d.get("path"):
            raise ConfigError("empirical channel needs a path")
        return ChannelSpec(kind="empirical", path=str(d["path"]))
    if kind != "surrogate":
        raise ConfigError(f"unknown channel kind {kind!r}")
    _take(d, {"kind", "binwidth_ps", "jitter_ps", "uniform_weight"}, "channel")
    spec = ChannelSpec(binwidth_ps=float(d.get("binwidth_ps", 300.0)), jitter_ps=float(d.get("jitter_ps", 60.0)),
                       uniform_weight=float(d.get("uniform_weight", 0.05)))
    try:
        SurrogateParams(1, spec.binwidth_ps, spec.jitter_ps, spec.uniform_weight)
    except ChannelError as exc:
        raise ConfigError(str(exc)) from exc
    return spec


def parse_code(d: dict) -> CodeSpec:
    if not isinstance(d, dict):
        raise ConfigError("code spec must be an object")
    kind = d.get("kind", "regular")
    if kind not in CODE_KINDS:
        raise ConfigError(f"unknown code kind {kind!r}")
    _take(d, {"kind", "rate", "vn", "path", "layer", "label"}, "code")
    rate = d.get("rate", "exhaustive")
    if rate != "exhaustive":
        try:
            rate = float(rate)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"rate must be a number or 'exhaustive', got {rate!r}") from exc
        if not 0 < rate < 1:
            raise ConfigError(f"rate {rate} outside (0, 1)")
    vn = ()
    if kind == "distribution":
        raw = d.get("vn")
        if not isinstance(raw, dict) or not raw:
            raise ConfigError("distribution code needs a 'vn' object of degree: fraction")
        try:
            vn = tuple(sorted((int(k), float(v)) for k, v in raw.items()))
        except ValueError as exc:
            raise ConfigError(f"bad degree distribution: {exc}") from exc
        if any(k < 1 or v < 0 for k, v in vn) or abs(sum(v for _, v in vn) - 1) > 1e-9:
            raise ConfigError("vn fractions must be non-negative and sum to 1")
    if kind in ("file", "jrdo") and not d.get("path"):
        raise ConfigError(f"{kind} code spec needs a path")
    layer = d.get("layer")
    return CodeSpec(kind=kind, rate=rate, vn=vn, path=d.get("path"),
                    layer=None if layer is None else int(layer), label=d.get("label"))


def parse_config(d: dict, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    _take(d, {"q", "a", "n", "channel", "codes", "decoder", "mc_frames", "selection_frames", "seed", "output",
              "rate_grid", "de", "chunk_frames", "threads"}, "config")
    if "q" not in d or "a" not in d:
        raise ConfigError("config needs q and a")
    codes = d.get("codes", {"kind": "regular"})
    codes = codes if isinstance(codes, list) else [codes]
    if not codes:
        raise ConfigError("codes list is empty")
    try:
        decoder = DecoderConfig(**_take(d.get("decoder", {}), {"max_iterations", "eps_min", "early_exit_on_syndrome"},
                                        "decoder"))
        grid = RateGrid(**_take(d.get("rate_grid", {}), {"start", "stop", "step", "refine", "prune", "patience"},
                                    "rate_grid"))
        de_raw = dict(d.get("de", {}))
        if "rate_bounds" in de_raw:
            de_raw["rate_bounds"] = tuple(de_raw["rate_bounds"])
        if "degrees" in de_raw:
            de_raw["degrees"] = tuple(de_raw["degrees"])
        de = DEConfig(**de_raw)
    except (TypeError, DecoderError, DEError) as exc:
        raise ConfigError(str(exc)) from exc
    if not 0 < grid.start <= grid.stop < 1 or grid.step <= 0 or grid.refine < 0 \
            or grid.patience < 1:
        raise ConfigError("rate grid must satisfy 0 < start <= stop < 1, step > 0, refine >= 0, patience >= 1")
    specs = [parse_code(c) for c in codes]
    channel = parse_channel(d.get("channel", {}))
    if base_dir is not None:
        channel = _rebase_channel(channel, base_dir)
        specs = [_rebase_code(c, base_dir) for c in specs]
    try:
        return RunConfig(
            q=int(d["q"]), a=int(d["a"]), n=int(d.get("n", 2000)), channel=channel, codes=tuple(specs),
            decoder=decoder, mc_frames=int(d.get("mc_frames", 1000)),
            selection_frames=None if d.get("selection_frames") is None else int(d["selection_frames"]),
            seed=int(d.get("seed", 0)), output=str(d.get("output", "out")), rate_grid=grid, de=de,
            chunk_frames=int(d.get("chunk_frames", 100)), threads=int(d.get("threads", 1)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _rebase(path: str, base_dir: Path) -> str:
    p = Path(path)
    return str(p if p.is_absolute() else base_dir / p)


def _rebase_channel(spec: ChannelSpec, base_dir: Path) -> ChannelSpec:
    return replace(spec, path=_rebase(spec.path, base_dir)) if spec.kind == "empirical" else spec


def _rebase_code(spec: CodeSpec, base_dir: Path) -> CodeSpec:
    return replace(spec, path=_rebase(spec.path, base_dir)) if spec.path else spec


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, base_dir=path.parent)


def dump_config(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)
