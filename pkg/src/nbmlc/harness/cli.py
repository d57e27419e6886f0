"""Command-line entry point: ``nbmlc <command> --config run.json ...``.

Exit codes: 0 success, 2 configuration error, 3 malformed data file,
4 numerical failure in the decoder.
"""
from __future__ import annotations

import functools
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import click

from ..channel import ChannelError, ChannelFormatError, SurrogateParams, build_surrogate, export
from ..codes import CodeCandidate, CodeError, CodeFormatError, sample_graph, save_code
from ..jrdo import DEError
from ..mlc import PlanError
from .campaign import (Campaign, NumericalFailure, calibrate, compare_codes, optimize_layers, run_simulation,
                       sweep_a, sweep_binwidth, sweep_rate)
from .config import ConfigError, RunConfig, load_config
from .output import write_campaign, write_json

EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("nbmlc")


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ChannelFormatError, CodeFormatError) as exc:
            click.echo(f"data format error: {exc}", err=True)
            sys.exit(EXIT_FORMAT)
        except (ConfigError, ChannelError, CodeError, DEError, PlanError) as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except NumericalFailure as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
    return wrapper


def common(fn):
    fn = click.option("--plot-data", is_flag=True, help="Also write gnuplot-ready .dat files.")(fn)
    fn = click.option("--threads", type=click.IntRange(min=1), default=None, help="Decoder threads.")(fn)
    fn = click.option("--frames", type=click.IntRange(min=1), default=None, help="Monte-Carlo frames per point.")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(fn)
    fn = click.option("--seed", type=click.IntRange(min=0), default=None, help="Master seed.")(fn)
    fn = click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True,
                      help="JSON run configuration.")(fn)
    return fn


def _resolve(config_path, seed, out, frames, threads) -> RunConfig:
    cfg = load_config(config_path)
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if out is not None:
        changes["output"] = out
    if frames is not None:
        changes["mc_frames"] = frames
    if threads is not None:
        changes["threads"] = threads
    return replace(cfg, **changes) if changes else cfg


def _finish(campaign: Campaign, cfg: RunConfig, command: str, plot_data: bool):
    paths = write_campaign(campaign, cfg.output, command, plot_data)
    for r in campaign.records:
        fers = " ".join(f"{f:.4f}" for f in r.fer)
        click.echo(f"{campaign.swept}={r.value} key_rate={r.key_rate:.4f} +/- {r.key_rate_se:.4f} "
                   f"fer=[{fers}] latency={r.latency_s * 1e3:.2f}ms")
    click.echo(f"wrote {paths['csv']}")
    bad = sum(r.numerical_failures for r in campaign.records)
    if bad:
        raise NumericalFailure(f"{bad} frame(s) hit NaN or underflow; results written but suspect")


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    """Non-binary multilevel reconciliation campaigns."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command()
@common
@_guard
def simulate(config_path, seed, out, frames, threads, plot_data):
    """Key rate, FER and latency of one configuration."""
    cfg = _resolve(config_path, seed, out, frames, threads)
    rec = run_simulation(cfg, value=cfg.a, log=log.info)
    _finish(Campaign("simulate", "a", [rec], cfg), cfg, "simulate", plot_data)


@main.command()
@common
@_guard
def optimize(config_path, seed, out, frames, threads, plot_data):
    """Optimize (L(x), R) per layer by differential evolution."""
    cfg = _resolve(config_path, seed, out, frames, threads)
    result = optimize_layers(cfg, log=log.info)
    path = write_json(result, Path(cfg.output) / "jrdo.json")
    for layer in result["layers"]:
        click.echo(f"layer {layer['layer']}: fitness={layer['fitness']:.4f} rate={layer['rate']:.4f}")
    click.echo(f"wrote {path}")


def _numbers(text, kind=float):
    try:
        return [kind(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad value list {text!r}") from exc


@main.command("sweep-a")
@common
@click.option("--values", default=None, help="Comma-separated a values (default 1..q).")
@_guard
def sweep_a_cmd(config_path, seed, out, frames, threads, plot_data, values):
    """Key rate and latency versus layer width a."""
    cfg = _resolve(config_path, seed, out, frames, threads)
    a_values = _numbers(values, int) if values else list(range(1, cfg.q + 1))
    _finish(sweep_a(cfg, a_values, log=log.info), cfg, "sweep-a", plot_data)


@main.command("sweep-binwidth")
@common
@click.option("--values", required=True, help="Comma-separated binwidths in ps.")
@_guard
def sweep_binwidth_cmd(config_path, seed, out, frames, threads, plot_data, values):
    """Key rate versus time-bin width (surrogate channel only)."""
    cfg = _resolve(config_path, seed, out, frames, threads)
    _finish(sweep_binwidth(cfg, _numbers(values), log=log.info), cfg, "sweep-binwidth", plot_data)


@main.command("sweep-rate")
@common
@click.option("--layer", type=click.IntRange(min=1), default=1, help="Layer whose rate is swept (1-based).")
@_guard
def sweep_rate_cmd(config_path, seed, out, frames, threads, plot_data, layer):
    """Full key-rate-term curve over the coding-rate grid."""
    cfg = _resolve(config_path, seed, out, frames, threads)
    camp = sweep_rate(cfg, layer, log=log.info)
    _finish(camp, cfg, "sweep-rate", plot_data)
    click.echo(f"argmax rate={camp.extra['argmax_rate']} FER there={camp.extra['argmax_fer']}")


@main.command("compare-codes")
@common
@click.option("--specs", "specs_path", type=click.Path(dir_okay=False), required=True,
              help="JSON list of entries {label, a, codes}.")
@_guard
def compare_codes_cmd(config_path, seed, out, frames, threads, plot_data, specs_path):
    """Key rate of several code families under identical frames."""
    cfg = _resolve(config_path, seed, out, frames, threads)
    try:
        entries = json.loads(Path(specs_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read specs {specs_path}: {exc}") from exc
    if not isinstance(entries, list):
        raise ConfigError("specs file must hold a JSON list")
    base = Path(specs_path).parent
    for e in entries:
        codes = e.get("codes", []) if isinstance(e, dict) else []
        for c in codes if isinstance(codes, list) else [codes]:
            if isinstance(c, dict) and c.get("path") and not Path(c["path"]).is_absolute():
                c["path"] = str(base / c["path"])
    _finish(compare_codes(cfg, entries, log=log.info), cfg, "compare-codes", plot_data)


@main.command("gen-code")
@click.option("--a", "a", type=click.IntRange(1, 10), required=True, help="Field bit-width.")
@click.option("--n", "n", type=click.IntRange(min=2), default=2000)
@click.option("--rate", type=float, required=True)
@click.option("--vn", default="3:1.0", help="Degree fractions, e.g. '2:0.5,3:0.5'.")
@click.option("--cn-mode", type=click.Choice(["two_element", "unconstrained"]), default="two_element")
@click.option("--seed", type=click.IntRange(min=0), default=0)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@_guard
def gen_code(a, n, rate, vn, cn_mode, seed, out):
    """Sample a Tanner graph and write it as a code file."""
    try:
        dist = {int(k): float(v) for k, v in (item.split(":") for item in vn.split(","))}
    except ValueError as exc:
        raise ConfigError(f"bad --vn {vn!r}") from exc
    g = sample_graph(CodeCandidate(dist, rate), a, n, seed, cn_mode)
    save_code(g, out)
    click.echo(f"wrote {out}: N={g.n} M={g.m} edges={g.num_edges} rate={g.rate:.4f}")


@main.command("gen-channel")
@click.option("--q", "q", type=click.IntRange(1, 10), required=True)
@click.option("--binwidth", type=float, default=300.0)
@click.option("--jitter", type=float, default=60.0)
@click.option("--uniform-weight", type=float, default=0.05)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@_guard
def gen_channel(q, binwidth, jitter, uniform_weight, out):
    """Write a surrogate transition matrix in the empirical-channel format."""
    export(build_surrogate(SurrogateParams(q, binwidth, jitter, uniform_weight)), out)
    click.echo(f"wrote {out}")


@main.command("calibrate")
@common
@click.option("--target-fer", type=float, default=0.05)
@click.option("--lo", type=float, default=0.0)
@click.option("--hi", type=float, default=1.0)
@click.option("--steps", type=click.IntRange(min=1), default=12)
@click.option("--tol", type=float, default=0.005)
@_guard
def calibrate_cmd(config_path, seed, out, frames, threads, plot_data, target_fer, lo, hi, steps, tol):
    """Tune the surrogate uniform weight until the reference codes hit a target FER."""
    cfg = _resolve(config_path, seed, out, frames, threads)
    result = calibrate(cfg, target_fer, lo, hi, steps, tol, log=log.info)
    path = write_json(result, Path(cfg.output) / "calibration.json")
    click.echo(f"uniform_weight={result['uniform_weight']:.6f} FER={result['fer']:.4f}")
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
