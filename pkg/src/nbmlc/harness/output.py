"""Result files: per-curve CSV, run manifest, timing sidecar and plot data.

The CSV and manifest hold only quantities that are a function of the config
and seed, so a rerun reproduces them byte for byte. Wall-clock latency is the
one machine-dependent measurement; it goes to ``<curve>.timing.csv``.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .. import __version__
from .campaign import Campaign, PointRecord
from .config import RunConfig


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _layers(records: list[PointRecord]) -> int:
    return max((r.num_layers for r in records), default=0)


def curve_rows(campaign: Campaign) -> tuple[list[str], list[list[str]]]:
    k = _layers(campaign.records)
    header = (["value", "key_rate", "key_rate_se"] + [f"fer_layer_{i + 1}" for i in range(k)]
              + [f"m_layer_{i + 1}" for i in range(k)] + ["frames", "seed"])
    rows = []
    for r in campaign.records:
        pad = [""] * (k - r.num_layers)
        rows.append([_fmt(r.value), _fmt(r.key_rate), _fmt(r.key_rate_se)] + [_fmt(f) for f in r.fer] + pad
                    + [str(m) for m in r.m] + pad + [str(r.frames), str(r.seed)])
    return header, rows


def curve_csv(campaign: Campaign) -> str:
    header, rows = curve_rows(campaign)
    buf = io.StringIO()
    buf.write(f"# swept={campaign.swept}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def timing_csv(campaign: Campaign) -> str:
    k = _layers(campaign.records)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["value", "latency_s"] + [f"latency_layer_{i + 1}" for i in range(k)])
    for r in campaign.records:
        w.writerow([_fmt(r.value), _fmt(r.latency_s)] + [_fmt(v) for v in r.layer_latency_s])
    return buf.getvalue()


def plot_dat(campaign: Campaign) -> str:
    header, rows = curve_rows(campaign)
    lines = ["# " + " ".join(header)]
    for row in rows:
        lines.append(" ".join(c if c else "nan" for c in row))
    return "\n".join(lines) + "\n"


def manifest(campaign: Campaign, command: str) -> dict:
    points = []
    for r in campaign.records:
        points.append({
            "value": r.value,
            "layers": [{"layer": c.layer_index, "alpha": c.alpha, "code": c.spec, "m": c.m, "rate": c.rate,
                        "edges": c.graph.num_edges,
                        "selection": None if c.sweep is None else [
                            {"rate": p.rate, "m": p.m, "frames": p.frames, "failures": p.failures,
                             "status": p.status} for p in sorted(c.sweep.points, key=lambda p: p.m)]}
                       for c in r.choices],
        })
    return {"package_version": __version__, "command": command, "campaign": campaign.name,
            "swept": campaign.swept, "config": campaign.config.to_dict(), "extra": campaign.extra,
            "points": points}


def write_campaign(campaign: Campaign, out_dir, command: str, plot_data: bool = False) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / f"{campaign.name}.csv", "manifest": out / f"{campaign.name}.manifest.json",
             "timing": out / f"{campaign.name}.timing.csv"}
    paths["csv"].write_text(curve_csv(campaign))
    paths["manifest"].write_text(json.dumps(manifest(campaign, command), indent=2, sort_keys=True) + "\n")
    paths["timing"].write_text(timing_csv(campaign))
    if plot_data:
        paths["dat"] = out / f"{campaign.name}.dat"
        paths["dat"].write_text(plot_dat(campaign))
    return paths


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def config_for_manifest(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)
