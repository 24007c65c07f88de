"""Aggregate completed runs into a report bundle.

The bundle is a pure function of the run directories and the report seed::

    aggregate.json           per-config IQM/mean final and best success and AUC
                             with CIs; final success scaled by the episodic oracle
    learning_curve.svg       IQM success rate per evaluation, shaded 95% CI
    trajectory_lengths.svg   mean trajectory length per config
    heatmaps/                forward-mode visits and max Q per snapshot step
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .env import GoalKind, GridSpec, parse_map
from .errors import ConfigError
from .metrics import (
    HEATMAP_WINDOW,
    AggregateMethod,
    AggregateStat,
    EvalRecord,
    HeatmapWindow,
    auc,
    bootstrap_ci,
    heatmap,
    iqm,
    normalize,
    success_curve,
)
from .runlog import read_csv, read_manifest, read_snapshot, read_training
from .templating import extract_jmespath, render_template

BOOTSTRAP_SEED = 0
SNAPSHOT_STEPS = "config.evaluation.snapshot_steps"
ORACLE_KIND = "episodic_oracle"
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]

# manifest fields that must agree before runs are compared on one chart
COMPAT_FIELDS = {
    "grid": "grid_map",
    "total_train_steps": "config.deployment.total_train_steps",
    "eval_every": "config.evaluation.every",
    "eval_episodes": "config.evaluation.episodes",
    "eval_episode_limit": "config.deployment.eval_episode_limit",
}


@dataclass
class RunRecord:
    run_dir: Path
    manifest: Dict[str, Any]
    curve: List[Tuple[int, float]]
    trajectory_lengths: List[int]

    @property
    def seed(self) -> int:
        return int(self.manifest["seed"])

    @property
    def config_hash(self) -> str:
        return str(self.manifest["config_hash"])


@dataclass
class ReportBundle:
    out_dir: Path
    aggregate: Dict[str, Any]
    files: List[Path] = field(default_factory=list)


def _read_evals(run_dir: Path) -> List[EvalRecord]:
    return [
        EvalRecord(
            train_step=int(rec["train_step"]),
            episode_index=int(rec["episode"]),
            episode_return=float(rec["return"]),
            success=rec["success"] == "1",
            episode_length=int(rec["length"]),
        )
        for rec in read_csv(run_dir / "eval.csv")
    ]


def load_run(run_dir: Path) -> RunRecord:
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir)
    if manifest.get("status") != "complete":
        status = manifest.get("status")
        raise ValueError(f"run {run_dir} is not complete (status {status})")
    curve = success_curve(_read_evals(run_dir))
    if not curve:
        raise ValueError(f"run {run_dir} has no evaluations")
    lengths = [r.traj_len for r in read_training(run_dir) if r.traj_len is not None]
    return RunRecord(run_dir, manifest, curve, lengths)


def check_compatible(runs: Sequence[RunRecord]) -> None:
    """Refuse to aggregate runs whose environment or protocol differ."""
    problems = []
    for key, expr in COMPAT_FIELDS.items():
        seen: Dict[str, List[str]] = {}
        for run in runs:
            value = json.dumps(extract_jmespath(expr, run.manifest), sort_keys=True)
            seen.setdefault(value, []).append(str(run.run_dir))
        if len(seen) > 1:
            detail = "; ".join(
                f"{v} in {len(d)} run(s)" for v, d in sorted(seen.items())
            )
            problems.append(f"{key}: runs disagree ({detail})")
    pairs = [(r.config_hash, r.seed) for r in runs]
    for pair in sorted(set(p for p in pairs if pairs.count(p) > 1)):
        problems.append(f"config {pair[0][:12]} seed {pair[1]}: listed more than once")
    if problems:
        raise ConfigError(problems, header="Runs cannot be aggregated")


def _stat(stat: AggregateStat, reps: int, seed: int) -> Dict[str, Any]:
    return {
        "method": stat.method.value,
        "point": stat.point,
        "ci_low": stat.ci_low,
        "ci_high": stat.ci_high,
        "reps": reps,
        "seed": seed,
    }


def _group_rng(seed: int, config_hash: str) -> np.random.Generator:
    return np.random.default_rng([seed, int(config_hash[:8], 16)])


def aggregate_group(
    label: str, runs: Sequence[RunRecord], reps: int, seed: int
) -> Dict[str, Any]:
    runs = sorted(runs, key=lambda r: r.seed)
    rng = _group_rng(seed, runs[0].config_hash)
    finals = [r.curve[-1][1] for r in runs]
    bests = [max(rate for _, rate in r.curve) for r in runs]
    aucs = [auc([rate for _, rate in r.curve]) for r in runs]
    mean_lengths = [
        float(np.mean(r.trajectory_lengths)) if r.trajectory_lengths else 0.0
        for r in runs
    ]

    def ci(samples: List[float], method: AggregateMethod) -> Dict[str, Any]:
        stat = bootstrap_ci({label: samples}, reps=reps, rng=rng, method=method)
        return _stat(stat, reps, seed)

    curve = []
    for i, (step, _) in enumerate(runs[0].curve):
        rates = [r.curve[i][1] for r in runs]
        iqm_stat = bootstrap_ci(
            {label: rates}, reps=reps, rng=rng, method=AggregateMethod.IQM
        )
        curve.append(
            {
                "train_step": step,
                "iqm": iqm_stat.point,
                "ci_low": iqm_stat.ci_low,
                "ci_high": iqm_stat.ci_high,
                "mean": float(np.mean(rates)),
            }
        )
    return {
        "label": label,
        "config_hash": runs[0].config_hash,
        "controller": extract_jmespath("config.controller.kind", runs[0].manifest),
        "runs": [str(r.run_dir) for r in runs],
        "seeds": [r.seed for r in runs],
        "final_success": {
            "iqm": ci(finals, AggregateMethod.IQM),
            "mean": ci(finals, AggregateMethod.MEAN),
            "per_run": finals,
        },
        "best_success": {
            "iqm": ci(bests, AggregateMethod.IQM),
            "mean": ci(bests, AggregateMethod.MEAN),
            "per_run": bests,
        },
        "auc": {
            "iqm": ci(aucs, AggregateMethod.IQM),
            "mean": ci(aucs, AggregateMethod.MEAN),
            "per_run": aucs,
        },
        "trajectory_length": {
            "mean": ci(mean_lengths, AggregateMethod.MEAN),
            "per_run": mean_lengths,
        },
        "curve": curve,
    }


def normalize_to_oracle(summaries: List[Dict[str, Any]]) -> Optional[str]:
    """Add ``normalized_final`` to every group, scaled by the episodic oracle.

    The oracle group's mean final success maps to 1 and zero success to 0.
    Returns the oracle's label, or None when there is nothing to scale by.
    """
    oracle = next((g for g in summaries if g["controller"] == ORACLE_KIND), None)
    if oracle is None:
        return None
    high = float(np.mean(oracle["final_success"]["per_run"]))
    if high <= 0.0:
        logging.getLogger(__name__).warning(
            "%s never succeeds; skipping normalization", oracle["label"]
        )
        return None
    for g in summaries:
        scores = normalize(g["final_success"]["per_run"], 0.0, high)
        g["normalized_final"] = {
            "iqm": iqm(scores),
            "mean": float(np.mean(scores)),
            "per_run": [float(s) for s in scores],
        }
    return oracle["label"]


def group_runs(runs: Sequence[RunRecord]) -> Dict[str, List[RunRecord]]:
    """Runs keyed by label: the config name, disambiguated by hash when shared."""
    by_hash: Dict[str, List[RunRecord]] = {}
    for r in runs:
        by_hash.setdefault(r.config_hash, []).append(r)
    names: Dict[str, int] = {}
    for group in by_hash.values():
        name = str(group[0].manifest.get("name", "run"))
        names[name] = names.get(name, 0) + 1
    out = {}
    for h, group in by_hash.items():
        name = str(group[0].manifest.get("name", "run"))
        out[name if names[name] == 1 else f"{name}-{h[:8]}"] = group
    return dict(sorted(out.items()))


def _shade(frac: float) -> str:
    lo, hi = (247, 251, 255), (8, 48, 107)
    frac = min(1.0, max(0.0, frac))
    return "#%02x%02x%02x" % tuple(round(a + (b - a) * frac) for a, b in zip(lo, hi))


_PLOT = {"left": 56, "top": 20, "width": 480, "height": 260}


def render_learning_curve(groups: List[Dict[str, Any]], total_steps: int) -> str:
    p = _PLOT

    def xy(step: float, y: float) -> str:
        x = p["left"] + p["width"] * step / max(1, total_steps)
        return f"{x:.2f},{p['top'] + p['height'] * (1.0 - y):.2f}"

    series_list = []
    for i, g in enumerate(groups):
        pts = g["curve"]
        upper = [xy(c["train_step"], c["ci_high"]) for c in pts]
        lower = [xy(c["train_step"], c["ci_low"]) for c in reversed(pts)]
        series_list.append(
            {
                "label": g["label"],
                "color": PALETTE[i % len(PALETTE)],
                "line": " ".join(xy(c["train_step"], c["iqm"]) for c in pts),
                "band": " ".join(upper + lower),
            }
        )
    y_ticks = [
        {"y": p["top"] + p["height"] * (1.0 - v), "label": f"{v:.2f}"}
        for v in (0.0, 0.25, 0.5, 0.75, 1.0)
    ]
    x_ticks = [
        {"x": p["left"] + p["width"] * k / 5, "label": f"{total_steps * k // 5:,}"}
        for k in range(6)
    ]
    return render_template(
        "learning_curve.svg",
        {
            "title": "IQM success rate",
            "width": p["left"] + p["width"] + 200,
            "height": p["top"] + p["height"] + 40,
            "plot": p,
            "series_list": series_list,
            "x_ticks": x_ticks,
            "y_ticks": y_ticks,
            "x_label": "training steps",
            "y_label": "success rate",
        },
    )


def render_trajectory_lengths(groups: List[Dict[str, Any]]) -> str:
    p = _PLOT
    top = max([g["trajectory_length"]["mean"]["ci_high"] for g in groups] + [1.0])
    slot = p["width"] / max(1, len(groups))

    def y(v: float) -> float:
        return p["top"] + p["height"] * (1.0 - v / top)

    bars = []
    for i, g in enumerate(groups):
        stat = g["trajectory_length"]["mean"]
        bars.append(
            {
                "x": p["left"] + slot * i + slot * 0.15,
                "width": slot * 0.7,
                "y": y(stat["point"]),
                "height": p["top"] + p["height"] - y(stat["point"]),
                "ci_top": y(stat["ci_high"]),
                "ci_bottom": y(stat["ci_low"]),
                "color": PALETTE[i % len(PALETTE)],
                "label": g["label"],
                "value": f"{stat['point']:.1f}",
            }
        )
    y_ticks = [{"y": y(top * k / 4), "label": f"{top * k / 4:.0f}"} for k in range(5)]
    return render_template(
        "trajectory_lengths.svg",
        {
            "title": "mean trajectory length",
            "width": p["left"] + p["width"] + 20,
            "height": p["top"] + p["height"] + 30,
            "plot": p,
            "bars": bars,
            "y_ticks": y_ticks,
            "y_label": "steps per trajectory",
        },
    )


def render_heatmap(spec: GridSpec, window: HeatmapWindow, title: str = "") -> str:
    """Two panels: forward-mode visit counts and the forward-goal max Q snapshot."""
    end = window.start_step + window.window_len
    size = 28
    panel_width = spec.width * size
    peak = max(window.forward_counts.values(), default=0)
    forward = GoalKind.FORWARD.value
    panels = []
    for k, label in enumerate(("forward visits", "max Q (forward goal)")):
        cells = []
        for r in range(spec.height):
            for c in range(spec.width):
                cell = (r, c)
                entry = {"x": c * size, "y": 20 + r * size, "text": "", "ink": "#000"}
                if cell in spec.walls:
                    entry["fill"] = "#555"
                    cells.append(entry)
                    continue
                if k == 0:
                    count = window.forward_counts.get(cell, 0)
                    frac = count / peak if peak else 0.0
                    entry["text"] = str(count) if count else ""
                else:
                    frac = window.max_q.get((cell, forward), 0.0)
                    entry["text"] = f"{frac:.2f}"
                if cell == spec.forward_goal_cell:
                    entry["text"] = "G"
                entry["fill"] = _shade(frac)
                entry["ink"] = "#fff" if frac > 0.6 else "#000"
                cells.append(entry)
        panels.append(
            {
                "x": k * (panel_width + 16),
                "width": panel_width,
                "label": label,
                "cells": cells,
            }
        )
    return render_template(
        "heatmap.svg",
        {
            "title": title or f"steps {window.start_step}-{end}",
            "width": 2 * panel_width + 16,
            "height": 20 + spec.height * size,
            "size": size,
            "font_size": 8,
            "panels": panels,
        },
    )


def run_heatmap(
    run_dir: Path, step: int, window_len: int = HEATMAP_WINDOW
) -> Tuple[GridSpec, HeatmapWindow]:
    """Heatmap window for one run, read back from its CSVs."""
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir)
    spec = parse_map(manifest["grid_map"])
    max_q = read_snapshot(run_dir, step)
    window = heatmap(read_training(run_dir), step, max_q, window_len)
    return spec, window


def build_report(
    run_dirs: Iterable[Path],
    out_dir: Path,
    seed: int = BOOTSTRAP_SEED,
    reps: int = 2_000,
    heatmap_steps: Optional[Sequence[int]] = None,
    heatmap_window: int = HEATMAP_WINDOW,
) -> ReportBundle:
    logger = logging.getLogger(__name__)
    runs = [load_run(Path(d)) for d in run_dirs]
    if not runs:
        raise ValueError("report needs at least one completed run")
    check_compatible(runs)
    groups = group_runs(runs)
    logger.info("aggregating %d runs in %d configs", len(runs), len(groups))
    summaries = [aggregate_group(label, g, reps, seed) for label, g in groups.items()]

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    aggregate = {"reps": reps, "seed": seed, "level": 0.95, "groups": summaries}
    reference = normalize_to_oracle(summaries)
    if reference is not None:
        aggregate["normalized_to"] = reference
    bundle = ReportBundle(out_dir=out_dir, aggregate=aggregate)

    def emit(name: str, text: str) -> None:
        path = out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        bundle.files.append(path)
        logger.info("wrote %s", path)

    emit("aggregate.json", json.dumps(aggregate, indent=2, sort_keys=True) + "\n")
    total = int(extract_jmespath(COMPAT_FIELDS["total_train_steps"], runs[0].manifest))
    emit("learning_curve.svg", render_learning_curve(summaries, total))
    emit("trajectory_lengths.svg", render_trajectory_lengths(summaries))

    for label, group in groups.items():
        first = min(group, key=lambda r: r.seed)
        requested = heatmap_steps is not None
        steps = (
            heatmap_steps
            if requested
            else extract_jmespath(SNAPSHOT_STEPS, first.manifest) or []
        )
        for step in steps:
            try:
                spec, window = run_heatmap(first.run_dir, int(step), heatmap_window)
            except ValueError:
                if requested:
                    raise
                logger.warning("skipping heatmap for %s at step %s", label, step)
                continue
            emit(
                f"heatmaps/{label}_step_{int(step):08d}.svg",
                render_heatmap(spec, window, f"{label} seed {first.seed} step {step}"),
            )
    return bundle
