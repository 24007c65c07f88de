from __future__ import annotations

import csv
import json
import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional

import typer

from .config import load_config, load_yaml_files, output_root
from .env import GridWorld, dump_map, load_grid
from .errors import ConfigError
from .metrics import HEATMAP_WINDOW, window_ovpd
from .oracle import oracle_rows, value_iteration
from .report import build_report, render_heatmap, run_heatmap
from .runlog import read_manifest
from .runner import SweepRunner, SweepSpec, run_experiment

cli = typer.Typer(
    name="resetlab", context_settings={"help_option_names": ["-h", "--help"]}
)

EXIT_CONFIG = 2
EXIT_RUNTIME = 3

HELP_TEXT = """
resetlab CLI

Commands:
  run CONFIG...          Train every configured seed and write RunLogs
  sweep CONFIG...        Run a parameter grid (sweep.grid) over all seeds
  report RUN_DIR...      Aggregate runs into JSON and SVG charts
  dump-map [GRID]        Print a builtin layout or map file
  dump-oracle [GRID]     Write BFS distances and optimal values as CSV
  heatmap RUN_DIR        Render the visitation / max Q heatmap for one window

Options:
  --set PATH=VALUE      Override a config field (repeatable)
  --seed N              Run only this seed
  -v, --verbose         Debug logging
  -h, --help            Show this help message

Exit codes: 0 success, 2 configuration error, 3 runtime failure.

Examples:
  resetlab run configs/four_rooms_risc.yaml --seed 0
  resetlab sweep configs/four_rooms_risc.yaml configs/modulation_sweep.yaml -j 4
  resetlab report runs/four_rooms_risc/seed_* -o report/
"""


@cli.callback()
def main_callback(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@cli.command("help")
def help_cmd():
    """Show this CLI help."""
    typer.echo(HELP_TEXT)


@cli.command("h")
def h_cmd():
    """Alias for help."""
    typer.echo(HELP_TEXT)


def _guarded(action: Callable[[], None]) -> None:
    """Map configuration errors to exit code 2 and runtime failures to 3."""
    logger = logging.getLogger(__name__)
    try:
        action()
    except ConfigError as e:
        typer.echo(str(e), err=True)
        raise typer.Exit(EXIT_CONFIG)
    except (OSError, RuntimeError, ValueError, ImportError) as e:
        logger.exception("command failed")
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(EXIT_RUNTIME)


set_opt = typer.Option([], "--set", help="Override a config field as dotted.path=value")
seed_opt = typer.Option(None, "--seed", help="Run only this seed")
output_dir_opt = typer.Option(
    None,
    "--output-dir",
    "-o",
    help="Output root (default: config or RESETLAB_OUTPUT_ROOT)",
)


@cli.command()
def run(
    config: List[str],
    overrides: List[str] = set_opt,
    seed: Optional[int] = seed_opt,
    output_dir: Optional[str] = output_dir_opt,
):
    """Train the configured controller for each seed and write its RunLog."""

    def action():
        cfg = load_config(config, overrides)
        seeds = [seed] if seed is not None else list(cfg.seeds)
        logging.getLogger(__name__).info(
            "loaded %s (%s), seeds %s", config, cfg.controller.kind.value, seeds
        )
        for s in seeds:
            run_dir = cfg.run_dir(s, output_dir)
            run_experiment(cfg, s, run_dir)
            typer.echo(str(run_dir))

    _guarded(action)


@cli.command()
def sweep(
    config: List[str],
    overrides: List[str] = set_opt,
    parallelism: int = typer.Option(1, "--parallelism", "-j", help="Concurrent runs"),
    output_dir: Optional[str] = output_dir_opt,
):
    """Run every cell of ``sweep.grid`` (default: the modulation grid) for all seeds."""

    def action():
        spec = SweepSpec.from_mapping(load_yaml_files(config), overrides)
        cells = spec.cells()
        root = output_root(cells[0].config, output_dir) / cells[0].config.name
        runner = SweepRunner(spec, root, parallelism=parallelism)
        runner.run()
        index = runner.index()
        failed = [c["cell"] for c in index["cells"] if c["status"] == "failed"]
        typer.echo(str(root / "sweep.json"))
        if failed:
            raise RuntimeError(f"{len(failed)} sweep cells failed: {', '.join(failed)}")

    _guarded(action)


@cli.command()
def report(
    run_dirs: List[str],
    out: str = typer.Option("report", "--out", "-o", help="Report directory"),
    seed: int = typer.Option(0, "--seed", help="Bootstrap seed"),
    reps: int = typer.Option(2000, "--reps", help="Bootstrap replications"),
    heatmap_steps: Optional[List[int]] = typer.Option(
        None, "--heatmap-step", help="Snapshot step to render (repeatable)"
    ),
):
    """Aggregate completed runs into aggregate.json plus SVG charts."""

    def action():
        bundle = build_report(
            [Path(d) for d in run_dirs],
            Path(out),
            seed=seed,
            reps=reps,
            heatmap_steps=heatmap_steps or None,
        )
        for path in bundle.files:
            typer.echo(str(path))

    _guarded(action)


@cli.command("dump-map")
def dump_map_cmd(
    grid: str = typer.Argument("four_rooms", help="Builtin id or map file")
):
    """Print a layout in the text map format."""
    _guarded(lambda: typer.echo(dump_map(load_grid(grid)), nl=False))


@cli.command("dump-oracle")
def dump_oracle(
    grid: str = typer.Argument("four_rooms", help="Builtin id or map file"),
    gamma: float = typer.Option(0.95, "--gamma", help="Discount for V* and F*"),
    output_file: Optional[str] = typer.Option(
        None, "--output-file", "-o", help="Write CSV to file instead of stdout"
    ),
):
    """Write BFS distance, V* and optimal competency for every (cell, goal)."""

    def action():
        rows = oracle_rows(GridWorld(load_grid(grid)), gamma)
        fields = ["cell_x", "cell_y", "goal_kind", "dist", "v_star", "f_star"]
        if output_file:
            with open(output_file, "w", encoding="utf-8", newline="") as f:
                _write_rows(f, fields, rows)
        else:
            _write_rows(sys.stdout, fields, rows)

    _guarded(action)


def _write_rows(f, fields, rows) -> None:
    w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


@cli.command()
def heatmap(
    run_dir: str,
    step: int = typer.Option(..., "--step", help="Window start; needs a Q snapshot"),
    window: int = typer.Option(
        HEATMAP_WINDOW, "--window", help="Window length in steps"
    ),
    output_file: Optional[str] = typer.Option(
        None, "--output-file", "-o", help="SVG path (default: RUN_DIR/heatmap_STEP.svg)"
    ),
):
    """Render visit counts and max Q for the window starting at ``--step``."""

    def action():
        spec, hm = run_heatmap(Path(run_dir), step, window)
        gamma = read_manifest(Path(run_dir))["config"]["agent"]["gamma"]
        env = GridWorld(spec)
        v_star = value_iteration(env, env.forward_goal, gamma)
        path = Path(output_file or Path(run_dir) / f"heatmap_{step:08d}.svg")
        path.write_text(render_heatmap(spec, hm), encoding="utf-8")
        summary = {
            "step": step,
            "window": window,
            "forward_steps": sum(hm.forward_counts.values()),
            "ovpd": window_ovpd(hm, v_star),
            "svg": str(path),
        }
        typer.echo(json.dumps(summary, indent=2, sort_keys=True))

    _guarded(action)


def main():
    cli()


if __name__ == "__main__":
    main()
