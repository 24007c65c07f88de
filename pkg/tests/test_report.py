import json

import pytest

from resetlab.errors import ConfigError
from resetlab.metrics import iqm
from resetlab.report import build_report, normalize_to_oracle, run_heatmap
from resetlab.runlog import read_csv
from resetlab.runner import run_experiment


@pytest.fixture
def two_seed_runs(make_config, tmp_path):
    cfg = make_config()
    dirs = []
    for seed in (0, 1):
        run_dir = tmp_path / "runs" / f"seed_{seed}"
        run_experiment(cfg, seed, run_dir)
        dirs.append(run_dir)
    return dirs


def curve_rates(run_dir):
    by_step = {}
    for r in read_csv(run_dir / "eval.csv"):
        by_step.setdefault(int(r["train_step"]), []).append(int(r["success"]))
    return [sum(v) / len(v) for _, v in sorted(by_step.items())]


def final_rates(run_dir):
    return curve_rates(run_dir)[-1]


def test_report_bundle(two_seed_runs, tmp_path):
    bundle = build_report(
        two_seed_runs, tmp_path / "report", reps=200, heatmap_window=400
    )
    names = sorted(p.relative_to(tmp_path / "report").as_posix() for p in bundle.files)
    assert names == [
        "aggregate.json",
        "heatmaps/tiny_step_00000100.svg",
        "learning_curve.svg",
        "trajectory_lengths.svg",
    ]
    aggregate = json.loads((tmp_path / "report" / "aggregate.json").read_text())
    assert aggregate["reps"] == 200 and aggregate["seed"] == 0
    (group,) = aggregate["groups"]
    assert group["seeds"] == [0, 1]
    assert len(group["curve"]) == 3
    stat = group["final_success"]["iqm"]
    assert stat["ci_low"] <= stat["point"] <= stat["ci_high"]
    assert stat["point"] == pytest.approx(iqm([final_rates(d) for d in two_seed_runs]))
    best = group["best_success"]["per_run"]
    assert all(b >= f for b, f in zip(best, group["final_success"]["per_run"]))
    assert best == [max(curve_rates(d)) for d in two_seed_runs]
    svg = (tmp_path / "report" / "learning_curve.svg").read_text()
    assert svg.startswith("<svg") and "<polygon" in svg and "tiny" in svg


def test_report_is_reproducible(two_seed_runs, tmp_path):
    build_report(two_seed_runs, tmp_path / "one", reps=100, heatmap_steps=[])
    reordered = list(reversed(two_seed_runs))
    build_report(reordered, tmp_path / "two", reps=100, heatmap_steps=[])
    for name in ("aggregate.json", "learning_curve.svg", "trajectory_lengths.svg"):
        a = (tmp_path / "one" / name).read_text()
        b = (tmp_path / "two" / name).read_text()
        assert a == b


def test_incompatible_runs_are_refused(two_seed_runs, make_config, tmp_path):
    longer = make_config({"deployment": {"total_train_steps": 800}})
    other = tmp_path / "other"
    run_experiment(longer, 0, other)
    with pytest.raises(ConfigError, match="total_train_steps"):
        build_report([two_seed_runs[0], other], tmp_path / "report")


def test_duplicate_runs_are_refused(two_seed_runs, tmp_path):
    with pytest.raises(ConfigError, match="more than once"):
        build_report([two_seed_runs[0], two_seed_runs[0]], tmp_path / "report")


def test_configs_are_grouped_by_hash(two_seed_runs, make_config, tmp_path):
    naive = make_config({"name": "tiny_naive", "controller": {"kind": "naive"}})
    run_experiment(naive, 0, tmp_path / "naive")
    runs = two_seed_runs + [tmp_path / "naive"]
    bundle = build_report(runs, tmp_path / "report", reps=50, heatmap_steps=[])
    labels = [g["label"] for g in bundle.aggregate["groups"]]
    assert labels == ["tiny", "tiny_naive"]
    assert bundle.aggregate["groups"][1]["controller"] == "naive"
    assert "normalized_to" not in bundle.aggregate
    assert all("normalized_final" not in g for g in bundle.aggregate["groups"])


def test_requested_heatmap_needs_snapshot(two_seed_runs, tmp_path):
    with pytest.raises(ValueError, match="no Q snapshot"):
        build_report(two_seed_runs, tmp_path / "report", reps=50, heatmap_steps=[50])


def test_run_heatmap_window(two_seed_runs):
    spec, window = run_heatmap(two_seed_runs[0], 100, 400)
    assert sum(window.visit_counts.values()) == 400
    assert window.max_q
    assert spec.forward_goal_cell == (3, 5)


def summary(label, controller, finals):
    return {
        "label": label,
        "controller": controller,
        "final_success": {"per_run": finals},
    }


def test_final_success_is_scaled_by_the_oracle():
    groups = [
        summary("risc", "risc", [0.4, 0.2, 0.6]),
        summary("oracle", "episodic_oracle", [0.8, 0.8, 0.8]),
    ]
    assert normalize_to_oracle(groups) == "oracle"
    risc, oracle = (g["normalized_final"] for g in groups)
    assert risc["per_run"] == pytest.approx([0.5, 0.25, 0.75])
    assert risc["mean"] == pytest.approx(0.5)
    assert oracle["mean"] == pytest.approx(1.0)
    assert oracle["iqm"] == pytest.approx(1.0)


def test_normalization_needs_a_succeeding_oracle():
    groups = [summary("risc", "risc", [0.4]), summary("naive", "naive", [0.1])]
    assert normalize_to_oracle(groups) is None
    groups.append(summary("oracle", "episodic_oracle", [0.0, 0.0]))
    assert normalize_to_oracle(groups) is None
    assert all("normalized_final" not in g for g in groups)
