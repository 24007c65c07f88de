from typing import Any, Dict, Optional

import numpy as np
import pytest

from resetlab.config import ExperimentConfig, deep_merge, from_dict
from resetlab.env import ChainMDP, DeploymentConfig, GridWorld, parse_map

# 12 free cells, a loop around one interior wall block
SMALL_MAP = """\
#######
#S....#
#.###.#
#....G#
#######
"""


@pytest.fixture
def make_grid():
    """Return a factory building a GridWorld from map text (default: SMALL_MAP).

    Usage in tests:
        env = make_grid()
        env = make_grid(FOUR_ROOMS_MAP, hard_reset_frequency=50)
    """

    def _make(
        text: str = SMALL_MAP, seed: int = 0, **deployment: int
    ) -> GridWorld:
        return GridWorld(
            parse_map(text),
            DeploymentConfig(**deployment),
            rng=np.random.default_rng(seed),
            root_seed=seed,
        )

    return _make


@pytest.fixture
def make_chain():
    def _make(length: int = 5, **deployment: int) -> ChainMDP:
        return ChainMDP(length, DeploymentConfig(**deployment))

    return _make


@pytest.fixture
def tiny_config_data(tmp_path) -> Dict[str, Any]:
    """A short run on SMALL_MAP that finishes in well under a second."""
    map_path = tmp_path / "small.map"
    map_path.write_text(SMALL_MAP, encoding="utf-8")
    return {
        "schema_version": 1,
        "name": "tiny",
        "seeds": [0],
        "output_dir": str(tmp_path / "runs"),
        "env": {"grid": str(map_path)},
        "controller": {"kind": "risc"},
        "agent": {
            "batch_size": 16,
            "initial_collect": 32,
            "target_sync_every": 50,
            "replay_capacity": 1000,
            "eps_decay_steps": 300,
            "lr": 0.1,
        },
        "critic": {"lr": 0.1},
        "switching": {"max_length": 20},
        "deployment": {
            "hard_reset_frequency": 250,
            "total_train_steps": 600,
            "eval_episode_limit": 30,
        },
        "evaluation": {
            "every": 200,
            "episodes": 2,
            "snapshot_steps": [100],
            "trace_switches": True,
        },
    }


@pytest.fixture
def make_config(tiny_config_data):
    """Return a factory: tiny config deep-merged with ``patch``."""

    def _make(patch: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
        return from_dict(deep_merge(tiny_config_data, patch or {}))

    return _make
