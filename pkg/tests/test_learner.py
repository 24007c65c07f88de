from collections import Counter
from typing import List

import numpy as np
import pytest

from resetlab.env import ChainMDP
from resetlab.learner import (
    AgentConfig,
    BootstrapStrategy,
    QLearner,
    ReplayBuffer,
    Transition,
    transitions_from_rows,
)
from resetlab.oracle import value_iteration
from resetlab.runner import build_components, run_experiment

GAMMA = 0.9


def make_learner(env, **overrides) -> QLearner:
    cfg = AgentConfig(**{"gamma": GAMMA, "initial_collect": 0, **overrides})
    return QLearner(env, cfg, np.random.default_rng(1), np.random.default_rng(2))


def test_epsilon_schedule(make_grid):
    learner = make_learner(make_grid())
    assert learner.epsilon(0) == 1.0
    assert learner.epsilon(5_000) == pytest.approx(0.55)
    assert learner.epsilon(10_000) == pytest.approx(0.1)
    assert learner.epsilon(50_000) == pytest.approx(0.1)


def test_greedy_ties_break_to_lowest_index(make_grid):
    env = make_grid()
    learner = make_learner(env)
    assert learner.greedy_action((1, 1), env.forward_goal) == 0
    learner.table.q[env.cell_index((1, 1)), 0, 3] = 0.5
    assert learner.greedy_action((1, 1), env.forward_goal) == 3


def test_training_ties_break_at_random(make_grid):
    env = make_grid()
    learner = make_learner(env, eps_init=0.0, eps_end=0.0)
    picks = {learner.act((1, 1), env.forward_goal, 0) for _ in range(200)}
    assert picks == {0, 1, 2, 3}
    learner.table.q[env.cell_index((1, 1)), 0, 2] = 0.5
    assert {learner.act((1, 1), env.forward_goal, 0) for _ in range(50)} == {2}


def test_td_targets_by_strategy(make_chain):
    env = make_chain()
    goal = env.forward_goal
    for strategy in BootstrapStrategy:
        learner = make_learner(env, bootstrap_strategy=strategy)
        learner.table.target[env.cell_index((1, 3)), 0] = [0.0, 0.0, 0.0, 0.5]
        plain = Transition((1, 2), goal, 3, 0.0, (1, 3))
        truncated = Transition((1, 2), goal, 3, 0.0, (1, 3), truncated=True)
        terminal = Transition((1, 5), goal, 3, 1.0, (1, 6), terminal=True)
        assert learner.td_target(plain) == pytest.approx(GAMMA * 0.5)
        assert learner.td_target(terminal) == 1.0
        terminal_strategy = strategy is BootstrapStrategy.TIMEOUT_TERMINAL
        expected = 0.0 if terminal_strategy else GAMMA * 0.5
        assert learner.td_target(truncated) == pytest.approx(expected)
        batch = learner.make_batch([plain, truncated, terminal])
        np.testing.assert_allclose(
            learner.td_targets(batch),
            [learner.td_target(t) for t in (plain, truncated, terminal)],
        )


def test_transition_cannot_be_terminal_and_truncated(make_chain):
    env = make_chain()
    with pytest.raises(ValueError):
        Transition(
            (1, 5), env.forward_goal, 3, 1.0, (1, 6), terminal=True, truncated=True
        )


def test_single_entry_full_step_lands_on_target(make_chain):
    env = make_chain()
    learner = make_learner(env, lr=1.0)
    tr = Transition((1, 5), env.forward_goal, 3, 1.0, (1, 6), terminal=True)
    learner.observe(tr)
    learner.update(learner.make_batch([tr]))
    assert learner.q_values((1, 5), env.forward_goal)[3] == 1.0


def test_duplicates_in_batch_average_their_errors(make_chain):
    env = make_chain()
    learner = make_learner(env, lr=0.5)
    tr = Transition((1, 5), env.forward_goal, 3, 1.0, (1, 6), terminal=True)
    learner.observe(tr)
    learner.update(learner.make_batch([tr, tr, tr]))
    assert learner.q_values((1, 5), env.forward_goal)[3] == pytest.approx(0.5)


def test_update_waits_for_initial_collect(make_chain):
    env = make_chain()
    learner = make_learner(env, initial_collect=3, batch_size=2, lr=1.0)
    tr = Transition((1, 5), env.forward_goal, 3, 1.0, (1, 6), terminal=True)
    learner.observe(tr)
    learner.observe(tr)
    assert learner.train_step() is None
    assert learner.updates == 0
    learner.observe(tr)
    batch = learner.train_step()
    assert batch is not None and len(batch) == 2
    assert learner.updates == 1


def test_target_sync_cadence(make_chain):
    env = make_chain()
    learner = make_learner(env, lr=1.0, target_sync_every=2, batch_size=1)
    tr = Transition((1, 5), env.forward_goal, 3, 1.0, (1, 6), terminal=True)
    learner.observe(tr)
    learner.train_step()
    assert learner.table.target.max() == 0.0
    learner.train_step()
    np.testing.assert_array_equal(learner.table.target, learner.table.q)


def test_replay_ring_overwrites_oldest():
    buf = ReplayBuffer(3, np.random.default_rng(0))
    for i in range(5):
        buf.add(i, 0, 0, 0.0, i, False, False, False)
    assert len(buf) == 3
    assert list(buf.contents().state) == [2, 3, 4]
    assert set(buf.sample(50).state) <= {2, 3, 4}
    with pytest.raises(ValueError):
        ReplayBuffer(0, np.random.default_rng(0))


def test_replay_samples_uniformly():
    buf = ReplayBuffer(10, np.random.default_rng(3))
    for i in range(10):
        buf.add(i, 0, 0, 0.0, i, False, False, False)
    n = 100_000
    counts = np.bincount(buf.sample(n).state, minlength=10)
    sigma = np.sqrt(n * 0.1 * 0.9)
    assert np.all(np.abs(counts - n / 10) < 3 * sigma)


def test_empty_replay_cannot_sample():
    with pytest.raises(ValueError, match="empty"):
        ReplayBuffer(4, np.random.default_rng(0)).sample(1)


@pytest.mark.parametrize(
    "overrides",
    [
        {"gamma": 1.0},
        {"gamma": 0.0},
        {"lr": 2.0},
        {"batch_size": 0},
        {"eps_end": 0.5, "eps_init": 0.2},
    ],
)
def test_agent_config_validation(overrides):
    with pytest.raises(ValueError):
        AgentConfig(**overrides)


def test_preload_rows(make_chain):
    env = make_chain()
    rows = [
        {
            "cell_x": 5,
            "cell_y": 1,
            "goal_kind": "forward",
            "action": 3,
            "reward": 1,
            "next_x": 6,
            "next_y": 1,
            "terminal": "true",
            "truncated": "0",
        }
    ]
    learner = make_learner(env)
    learner.preload(transitions_from_rows(rows, env.goals))
    assert len(learner.replay) == 1
    assert bool(learner.replay.contents().success[0])


def chain_cycle(env: ChainMDP, k: int = 3) -> List[Transition]:
    """One lap of the always-right policy with truncation every ``k`` steps.

    Truncation does not move the agent; only reaching the goal restarts at s0.
    """
    goal = env.forward_goal
    cell = env.spec.start_cell
    t = 0
    out = []
    while True:
        nxt = env.transition(cell, ChainMDP.RIGHT)
        t += 1
        terminal = nxt == goal.cell
        truncated = not terminal and t % k == 0
        out.append(
            Transition(
                cell, goal, ChainMDP.RIGHT, float(terminal), nxt, terminal, truncated
            )
        )
        if terminal:
            return out
        if truncated:
            t = 0
        cell = nxt


def converge(env: ChainMDP, strategy: BootstrapStrategy) -> np.ndarray:
    learner = make_learner(
        env, lr=0.5, target_sync_every=1, bootstrap_strategy=strategy
    )
    cycle = chain_cycle(env)
    for tr in cycle:
        learner.observe(tr)
    batch = learner.make_batch(cycle)
    for _ in range(300):
        learner.update(batch)
    return np.array(
        [
            learner.q_values((1, c), env.forward_goal)[ChainMDP.RIGHT]
            for c in range(1, 6)
        ]
    )


def test_chain_cycle_truncates_only_from_s2(make_chain):
    cycle = chain_cycle(make_chain())
    assert [tr.state[1] - 1 for tr in cycle if tr.truncated] == [2]
    assert cycle[-1].terminal


def test_timeout_bootstrapping_fixed_points(make_chain):
    env = make_chain()
    nonterminal = converge(env, BootstrapStrategy.TIMEOUT_NONTERMINAL)
    terminal = converge(env, BootstrapStrategy.TIMEOUT_TERMINAL)

    # bootstrapping through the timeout recovers the true value of always-right
    v_pi = np.array([GAMMA ** (4 - i) for i in range(5)])
    assert np.max(np.abs(nonterminal - v_pi)) < 1e-3

    # treating the timeout as terminal zeroes everything upstream of it
    v_terminal = np.array([0.0, 0.0, 0.0, GAMMA, 1.0])
    assert np.max(np.abs(terminal - v_terminal)) < 1e-3

    assert np.all(np.abs(nonterminal[:3] - terminal[:3]) > 0.1)
    np.testing.assert_allclose(nonterminal[3:], terminal[3:], atol=1e-3)


def test_q_learning_converges_on_visited_cells(make_config):
    cfg = make_config(
        {
            "env": {"grid": "four_rooms"},
            "controller": {"kind": "episodic_oracle"},
            "agent": {
                "batch_size": 64,
                "eps_end": 0.2,
                "eps_decay_steps": 5_000,
                "replay_capacity": 40_000,
                "target_sync_every": 100,
            },
            "switching": {"max_length": 200},
            "deployment": {
                "hard_reset_frequency": 50_000,
                "total_train_steps": 40_000,
                "eval_episode_limit": 200,
            },
            "evaluation": {"every": 0, "snapshot_steps": []},
        }
    )
    comps = build_components(cfg, 0)
    log = run_experiment(cfg, 0)
    env = comps.env
    v_star = value_iteration(env, env.forward_goal, cfg.agent.gamma)
    visits = Counter(row.cell for row in log.training)
    checked = [
        cell
        for cell, n in visits.items()
        if n >= 100 and cell != env.forward_goal.cell
    ]
    assert env.spec.start_cell in checked
    for cell in checked:
        learned = log.q_table[env.cell_index(cell), 0].max()
        assert abs(learned - v_star[cell]) < 0.05, cell
