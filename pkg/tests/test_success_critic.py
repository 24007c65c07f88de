import numpy as np
import pytest

from resetlab.env import GridWorld, four_rooms
from resetlab.learner import AgentConfig, QLearner, Transition
from resetlab.oracle import optimal_competency, optimal_q, shortest_paths
from resetlab.success_critic import CriticConfig, CriticPolicy, SuccessCritic

GAMMA_SC = 0.95


def make_pair(env, critic_lr=1.0, policy=CriticPolicy.GREEDY, sync_every=1):
    cfg = AgentConfig(gamma=GAMMA_SC, initial_collect=0, target_sync_every=sync_every)
    learner = QLearner(env, cfg, np.random.default_rng(0), np.random.default_rng(1))
    critic = SuccessCritic(env, learner, CriticConfig(lr=critic_lr, policy=policy))
    return learner, critic


def test_discount_tied_to_agent(make_grid):
    _, critic = make_pair(make_grid())
    assert critic.gamma_sc == GAMMA_SC


def test_targets(make_grid):
    env = make_grid()
    learner, critic = make_pair(env)
    goal = env.forward_goal
    nxt = env.cell_index((2, 5))
    # the agent prefers action 1 at (2, 5); the critic's value for it is 0.4
    learner.table.q[nxt, 0] = [0.0, 0.3, 0.0, 0.1]
    critic.table.target[nxt, 0] = [0.9, 0.4, 0.0, 0.0]
    batch = learner.make_batch(
        [
            Transition((1, 5), goal, 1, 0.0, (2, 5)),
            Transition((2, 5), goal, 1, 1.0, (3, 5), terminal=True),
        ]
    )
    np.testing.assert_allclose(critic.targets(batch), [GAMMA_SC * 0.4, 1.0])


def test_competency_is_clamped(make_grid):
    env = make_grid()
    learner, critic = make_pair(env)
    critic.table.q[env.cell_index((1, 1)), 0] = [1.7, 0.0, 0.0, 0.0]
    assert critic.competency((1, 1), env.forward_goal) == 1.0
    critic.table.q[env.cell_index((1, 1)), 0] = [-0.3, 0.0, 0.0, 0.0]
    assert critic.competency((1, 1), env.forward_goal) == 0.0
    table = critic.competency_table()
    assert table.shape == (env.num_cells, 2)
    assert table.min() >= 0.0 and table.max() <= 1.0


def test_updates_stay_in_unit_interval(make_grid):
    env = make_grid()
    learner, critic = make_pair(env)
    goal = env.forward_goal
    tr = Transition((2, 5), goal, 1, 1.0, (3, 5), terminal=True)
    for _ in range(3):
        critic.update(learner.make_batch([tr]))
    assert critic.table.q.max() == 1.0


def test_epsilon_mixture_expectation(make_grid):
    env = make_grid()
    learner, critic = make_pair(env, policy=CriticPolicy.EPSILON_MIXTURE)
    cell = env.cell_index((1, 1))
    learner.table.q[cell, 0] = [0.0, 0.0, 0.0, 1.0]
    critic.table.q[cell, 0] = [0.2, 0.2, 0.2, 0.6]
    critic.epsilon = 0.5
    expected = 0.5 * 0.6 + 0.5 * np.mean([0.2, 0.2, 0.2, 0.6])
    assert critic.competency((1, 1), env.forward_goal) == pytest.approx(expected)


def test_critic_config_validation():
    with pytest.raises(ValueError):
        CriticConfig(lr=-0.1)
    assert CriticConfig(policy="epsilon_mixture").policy is CriticPolicy.EPSILON_MIXTURE


def test_calibrates_to_optimal_competency():
    env = GridWorld(four_rooms())
    learner, critic = make_pair(env, critic_lr=1.0, sync_every=1)
    for goal in env.goals:
        learner.table.q[:, env.goal_index(goal)] = optimal_q(env, goal, GAMMA_SC)

    transitions = []
    for goal in env.goals:
        for cell in env.free_cells():
            if cell == goal.cell:
                continue
            for a in range(env.num_actions):
                nxt = env.transition(cell, a)
                hit = nxt == goal.cell
                transitions.append(
                    Transition(cell, goal, a, float(hit), nxt, terminal=hit)
                )
    batch = learner.make_batch(transitions)
    for _ in range(60):
        critic.update(batch)

    for goal in env.goals:
        dist = shortest_paths(env, goal)
        for cell, d in dist.dist.items():
            if not d:
                continue
            expected = optimal_competency(d, GAMMA_SC)
            assert abs(critic.competency(cell, goal) - expected) < 0.02
