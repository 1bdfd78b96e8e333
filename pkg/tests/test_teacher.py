import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import chisquare

from oracles import check_param_grads
from ravenlab.errors import DimensionMismatch, EmptyBuffer, EmptyValidationSet, ShapeMismatch
from ravenlab.teacher import (
    DdpgConfig,
    DdpgTeacher,
    ReplayBuffer,
    StepRecord,
    Transition,
    build_state,
    reward,
    soft_update,
    write_action_log,
)
from ravenlab.tensor import MLP, Tensor

SMALL = DdpgConfig(actor_hidden=(16,), critic_hidden=(16,), batch=8)


def record(C=4, value=0.5, action=None):
    v = np.full(C, value)
    return StepRecord(train_loss=v, val_accuracy=v, val_loss=v, prob_correct=v,
                      class_counts=np.arange(1, C + 1), action=np.full(C, 1 / C) if action is None else action,
                      mean_train_loss=value)


def transition(cfg, rng, r=None, terminal=False):
    a = rng.random(cfg.n_classes)
    return Transition(rng.normal(size=cfg.state_dim), a / a.sum(),
                      float(rng.random()) if r is None else r, rng.normal(size=cfg.state_dim), terminal)


# state ------------------------------------------------------------------------

def test_state_dimension_for_four_classes_and_ten_steps():
    cfg = DdpgConfig()
    assert cfg.state_dim == 102
    assert build_state([record()], 1, cfg).shape == (102,)


def test_empty_history_gives_zero_state_except_time():
    cfg = DdpgConfig()
    s = build_state([], 0, cfg)
    assert not s.any()


def test_short_history_is_zero_padded_in_front():
    cfg = DdpgConfig()
    s = build_state([record(value=0.25), record(value=0.75)], 2, cfg)
    losses = s[:40].reshape(10, 4)
    assert not losses[:8].any()
    assert losses[8:].all()
    accs = s[40:80].reshape(10, 4)
    np.testing.assert_allclose(accs[-2:, 0], [0.25, 0.75])


def test_state_layout_of_latest_step():
    cfg = DdpgConfig()
    rec = record(value=0.5, action=np.array([0.1, 0.2, 0.3, 0.4]))
    s = build_state([rec], 50, cfg)
    near = s[80:]
    np.testing.assert_allclose(near[:4], 0.5)                 # prob correct
    np.testing.assert_allclose(near[4:8], 0.5 / cfg.loss_cap)  # val loss scaled
    np.testing.assert_allclose(near[8:12], 0.5)               # val accuracy
    assert near[12] == pytest.approx(0.5 / cfg.loss_cap)
    np.testing.assert_allclose(near[13:17], np.arange(1, 5) / 10)
    np.testing.assert_allclose(near[17:21], [0.1, 0.2, 0.3, 0.4])
    assert near[21] == 0.5


def test_losses_are_clipped_to_cap():
    cfg = DdpgConfig()
    s = build_state([record(value=100.0)], 1, cfg)
    assert s[36:40].max() == 1.0


def test_state_is_pure():
    cfg = DdpgConfig()
    hist = [record(value=v) for v in (0.1, 0.2, 0.3)]
    np.testing.assert_array_equal(build_state(hist, 3, cfg), build_state(list(hist), 3, cfg))


def test_config_validation():
    for bad in (dict(tau=0), dict(tau=1.5), dict(gamma=1.0), dict(gamma=-0.1), dict(batch=0)):
        with pytest.raises(ValueError):
            DdpgConfig(**bad)


# actor ------------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 102, elements=st.floats(-10, 10, allow_nan=False)), st.booleans())
def test_actions_lie_on_simplex(state, explore):
    teacher = DdpgTeacher(DdpgConfig(actor_hidden=(8,), critic_hidden=(8,)), seed=1)
    teacher.actor.layers[-1].weight.data[...] = 0.3
    a = teacher.select_action(state, explore=explore)
    assert (a >= 0).all() and a.sum() == pytest.approx(1.0, abs=1e-12)


def test_fresh_actor_proposes_uniform_mixture():
    teacher = DdpgTeacher(SMALL)
    np.testing.assert_allclose(teacher.select_action(np.ones(SMALL.state_dim)), 0.25)


def test_greedy_action_is_deterministic_and_exploring_is_not():
    teacher = DdpgTeacher(SMALL, seed=3)
    s = np.random.default_rng(0).normal(size=SMALL.state_dim)
    np.testing.assert_array_equal(teacher.select_action(s), teacher.select_action(s))
    assert teacher.explored == 0
    assert not np.allclose(teacher.select_action(s, explore=True), teacher.select_action(s, explore=True))
    assert teacher.explored == 2


def test_exploration_noise_decays_to_floor():
    teacher = DdpgTeacher(SMALL)
    assert teacher.sigma == 0.5
    teacher.explored = 100
    assert teacher.sigma == pytest.approx(0.5 * 0.995 ** 100)
    teacher.explored = 10_000
    assert teacher.sigma == 0.05


def test_wrong_state_width():
    with pytest.raises(DimensionMismatch):
        DdpgTeacher(SMALL).select_action(np.zeros(SMALL.state_dim + 1))


def test_same_seed_same_teacher():
    a, b = DdpgTeacher(SMALL, seed=9), DdpgTeacher(SMALL, seed=9)
    assert a.dumps() == b.dumps()
    assert a.dumps() != DdpgTeacher(SMALL, seed=10).dumps()


# replay -----------------------------------------------------------------------

def test_buffer_evicts_oldest_first():
    buf = ReplayBuffer(3)
    rng = np.random.default_rng(0)
    ts = [transition(SMALL, rng, r=i / 10) for i in range(5)]
    for t in ts:
        buf.store(t)
    assert len(buf) == 3
    assert [t.reward for t in buf.items()] == [0.2, 0.3, 0.4]


def test_empty_buffer_cannot_sample():
    with pytest.raises(EmptyBuffer):
        ReplayBuffer(4).sample(2, np.random.default_rng(0))


def test_buffer_samples_uniformly():
    buf = ReplayBuffer(10)
    rng = np.random.default_rng(0)
    for i in range(10):
        buf.store(transition(SMALL, rng, r=i / 10))
    draws = [round(t.reward * 10) for t in buf.sample(20_000, np.random.default_rng(1))]
    assert chisquare(np.bincount(draws, minlength=10)).pvalue > 0.001


def test_reward_outside_unit_interval_is_rejected():
    with pytest.raises(ValueError):
        Transition(np.zeros(2), np.ones(1), 1.5, np.zeros(2))


# critic and actor updates -----------------------------------------------------

def test_zero_discount_target_is_reward():
    teacher = DdpgTeacher(DdpgConfig(gamma=0.0, actor_hidden=(8,), critic_hidden=(8,)))
    rng = np.random.default_rng(0)
    r = rng.random(5)
    np.testing.assert_array_equal(teacher.critic_target(r, rng.normal(size=(5, 102)), np.zeros(5)), r)


def test_target_uses_target_networks_and_terminal_mask():
    cfg = DdpgConfig(gamma=0.5, actor_hidden=(8,), critic_hidden=(8,))
    teacher = DdpgTeacher(cfg, seed=2)
    rng = np.random.default_rng(0)
    s2 = rng.normal(size=(3, cfg.state_dim))
    r = np.array([0.1, 0.2, 0.3])
    a2 = teacher.select_action(s2)
    q2 = teacher.target_critic(Tensor(np.concatenate([s2, a2], axis=1))).data[:, 0]
    out = teacher.critic_target(r, s2, np.array([False, True, False]))
    np.testing.assert_allclose(out, r + 0.5 * np.array([1, 0, 1]) * q2)
    teacher.critic.layers[-1].bias.data += 10.0
    np.testing.assert_allclose(teacher.critic_target(r, s2, np.zeros(3)), r + 0.5 * q2)


def test_critic_loss_gradient_matches_finite_differences():
    teacher = DdpgTeacher(DdpgConfig(actor_hidden=(6,), critic_hidden=(6, 5)), seed=4)
    rng = np.random.default_rng(0)
    states, actions = rng.normal(size=(5, 102)), rng.dirichlet(np.ones(4), 5)
    targets = rng.random(5)
    err = check_param_grads(lambda: teacher.critic_loss(states, actions, targets), teacher.critic.parameters(),
                            h=1e-6, max_entries=10)
    assert err < 1e-5


def test_actor_objective_gradient_matches_finite_differences():
    teacher = DdpgTeacher(DdpgConfig(actor_hidden=(6,), critic_hidden=(6,)), seed=5)
    teacher.actor.layers[-1].weight.data += 0.1 * np.random.default_rng(1).normal(size=(6, 4))
    states = np.random.default_rng(0).normal(size=(4, 102))
    err = check_param_grads(lambda: teacher.actor_objective(states), teacher.actor.parameters(),
                            h=1e-6, max_entries=10)
    assert err < 1e-5


def test_actor_step_increases_q_on_the_batch():
    teacher = DdpgTeacher(DdpgConfig(gamma=0.0, actor_hidden=(32,), critic_hidden=(32,)), seed=6)
    rng = np.random.default_rng(0)
    batch = [transition(teacher.config, rng) for _ in range(32)]
    states = np.stack([t.state for t in batch])
    before = teacher.actor_objective(states).item()
    # freeze the critic so the comparison is against the same Q
    teacher.critic_opt.state.lr = 0.0
    assert teacher.actor_opt.state.lr == 1e-4
    teacher.update(batch)
    assert teacher.actor_objective(states).item() > before


def test_critic_regression_reduces_loss():
    teacher = DdpgTeacher(DdpgConfig(gamma=0.0, actor_hidden=(16,), critic_hidden=(16,)), seed=7)
    rng = np.random.default_rng(0)
    batch = [transition(teacher.config, rng) for _ in range(16)]
    losses = [teacher.update(batch)[0] for _ in range(50)]
    assert losses[-1] < 0.5 * losses[0]


# target tracking --------------------------------------------------------------

def _nets(seed_a=0, seed_b=1):
    return MLP([3, 4, 2], np.random.default_rng(seed_a)), MLP([3, 4, 2], np.random.default_rng(seed_b))


def test_soft_update_with_tau_one_copies():
    online, target = _nets()
    soft_update(online, target, 1.0)
    for a, b in zip(online.parameters(), target.parameters()):
        np.testing.assert_array_equal(a.data, b.data)
        assert a.data is not b.data


def test_soft_update_with_tau_zero_keeps_target():
    online, target = _nets()
    before = [p.data.copy() for p in target.parameters()]
    soft_update(online, target, 0.0)
    for b, p in zip(before, target.parameters()):
        np.testing.assert_array_equal(b, p.data)


def test_soft_update_converges_geometrically():
    online, target = _nets()
    gap0 = [a.data - b.data for a, b in zip(online.parameters(), target.parameters())]
    for _ in range(20):
        soft_update(online, target, 0.1)
    for g0, a, b in zip(gap0, online.parameters(), target.parameters()):
        np.testing.assert_allclose(a.data - b.data, 0.9 ** 20 * g0, atol=1e-12)


def test_soft_update_rejects_mismatched_networks():
    with pytest.raises(ShapeMismatch):
        soft_update(MLP([3, 4, 2], np.random.default_rng(0)), MLP([3, 5, 2], np.random.default_rng(0)), 0.5)


def test_targets_trail_online_networks_after_updates():
    teacher = DdpgTeacher(SMALL, seed=8)
    rng = np.random.default_rng(0)
    for _ in range(10):
        teacher.observe(transition(SMALL, rng))
    teacher.update()
    online = teacher.critic.parameters()[0].data
    target = teacher.target_critic.parameters()[0].data
    assert not np.array_equal(online, target)


# reward and persistence -------------------------------------------------------

@pytest.mark.parametrize("correct,expected", [([1, 0, 1, 1], 0.75), ([0] * 5, 0.0), ([True] * 3, 1.0)])
def test_reward_is_validation_accuracy(correct, expected):
    assert reward(correct) == expected


def test_reward_needs_validation_puzzles():
    with pytest.raises(EmptyValidationSet):
        reward([])


def test_checkpoint_roundtrip_restores_behaviour():
    teacher = DdpgTeacher(SMALL, seed=11)
    rng = np.random.default_rng(0)
    for _ in range(12):
        teacher.observe(transition(SMALL, rng))
    for _ in range(3):
        teacher.update()
    teacher.explored = 7
    blob = teacher.dumps(include_buffer=True)
    other = DdpgTeacher(SMALL, seed=99)
    other.loads(blob)
    s = rng.normal(size=SMALL.state_dim)
    np.testing.assert_array_equal(other.select_action(s), teacher.select_action(s))
    assert other.explored == 7 and len(other.buffer) == 12
    assert other.dumps(include_buffer=True) == blob


def test_action_log(tmp_path):
    path = tmp_path / "actions.csv"
    write_action_log(path, [(10, [0.25, 0.75], 0.5), (20, [1.0, 0.0], 0.625)])
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["step", "a0", "a1", "reward"]
    assert [float(v) for v in rows[2]] == [20, 1.0, 0.0, 0.625]
