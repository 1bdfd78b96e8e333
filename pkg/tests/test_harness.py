import json
from dataclasses import replace

import numpy as np
import pytest

from ravenlab.errors import EmptyCategory, EmptyPool
from ravenlab.harness import (
    PRESET_GROUPS,
    Pool,
    RunConfig,
    build_pools,
    dumps_metrics,
    dumps_sweep,
    evaluate,
    parse_schedule,
    preset_categories,
    puzzle_seed,
    run,
    run_frar,
    run_schedule,
    run_sweep,
    sample_batch,
    sample_indices,
    write_run,
)
from ravenlab.matrixgen import GeneratorConfig
from ravenlab.student import LenConfig, StudentOutput
from ravenlab.teacher import DdpgConfig
from ravenlab.tensor import Tensor, softmax

TINY = LenConfig(embed_dim=8, embed_hidden=(8,), g_hidden=(8, 8), f_hidden=(8,))


def tiny_config(**kw):
    base = dict(generator=GeneratorConfig(categories=preset_categories("clean")), student=TINY,
                total_steps=10, teacher_interval=2, batch=4, train_per_class=12, val_per_class=6,
                test_per_class=6, seed=0)
    base.update(kw)
    return RunConfig(**base)


# presets and schedules --------------------------------------------------------

def test_table_group_has_four_categories():
    cats = preset_categories("table1")
    assert len(cats) == 4
    assert cats[2].distracting and cats[3].distracting
    assert set(PRESET_GROUPS) >= {"clean", "distracted", "table1"}


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset_categories("nope")


def test_schedule_phases_and_budget():
    s = parse_schedule("1->2->1+2", 2, 100)
    assert [p.steps for p in s.phases] == [34, 33, 33]
    assert [p.mixture for p in s.phases] == [(1.0, 0.0), (0.0, 1.0), (0.5, 0.5)]
    assert s.boundaries() == [34, 67]
    assert s.phase_at(33) == 0 and s.phase_at(34) == 1 and s.phase_at(99) == 2


@pytest.mark.parametrize("text", ["1->3", "1->", "a->b", "0"])
def test_malformed_schedules(text):
    with pytest.raises(ValueError):
        parse_schedule(text, 2, 10)


# sampling ---------------------------------------------------------------------

def test_one_hot_action_draws_from_one_class():
    rng = np.random.default_rng(0)
    classes, idx = sample_indices([0, 1, 0], [5, 5, 5], 200, rng)
    assert (classes == 1).all() and idx.max() < 5


def test_uniform_action_draws_all_classes_evenly():
    classes, _ = sample_indices([0.25] * 4, [10] * 4, 40_000, np.random.default_rng(1))
    np.testing.assert_allclose(np.bincount(classes) / 40_000, 0.25, atol=0.01)


def test_sampling_is_deterministic_given_the_rng():
    data = [list("abc"), list("xyz")]
    a = sample_batch([0.3, 0.7], data, 16, np.random.default_rng(5))
    b = sample_batch([0.3, 0.7], data, 16, np.random.default_rng(5))
    assert a == b and len(a) == 16


def test_mass_on_empty_class():
    with pytest.raises(EmptyCategory):
        sample_batch([0.5, 0.5], [[1, 2], []], 4, np.random.default_rng(0))


def test_empty_class_without_mass_is_fine():
    assert sample_batch([1.0, 0.0], [[1, 2], []], 4, np.random.default_rng(0))


@pytest.mark.parametrize("action", [[0.5, 0.6], [1.2, -0.2], [[0.5, 0.5]]])
def test_action_off_simplex(action):
    with pytest.raises(ValueError):
        sample_indices(action, [3, 3], 2, np.random.default_rng(0))


# pools ------------------------------------------------------------------------

def test_splits_never_share_seeds():
    cfg = tiny_config()
    pools = build_pools(cfg)
    seen = [set(np.concatenate(pools[s].seeds).tolist()) for s in ("train", "val", "test")]
    assert not (seen[0] & seen[1]) and not (seen[0] & seen[2]) and not (seen[1] & seen[2])
    assert pools["train"].sizes == [12, 12]


def test_puzzle_seed_layout():
    assert puzzle_seed(1, "val", 2, 3) == (1 << 32) | (1 << 28) | (2 << 20) | 3
    with pytest.raises(ValueError):
        puzzle_seed(0, "train", 0, 1 << 20)


# evaluation -------------------------------------------------------------------

class FixedStudent:
    """Scores that put all mass on a fixed answer rule."""

    def __init__(self, pick):
        self.pick = pick

    def forward(self, x):
        x = np.asarray(x)
        scores = np.zeros((len(x), 8))
        scores[np.arange(len(x)), self.pick(x)] = 10.0
        t = Tensor(scores)
        return StudentOutput(scores=t, choice_probs=softmax(t))


def test_evaluate_chance_and_oracle_students():
    pools = build_pools(tiny_config(val_per_class=150))
    val = pools["val"]
    answers = {x.tobytes(): a for c in range(2) for x, a in zip(val.x[c], val.answers[c])}
    oracle = FixedStudent(lambda xb: [answers[x.tobytes()] for x in xb])
    assert evaluate(oracle, val).accuracy == 1.0
    constant = evaluate(FixedStudent(lambda xb: np.zeros(len(xb), int)), val)
    expected = np.mean(np.concatenate(val.answers) == 0)
    assert constant.accuracy == pytest.approx(expected)
    assert constant.class_counts.tolist() == [150, 150]


def test_evaluate_empty_pool():
    with pytest.raises(EmptyPool):
        evaluate(FixedStudent(lambda xb: 0), Pool([np.zeros((0, 16, 318))], [np.zeros(0, int)], [np.zeros(0)]))


# runs -------------------------------------------------------------------------

def test_frar_stores_one_transition_per_interval():
    cfg = tiny_config(total_steps=5, teacher_interval=1,
                      teacher=DdpgConfig(n_classes=2, actor_hidden=(8,), critic_hidden=(8,), batch=4,
                                         episode_length=5))
    res = run_frar(cfg)
    assert len(res.teacher.buffer) == 5
    items = res.teacher.buffer.items()
    assert items[-1].terminal and not any(t.terminal for t in items[:-1])
    for a, b in zip(items, items[1:]):
        np.testing.assert_array_equal(a.next_state, b.state)
    assert [m.step for m in res.metrics] == [1, 2, 3, 4, 5]


@pytest.mark.parametrize("mode", ["uniform", "frar", "schedule"])
def test_runs_are_deterministic(mode):
    cfg = tiny_config(mode=mode, schedule="1->2" if mode == "schedule" else None)
    a, b = run(cfg), run(cfg)
    assert dumps_metrics(a.metrics, 2) == dumps_metrics(b.metrics, 2)
    assert a.student_checkpoint() == b.student_checkpoint()


def test_interval_straddling_a_boundary_is_labelled_with_both_phases():
    res = run_schedule(tiny_config(), "1->2")
    phases = [(m.step, m.phase) for m in res.metrics]
    assert phases == [(2, "1"), (4, "1"), (6, "1|2"), (8, "2"), (10, "2")]


def test_boundary_on_an_interval_edge_gets_its_own_record():
    res = run_schedule(tiny_config(total_steps=8), "1->2")
    phases = [(m.step, m.phase) for m in res.metrics]
    assert phases == [(2, "1"), (4, "1"), (4, "2"), (6, "2"), (8, "2")]
    np.testing.assert_array_equal(res.metrics[2].action, [0.0, 1.0])


def test_early_stop():
    res = run(tiny_config(stop_accuracy=0.0))
    assert res.steps_run == 2 and len(res.metrics) == 1


def test_write_run(tmp_path):
    res = run_frar(tiny_config(teacher=DdpgConfig(n_classes=2, actor_hidden=(8,), critic_hidden=(8,),
                                                  batch=4, episode_length=5)))
    write_run(res, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest["files"]) == {"metrics.csv", "student.ckpt", "actions.csv", "teacher.ckpt"}
    assert "wall_clock_seconds" in manifest
    header = (tmp_path / "metrics.csv").read_text().splitlines()[0]
    assert "wall" not in header and header.startswith("step,phase,a0,a1")


def test_sweep_has_one_row_per_cell():
    base = tiny_config(total_steps=2, generator=GeneratorConfig(categories=preset_categories("progression-size")))
    rows = run_sweep(base, [0, 1], [0.0], [0, 1])
    assert [(r.mean, r.seed) for r in rows] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert all(0 <= r.accuracy <= 1 for r in rows)
    assert dumps_sweep(rows).count("\n") == 5


def test_config_rejects_teacher_class_mismatch():
    with pytest.raises(ValueError):
        tiny_config(teacher=DdpgConfig(n_classes=3))
    with pytest.raises(ValueError):
        tiny_config(mode="schedule")


def test_seeds_differ_per_stream():
    s = tiny_config(seed=3).seeds()
    assert len({s["model"], s["sampling"], s["teacher"]}) == 3 and s["data"] == 3
    assert replace(tiny_config(seed=3), data_seed=7).seeds()["data"] == 7
