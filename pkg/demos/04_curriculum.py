"""
Choosing what to train on: schedules and a learned teacher
==========================================================

Two categories, each with one attribute that is always randomized. Training
on only one of them leaves the other half of the test set near chance.
Fixed two-phase schedules and the DDPG teacher both cover the two
categories; the teacher picks the mixture every interval from the
student's recent losses and accuracies.
"""
import numpy as np

from ravenlab.harness import RunConfig, build_pools, preset_categories, run
from ravenlab.matrixgen import GeneratorConfig
from ravenlab.student import LenConfig

config = RunConfig(
    generator=GeneratorConfig(categories=preset_categories("distracted")),
    student=LenConfig(embed_dim=32, embed_hidden=(64,), g_hidden=(64, 64), f_hidden=(64,)),
    total_steps=300,
    teacher_interval=20,
    train_per_class=1000,
    val_per_class=100,
    test_per_class=200,
    seed=0,
)
pools = build_pools(config)

for mode, schedule in [("schedule", "1"), ("schedule", "1->2"), ("uniform", None), ("frar", None)]:
    cfg = RunConfig(**{**vars(config), "mode": mode, "schedule": schedule, "teacher": None})
    result = run(cfg, pools)
    per_class = np.round(result.test.class_accuracy, 3)
    print(f"{schedule or mode:>8}: test {result.test_accuracy:.3f} per category {per_class}")
    if mode == "frar":
        for step, action, reward in result.actions[::3]:
            print(f"    step {step:4d} mixture {np.round(action, 2)} val {reward:.3f}")
