"""
How distracting attributes slow learning down
=============================================

Same category, same budget, three levels of distraction. Each extra
randomized attribute is noise the student has to learn to ignore, so at a
fixed budget accuracy drops as the mean count grows. Single runs are noisy
(the step at which a run takes off varies a lot), so each level is averaged
over three seeds. Expect about seven minutes on one core.
"""
import numpy as np

from ravenlab.harness import RunConfig, dumps_sweep, preset_categories, run_sweep
from ravenlab.matrixgen import GeneratorConfig
from ravenlab.student import LenConfig

base = RunConfig(
    generator=GeneratorConfig(categories=preset_categories("progression-size")),
    student=LenConfig(embed_dim=32, embed_hidden=(64,), g_hidden=(64, 64), f_hidden=(64,)),
    total_steps=1000,
    teacher_interval=100,
    train_per_class=2000,
    val_per_class=200,
    test_per_class=200,
)
rows = run_sweep(base, means=[0, 1, 2], divergences=[0.0], seeds=[0, 1, 2])
print(dumps_sweep(rows))
for mean in (0, 1, 2):
    accs = [r.accuracy for r in rows if r.mean == mean]
    print(f"mean distraction {mean}: test accuracy {np.mean(accs):.3f} over {len(accs)} seeds")
