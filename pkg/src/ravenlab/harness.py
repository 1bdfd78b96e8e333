"""Experiment loops binding generator, student and teacher.

A run trains one student for ``total_steps`` optimizer steps. Steps are
grouped into intervals of ``teacher_interval``; each interval trains on
batches drawn from the current category mixture, then evaluates on the
validation pool and emits one metrics record. The mixture comes from the
DDPG teacher (``frar``), is uniform (``uniform``), or follows a fixed
schedule of phases (``schedule``). With ``augment`` each training batch is
relabelled by a random answer-preserving symmetry (see
``matrixgen.symmetry``) so the student cannot memorize a pool by its
incidental layouts and levels.
"""
from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .errors import EmptyCategory, EmptyPool
from .matrixgen import CategorySpec, GeneratorConfig, encode_puzzle, generate_puzzle
from .matrixgen.symmetry import augment_encoded
from .student import LenConfig, LogicEmbeddingNetwork, type_targets
from .teacher import DdpgConfig, DdpgTeacher, StepRecord, Transition, build_state, write_action_log
from .tensor import Adam, dumps_checkpoint

SPLITS = {"train": 0, "val": 1, "test": 2}
EVAL_CHUNK = 100

PRESETS = {
    "d1": CategorySpec(("and:shape:type",), name="D1"),
    "d2": CategorySpec(("and:shape:size",), name="D2"),
    "d3": CategorySpec(("and:shape:type",), distracting=(("shape", "size"),), name="D3"),
    "d4": CategorySpec(("and:shape:size",), distracting=(("shape", "type"),), name="D4"),
    "progression-size": CategorySpec(("progression:shape:size",), name="progression-size"),
}
PRESET_GROUPS = {
    "clean": ("d1", "d2"),
    "distracted": ("d3", "d4"),
    "table1": ("d1", "d2", "d3", "d4"),
    "progression-size": ("progression-size",),
}


def preset_categories(name):
    if name in PRESET_GROUPS:
        return [PRESETS[k] for k in PRESET_GROUPS[name]]
    if name in PRESETS:
        return [PRESETS[name]]
    raise KeyError(f"unknown preset {name!r}; choose from {sorted(set(PRESETS) | set(PRESET_GROUPS))}")


# schedules ------------------------------------------------------------------

@dataclass(frozen=True)
class Phase:
    mixture: tuple
    steps: int
    label: str


@dataclass(frozen=True)
class Schedule:
    phases: tuple

    def __post_init__(self):
        if not self.phases:
            raise ValueError("a schedule needs at least one phase")
        for p in self.phases:
            w = np.asarray(p.mixture, dtype=np.float64)
            if p.steps <= 0 or (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError(f"phase {p.label!r} needs positive steps and weights summing to 1")

    @property
    def total_steps(self):
        return sum(p.steps for p in self.phases)

    def phase_at(self, step):
        """Index of the phase that trains optimizer step ``step`` (0-based)."""
        for i, p in enumerate(self.phases):
            if step < p.steps:
                return i
            step -= p.steps
        return len(self.phases) - 1

    def boundaries(self):
        return [sum(p.steps for p in self.phases[:i]) for i in range(1, len(self.phases))]


def parse_schedule(text, n_classes, total_steps):
    """Parse ``"1->2->1+2"``: 1-based classes, ``+`` mixes equally, ``->`` orders phases.

    The step budget is split equally between phases; leftover steps go to
    the earliest phases.
    """
    parts = [p.strip() for p in text.split("->")]
    if not all(parts):
        raise ValueError(f"malformed schedule {text!r}")
    if total_steps < len(parts):
        raise ValueError(f"{total_steps} steps cannot cover {len(parts)} phases")
    base, extra = divmod(total_steps, len(parts))
    phases = []
    for i, part in enumerate(parts):
        try:
            members = sorted({int(tok) for tok in part.split("+")})
        except ValueError:
            raise ValueError(f"malformed schedule phase {part!r}") from None
        if any(not 1 <= m <= n_classes for m in members):
            raise ValueError(f"phase {part!r} references a class outside 1..{n_classes}")
        mixture = np.zeros(n_classes)
        mixture[[m - 1 for m in members]] = 1.0 / len(members)
        phases.append(Phase(tuple(mixture), base + (1 if i < extra else 0), part))
    return Schedule(tuple(phases))


# pools ----------------------------------------------------------------------

def puzzle_seed(data_seed, split, category, index):
    """Generator seed of one pool entry; distinct splits never share a seed."""
    if not 0 <= index < 1 << 20 or not 0 <= category < 1 << 8:
        raise ValueError("pool index or category out of range")
    return (int(data_seed) & 0xFFFFFFFF) << 32 | SPLITS[split] << 28 | category << 20 | index


@dataclass
class Pool:
    """Encoded puzzles of one split, grouped by category."""

    x: list
    answers: list
    seeds: list
    types: list = field(default_factory=list)

    @property
    def sizes(self):
        return [len(a) for a in self.answers]

    def __len__(self):
        return sum(self.sizes)


def build_pool(generator, split, per_class, data_seed, taxonomy_targets=False):
    xs, ans, seeds, types = [], [], [], []
    for c in range(generator.n_categories):
        puzzles = [generate_puzzle(generator, c, puzzle_seed(data_seed, split, c, i)) for i in range(per_class)]
        xs.append(np.stack([encode_puzzle(p) for p in puzzles]) if puzzles else np.zeros((0, 16, 0), np.uint8))
        ans.append(np.array([p.answer_index for p in puzzles], dtype=np.int64))
        seeds.append(np.array([p.seed for p in puzzles], dtype=np.uint64))
        if taxonomy_targets:
            types.append(type_targets(puzzles, generator.taxonomy))
    return Pool(xs, ans, seeds, types)


def _check_action(action):
    action = np.asarray(action, dtype=np.float64)
    if action.ndim != 1 or (action < -1e-12).any() or abs(action.sum() - 1.0) > 1e-6:
        raise ValueError(f"action must lie on the probability simplex, got {action}")
    return np.clip(action, 0.0, None) / np.clip(action, 0.0, None).sum()


def sample_indices(action, sizes, B, rng):
    """B draws: class ~ Categorical(action), then an index uniform within that class."""
    action = _check_action(action)
    sizes = np.asarray(sizes)
    if len(sizes) != len(action):
        raise ValueError(f"{len(action)} action entries for {len(sizes)} categories")
    empty = (action > 0) & (sizes == 0)
    if empty.any():
        raise EmptyCategory(f"action puts mass on empty categories {np.flatnonzero(empty).tolist()}")
    classes = rng.choice(len(action), size=B, p=action)
    return classes, rng.integers(0, sizes[classes])


def sample_batch(action, datasets, B, rng):
    """B puzzles drawn from ``datasets`` (one sequence per category) per ``action``."""
    classes, idx = sample_indices(action, [len(d) for d in datasets], B, rng)
    return [datasets[c][i] for c, i in zip(classes, idx)]


# evaluation -----------------------------------------------------------------

@dataclass
class EvalResult:
    accuracy: float
    class_accuracy: np.ndarray
    class_counts: np.ndarray
    class_loss: np.ndarray
    class_prob_correct: np.ndarray
    correct: np.ndarray


def evaluate(student, pool):
    """Per-class and overall accuracy (argmax score == answer) on a pool."""
    if len(pool) == 0:
        raise EmptyPool("cannot evaluate on an empty pool")
    C = len(pool.x)
    acc, loss, prob, counts, correct = np.zeros(C), np.zeros(C), np.zeros(C), np.zeros(C), []
    for c in range(C):
        n = len(pool.answers[c])
        counts[c] = n
        if n == 0:
            continue
        hits, nll, pc = [], [], []
        for start in range(0, n, EVAL_CHUNK):
            out = student.forward(pool.x[c][start:start + EVAL_CHUNK])
            y = pool.answers[c][start:start + EVAL_CHUNK]
            p = out.choice_probs.data[np.arange(len(y)), y]
            hits.append(out.prediction == y)
            pc.append(p)
            nll.append(-np.log(np.maximum(p, 1e-300)))
        hits = np.concatenate(hits)
        acc[c], loss[c], prob[c] = hits.mean(), np.concatenate(nll).mean(), np.concatenate(pc).mean()
        correct.append(hits)
    correct = np.concatenate(correct)
    return EvalResult(float(correct.mean()), acc, counts, loss, prob, correct)


# runs -----------------------------------------------------------------------

@dataclass
class RunConfig:
    generator: GeneratorConfig = field(default_factory=lambda: GeneratorConfig(categories=preset_categories("distracted")))
    student: LenConfig = field(default_factory=LenConfig)
    teacher: DdpgConfig | None = None
    mode: str = "uniform"
    schedule: str | None = None
    batch: int = 32
    lr: float = 1e-3
    teacher_interval: int = 10
    total_steps: int = 1000
    train_per_class: int = 2000
    val_per_class: int = 200
    test_per_class: int = 200
    seed: int = 0
    data_seed: int | None = None
    stop_accuracy: float | None = None
    augment: bool = True

    def __post_init__(self):
        if self.mode not in ("frar", "uniform", "schedule"):
            raise ValueError(f"mode must be frar, uniform or schedule, got {self.mode!r}")
        if self.mode == "schedule" and not self.schedule:
            raise ValueError("schedule mode needs a schedule string")
        if self.batch <= 0 or self.total_steps <= 0 or self.teacher_interval <= 0:
            raise ValueError("batch, total_steps and teacher_interval must be positive")
        if self.generator.n_categories == 0:
            raise ValueError("the generator needs at least one category")
        C = self.generator.n_categories
        if self.teacher is None:
            self.teacher = DdpgConfig(n_classes=C, episode_length=self.n_intervals)
        if self.teacher.n_classes != C:
            raise ValueError(f"teacher has {self.teacher.n_classes} classes, generator has {C}")
        if self.student.beta > 0:
            self.student = replace(self.student, n_types=len(_taxonomy_combos(self.generator)))
        if self.mode == "schedule":
            parse_schedule(self.schedule, C, self.total_steps)

    @property
    def n_intervals(self):
        return -(-self.total_steps // self.teacher_interval)

    @property
    def resolved_data_seed(self):
        return self.seed if self.data_seed is None else self.data_seed

    def seeds(self):
        """Independent streams for model init, batch sampling and the teacher."""
        s = np.random.SeedSequence(self.seed).generate_state(3)
        return {"model": int(s[0]), "sampling": int(s[1]), "teacher": int(s[2]), "data": self.resolved_data_seed}

    def to_json(self):
        return _jsonable(asdict(self))


def _taxonomy_combos(generator):
    from .matrixgen import enumerate_combinations
    return enumerate_combinations(generator.taxonomy)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "value"):
        return obj.value
    if isinstance(obj, np.generic):
        return obj.item()
    if obj.__class__.__name__ == "Combination":
        return str(obj)
    return obj


@dataclass
class MetricsRecord:
    step: int
    phase: str
    action: np.ndarray
    train_loss: np.ndarray
    val_accuracy: np.ndarray
    accuracy: float
    reward: float


def metrics_header(n_classes):
    return (["step", "phase"] + [f"a{c}" for c in range(n_classes)]
            + [f"train_loss{c}" for c in range(n_classes)] + [f"val_acc{c}" for c in range(n_classes)]
            + ["accuracy", "reward"])


def metrics_row(rec):
    return ([rec.step, rec.phase] + [repr(float(v)) for v in rec.action]
            + [repr(float(v)) for v in rec.train_loss] + [repr(float(v)) for v in rec.val_accuracy]
            + [repr(float(rec.accuracy)), repr(float(rec.reward))])


def dumps_metrics(records, n_classes):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(metrics_header(n_classes))
    w.writerows(metrics_row(r) for r in records)
    return buf.getvalue()


@dataclass
class RunResult:
    metrics: list
    test: EvalResult
    student: LogicEmbeddingNetwork
    teacher: DdpgTeacher | None
    actions: list
    best_val_accuracy: float
    steps_run: int
    pools: dict
    manifest: dict

    @property
    def test_accuracy(self):
        return self.test.accuracy

    def student_checkpoint(self):
        return dumps_checkpoint(self.student.state_dict())


def build_pools(config):
    data_seed = config.resolved_data_seed
    need_types = config.student.beta > 0
    return {
        "train": build_pool(config.generator, "train", config.train_per_class, data_seed, need_types),
        "val": build_pool(config.generator, "val", config.val_per_class, data_seed),
        "test": build_pool(config.generator, "test", config.test_per_class, data_seed),
    }


def _train_interval(student, opt, pools, mixture_at, steps, start, config, rng):
    """Run ``steps`` optimizer steps; per-class mean loss and counts over the interval."""
    C = config.generator.n_categories
    train = pools["train"]
    combos = [cat.combos for cat in config.generator.categories]
    loss_sum, counts, total, n = np.zeros(C), np.zeros(C), 0.0, 0
    for k in range(steps):
        classes, idx = sample_indices(mixture_at(start + k), train.sizes, config.batch, rng)
        x = np.stack([train.x[c][i] for c, i in zip(classes, idx)])
        if config.augment:
            x = augment_encoded(x, [combos[c] for c in classes], rng)
        y = np.array([train.answers[c][i] for c, i in zip(classes, idx)])
        types = None
        if config.student.beta > 0:
            types = np.stack([train.types[c][i] for c, i in zip(classes, idx)])
        opt.zero_grad()
        out = student.forward(x)
        per_sample = student.loss(out, y, types, reduction="none")
        loss = per_sample.mean()
        loss.backward()
        opt.step()
        np.add.at(loss_sum, classes, per_sample.data)
        np.add.at(counts, classes, 1)
        total += loss.item()
        n += 1
    return loss_sum, counts, total / max(n, 1)


def run(config, pools=None, log=None):
    """Train one student under ``config.mode``; returns metrics, test result and models."""
    started = time.time()
    seeds = config.seeds()
    C = config.generator.n_categories
    pools = pools or build_pools(config)
    student = LogicEmbeddingNetwork(config.student, seed=seeds["model"])
    opt = Adam(student.parameters(), config.lr)
    rng = np.random.default_rng(seeds["sampling"])
    teacher = DdpgTeacher(config.teacher, seed=seeds["teacher"]) if config.mode == "frar" else None
    schedule = parse_schedule(config.schedule, C, config.total_steps) if config.mode == "schedule" else None

    history, metrics, actions = [], [], []
    last_loss = np.zeros(C)
    state = build_state(history, 0, config.teacher)
    best, done = 0.0, 0
    uniform = np.full(C, 1.0 / C)
    for t in range(config.n_intervals):
        steps = min(config.teacher_interval, config.total_steps - done)
        if teacher is not None:
            action = teacher.select_action(state, explore=True)
            mixture_at, label = (lambda _s, a=action: a), "teacher"
        elif schedule is not None:
            mixture_at = lambda s: schedule.phases[schedule.phase_at(s)].mixture  # noqa: E731
            label = schedule.phases[schedule.phase_at(done)].label
            action = np.asarray(mixture_at(done))
        else:
            action, mixture_at, label = uniform, (lambda _s: uniform), "uniform"
        loss_sum, counts, mean_loss = _train_interval(student, opt, pools, mixture_at, steps, done, config, rng)
        if schedule is not None:
            counts_by_phase = {schedule.phase_at(s) for s in range(done, done + steps)}
            label = "|".join(schedule.phases[i].label for i in sorted(counts_by_phase))
        done += steps
        seen = counts > 0
        last_loss = np.where(seen, loss_sum / np.maximum(counts, 1), last_loss)
        ev = evaluate(student, pools["val"])
        r = ev.accuracy
        history.append(StepRecord(last_loss.copy(), ev.class_accuracy, ev.class_loss, ev.class_prob_correct,
                                  counts, np.asarray(action, dtype=np.float64), mean_loss))
        terminal = t == config.n_intervals - 1
        next_state = build_state(history, t + 1, config.teacher)
        if teacher is not None:
            stored = r if terminal or not config.teacher.terminal_reward_only else 0.0
            teacher.observe(Transition(state, np.asarray(action), stored, next_state, terminal))
            teacher.update()
        state = next_state
        actions.append((done, np.asarray(action, dtype=np.float64), r))
        metrics.append(MetricsRecord(done, label, np.asarray(action, dtype=np.float64), last_loss.copy(),
                                     ev.class_accuracy, r, r))
        if schedule is not None and done in schedule.boundaries():
            nxt = schedule.phases[schedule.phase_at(done)]
            metrics.append(MetricsRecord(done, nxt.label, np.asarray(nxt.mixture), last_loss.copy(),
                                         ev.class_accuracy, r, r))
        best = max(best, r)
        if log is not None:
            log(f"step {done} {label} val {r:.3f} loss {mean_loss:.3f}")
        if config.stop_accuracy is not None and r >= config.stop_accuracy:
            break
    test = evaluate(student, pools["test"])
    manifest = {
        "config": config.to_json(),
        "seeds": seeds,
        "steps_run": done,
        "test_accuracy": test.accuracy,
        "best_val_accuracy": best,
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    return RunResult(metrics, test, student, teacher, actions, best, done, pools, manifest)


def run_frar(config, pools=None, log=None):
    return run(replace(config, mode="frar"), pools, log)


def run_schedule(config, schedule, pools=None, log=None):
    return run(replace(config, mode="schedule", schedule=schedule), pools, log)


def run_uniform(config, pools=None, log=None):
    return run(replace(config, mode="uniform"), pools, log)


# sweeps ---------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    mean: float
    divergence: float
    seed: int
    accuracy: float


def _sweep_cell(args):
    base, mean, divergence, seed = args
    gen = replace(base.generator, distraction_mean=mean, distraction_divergence=divergence)
    cfg = replace(base, generator=gen, mode="uniform", seed=seed, data_seed=None, teacher=None)
    return SweepRow(mean, divergence, seed, run(cfg).test_accuracy)


def run_sweep(base_config, means, divergences, seeds, jobs=1):
    """Final test accuracy of a uniformly trained student per (mean, divergence, seed)."""
    if not means or not divergences or not seeds:
        raise ValueError("means, divergences and seeds must be nonempty")
    cells = [(base_config, m, d, s) for m in means for d in divergences for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_sweep_cell, cells))
    return [_sweep_cell(c) for c in cells]


def dumps_sweep(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mean", "divergence", "seed", "accuracy"])
    for r in rows:
        w.writerow([repr(float(r.mean)), repr(float(r.divergence)), r.seed, repr(float(r.accuracy))])
    return buf.getvalue()


def write_run(result, out_dir):
    """Metrics, checkpoints, action log and manifest of one run into ``out_dir``."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    C = len(result.test.class_accuracy)
    (out / "metrics.csv").write_text(dumps_metrics(result.metrics, C))
    (out / "student.ckpt").write_bytes(result.student_checkpoint())
    write_action_log(out / "actions.csv", result.actions)
    files = ["metrics.csv", "student.ckpt", "actions.csv"]
    if result.teacher is not None:
        (out / "teacher.ckpt").write_bytes(result.teacher.dumps())
        files.append("teacher.ckpt")
    manifest = dict(result.manifest, files=files)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def config_fields(cls):
    return [f.name for f in fields(cls)]
