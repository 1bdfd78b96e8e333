"""Command-line entry point: ``ravenlab {generate,train,eval,sweep,export-embeddings}``.

Every command reads an optional JSON config; flags override its keys. The
fully resolved config is written to ``manifest.json`` next to the outputs,
first with ``"status": "incomplete"`` and rewritten as ``"complete"`` once
every output is on disk.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from collections import Counter
from dataclasses import fields
from pathlib import Path

import numpy as np

from .errors import RavenLabError
from .harness import (
    RunConfig,
    dumps_sweep,
    preset_categories,
    puzzle_seed,
    run,
    run_sweep,
    write_run,
)
from .matrixgen import GeneratorConfig, generate_puzzle, read_dataset, write_dataset
from .student import LenConfig, LogicEmbeddingNetwork, as_batch, export_embeddings
from .teacher import DdpgConfig
from .tensor import load_checkpoint

DEFAULTS = {
    # generator
    "taxonomy": "pgm",
    "categories": "distracted",
    "distraction_mean": 0.0,
    "distraction_divergence": 0.0,
    "direction": "row",
    "choices": 8,
    # training run
    "teacher": "uniform",
    "schedule": None,
    "batch": 32,
    "lr": 1e-3,
    "teacher_interval": 10,
    "steps": 1000,
    "train_per_class": 2000,
    "val_per_class": 200,
    "test_per_class": 200,
    "stop_accuracy": None,
    "augment": True,
    "student": {},
    "ddpg": {},
    # generate
    "per_class": 100,
    # sweep
    "sweep_means": [0.0, 1.0, 2.0],
    "sweep_divergences": [0.0],
    "sweep_seeds": [0, 1, 2],
    # common
    "seed": 0,
    "data_seed": None,
    "out": "out",
    "jobs": 1,
    "verbosity": 1,
}

FLAG_KEYS = {
    "seed": "seed", "out": "out", "jobs": "jobs", "steps": "steps", "batch": "batch",
    "distraction_mean": "distraction_mean", "distraction_divergence": "distraction_divergence",
    "schedule": "schedule", "teacher": "teacher", "per_class": "per_class",
}


class CliError(Exception):
    pass


def _check_keys(obj, allowed, where):
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise CliError(f"unknown {where} keys: {', '.join(unknown)}")


def resolve_config(path, args):
    """Defaults, then the JSON file, then command-line flags."""
    cfg = json.loads(json.dumps(DEFAULTS))
    if path:
        try:
            loaded = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(loaded, dict):
            raise CliError(f"{path}: config must be a JSON object")
        _check_keys(loaded, DEFAULTS, "config")
        _check_keys(loaded.get("student", {}), [f.name for f in fields(LenConfig)], "student")
        _check_keys(loaded.get("ddpg", {}), [f.name for f in fields(DdpgConfig)], "ddpg")
        cfg.update(loaded)
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg[key] = value
    if cfg["teacher"] not in ("frar", "uniform", "schedule"):
        raise CliError(f"teacher must be frar, uniform or schedule, got {cfg['teacher']!r}")
    return cfg


def generator_config(cfg):
    cats = cfg["categories"]
    categories = preset_categories(cats) if isinstance(cats, str) else cats
    return GeneratorConfig(
        taxonomy=cfg["taxonomy"], categories=categories, distraction_mean=cfg["distraction_mean"],
        distraction_divergence=cfg["distraction_divergence"], choices=cfg["choices"],
        direction=cfg["direction"], rng_seed=cfg["seed"],
    )


def run_config(cfg):
    gen = generator_config(cfg)
    teacher = None
    if cfg["ddpg"]:
        n_intervals = -(-cfg["steps"] // cfg["teacher_interval"])
        teacher = DdpgConfig(**{"n_classes": gen.n_categories, "episode_length": n_intervals, **cfg["ddpg"]})
    return RunConfig(
        generator=gen, student=LenConfig(**cfg["student"]), teacher=teacher, mode=cfg["teacher"],
        schedule=cfg["schedule"], batch=cfg["batch"], lr=cfg["lr"], teacher_interval=cfg["teacher_interval"],
        total_steps=cfg["steps"], train_per_class=cfg["train_per_class"], val_per_class=cfg["val_per_class"],
        test_per_class=cfg["test_per_class"], seed=cfg["seed"], data_seed=cfg["data_seed"],
        stop_accuracy=cfg["stop_accuracy"], augment=cfg["augment"],
    )


class Manifest:
    """Written before work starts and again on completion."""

    def __init__(self, out_dir, command, cfg):
        self.path = Path(out_dir) / "manifest.json"
        self.data = {"command": command, "config": cfg, "status": "incomplete", "files": []}
        self.started = time.time()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.write()

    def write(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True, default=_json_default) + "\n")

    def complete(self, **extra):
        self.data.update(extra)
        self.data["status"] = "complete"
        self.data["wall_clock_seconds"] = round(time.time() - self.started, 3)
        self.write()

    def fail(self, message):
        self.data["error"] = message
        self.write()


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def _say(cfg, msg):
    if cfg["verbosity"] > 0:
        print(msg)


# commands -------------------------------------------------------------------

def cmd_generate(cfg, manifest):
    gen = generator_config(cfg)
    puzzles = []
    for c in range(gen.n_categories):
        puzzles += [generate_puzzle(gen, c, int(s)) for s in _generate_seeds(cfg["seed"], c, cfg["per_class"])]
    path = Path(cfg["out"]) / "dataset.jsonl"
    write_dataset(puzzles, path)
    counts = Counter(p.category for p in puzzles)
    distraction = np.array([len(p.distracting) for p in puzzles], dtype=np.float64)
    summary = {
        "puzzles": len(puzzles),
        "per_category": {gen.categories[c].label: counts[c] for c in range(gen.n_categories)},
        "mean_distraction": float(distraction.mean()) if len(puzzles) else 0.0,
    }
    for label, n in summary["per_category"].items():
        _say(cfg, f"{label}: {n}")
    _say(cfg, f"mean distraction count: {summary['mean_distraction']:.4f}")
    manifest.complete(files=["dataset.jsonl"], summary=summary)


def _generate_seeds(seed, category, n):
    return [puzzle_seed(seed, "train", category, i) for i in range(n)]


def cmd_train(cfg, manifest):
    config = run_config(cfg)
    log = (lambda m: print(m)) if cfg["verbosity"] > 1 else None
    result = run(config, log=log)
    write_run(result, cfg["out"])
    manifest.data["run"] = result.manifest
    manifest.complete(files=[f for f in ("metrics.csv", "student.ckpt", "actions.csv", "teacher.ckpt")
                             if (Path(cfg["out"]) / f).exists()],
                      test_accuracy=result.test_accuracy)
    _say(cfg, f"test accuracy {result.test_accuracy:.4f} after {result.steps_run} steps")


def _load_student(cfg, checkpoint):
    ckpt = Path(checkpoint)
    student_cfg = dict(cfg["student"])
    sibling = ckpt.parent / "manifest.json"
    if not student_cfg and sibling.exists():
        stored = json.loads(sibling.read_text()).get("config", {})
        student_cfg = stored.get("student", {})
    model = LogicEmbeddingNetwork(LenConfig(**student_cfg))
    try:
        model.load_state_dict(load_checkpoint(ckpt))
    except (KeyError, ValueError) as exc:
        raise CliError(f"{ckpt}: checkpoint does not fit the student config ({exc})") from None
    return model


def cmd_eval(cfg, manifest, checkpoint, dataset):
    model = _load_student(cfg, checkpoint)
    puzzles = read_dataset(dataset)
    if not puzzles:
        raise CliError(f"{dataset}: no puzzles")
    pred = np.concatenate([model.forward(as_batch(puzzles[i:i + 100])).prediction
                           for i in range(0, len(puzzles), 100)])
    answers = np.array([p.answer_index for p in puzzles])
    cats = np.array([p.category for p in puzzles])
    report = {"overall": float(np.mean(pred == answers)), "n": len(puzzles),
              "per_category": {str(c): float(np.mean(pred[cats == c] == answers[cats == c]))
                               for c in sorted(set(cats.tolist()))}}
    (Path(cfg["out"]) / "eval.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _say(cfg, f"accuracy {report['overall']:.4f} on {report['n']} puzzles")
    for c, acc in report["per_category"].items():
        _say(cfg, f"  category {c}: {acc:.4f}")
    manifest.complete(files=["eval.json"], report=report)


def cmd_sweep(cfg, manifest):
    base = run_config({**cfg, "teacher": "uniform"})
    rows = run_sweep(base, list(cfg["sweep_means"]), list(cfg["sweep_divergences"]),
                     list(cfg["sweep_seeds"]), jobs=cfg["jobs"])
    (Path(cfg["out"]) / "sweep.csv").write_text(dumps_sweep(rows))
    for r in rows:
        _say(cfg, f"mean {r.mean} divergence {r.divergence} seed {r.seed}: {r.accuracy:.4f}")
    manifest.complete(files=["sweep.csv"], rows=len(rows))


def cmd_export(cfg, manifest, checkpoint, dataset):
    model = _load_student(cfg, checkpoint)
    puzzles = read_dataset(dataset)
    n = export_embeddings(model, puzzles, Path(cfg["out"]) / "embeddings.csv")
    _say(cfg, f"wrote {n} embeddings")
    manifest.complete(files=["embeddings.csv"], rows=n)


# parser ---------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="ravenlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jobs", type=int, help="worker processes for sweeps")
        p.add_argument("--distraction-mean", type=float, dest="distraction_mean")
        p.add_argument("--distraction-divergence", type=float, dest="distraction_divergence")
        return p

    def training(p):
        p.add_argument("--steps", type=int, help="optimizer steps per student")
        p.add_argument("--batch", type=int, help="puzzles per batch")
        p.add_argument("--schedule", help='phase trajectory such as "1->2->1+2"')
        p.add_argument("--teacher", choices=["frar", "uniform", "schedule"])
        return p

    g = common(sub.add_parser("generate", help="write a puzzle dataset"))
    g.add_argument("--per-class", type=int, dest="per_class", help="puzzles per category")
    training(common(sub.add_parser("train", help="train a student")))
    for name, helptext in (("eval", "evaluate a checkpoint"), ("export-embeddings", "export puzzle embeddings")):
        p = common(sub.add_parser(name, help=helptext))
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--dataset", required=True)
    training(common(sub.add_parser("sweep", help="distraction mean/divergence sweep")))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    manifest = None
    try:
        cfg = resolve_config(args.config, args)
        if cfg["seed"] < 0 or cfg["seed"] >= 1 << 64:
            raise CliError("--seed must be an unsigned 64-bit integer")
        manifest = Manifest(cfg["out"], args.command, cfg)
        if args.command == "generate":
            cmd_generate(cfg, manifest)
        elif args.command == "train":
            cmd_train(cfg, manifest)
        elif args.command == "eval":
            cmd_eval(cfg, manifest, args.checkpoint, args.dataset)
        elif args.command == "sweep":
            cmd_sweep(cfg, manifest)
        else:
            cmd_export(cfg, manifest, args.checkpoint, args.dataset)
    except (CliError, RavenLabError, ValueError, KeyError, TypeError, OSError) as exc:
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        if manifest is not None:
            manifest.fail(message)
        print(f"ravenlab {args.command}: error: {message}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
