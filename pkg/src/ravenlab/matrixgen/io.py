"""Line-oriented JSON dataset files: one puzzle object per line."""
from __future__ import annotations

import json
from pathlib import Path

from ..errors import FormatError
from .domains import Attribute, Direction, Rule, Stream
from .generator import PuzzleInstance
from .panels import panel_from_json, panel_to_json
from .rules import RuleSpec

KEYS = ("context", "choices", "answer", "rules", "category", "distracting", "seed")


def rule_to_json(spec):
    return {
        "rule": spec.rule.name.lower(),
        "stream": spec.stream.name.lower(),
        "attribute": spec.attribute.name.lower(),
        "direction": spec.direction.value,
        "param": spec.param,
    }


def rule_from_json(obj):
    return RuleSpec(
        Rule[obj["rule"].upper()],
        Stream[obj["stream"].upper()],
        Attribute[obj["attribute"].upper()],
        Direction(obj["direction"]),
        int(obj["param"]),
    )


def puzzle_to_json(puzzle):
    return {
        "context": [panel_to_json(p) for p in puzzle.context],
        "choices": [panel_to_json(p) for p in puzzle.choices],
        "answer": puzzle.answer_index,
        "rules": [rule_to_json(r) for r in puzzle.rules],
        "category": puzzle.category,
        "distracting": [[s.name.lower(), a.name.lower()] for s, a in puzzle.distracting],
        "seed": puzzle.seed,
    }


def puzzle_from_json(obj):
    missing = [k for k in KEYS if k not in obj]
    if missing:
        raise FormatError(f"missing keys {missing}")
    return PuzzleInstance(
        context=tuple(panel_from_json(p) for p in obj["context"]),
        choices=tuple(panel_from_json(p) for p in obj["choices"]),
        answer_index=int(obj["answer"]),
        rules=tuple(rule_from_json(r) for r in obj["rules"]),
        category=int(obj["category"]),
        distracting=tuple((Stream[s.upper()], Attribute[a.upper()]) for s, a in obj["distracting"]),
        seed=int(obj["seed"]),
    )


def dumps_puzzle(puzzle):
    """Canonical single-line form; equal puzzles give equal bytes."""
    return json.dumps(puzzle_to_json(puzzle), separators=(",", ":"))


def write_dataset(puzzles, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for puzzle in puzzles:
            fh.write(dumps_puzzle(puzzle))
            fh.write("\n")


def read_dataset(path):
    puzzles = []
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                puzzles.append(puzzle_from_json(json.loads(line)))
            except FormatError as exc:
                raise FormatError(str(exc), lineno) from None
            except (ValueError, KeyError, TypeError, IndexError) as exc:
                raise FormatError(f"{type(exc).__name__}: {exc}", lineno) from None
    return puzzles
