"""Puzzle generation: rule grids, distraction, foils and the validator."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import FoilCollision, GenerationExhausted, NoValidThird
from .domains import (
    N_LINE_TYPES,
    N_SLOTS,
    STREAM_ATTRIBUTES,
    Attribute,
    Combination,
    Direction,
    Rule,
    Stream,
    Taxonomy,
    domain,
    enumerate_combinations,
    is_set_valued,
)
from .panels import PanelSymbolic, Unrealizable, read_assignment, read_attribute, realize
from .rules import PROGRESSION_STEPS, RuleSpec, rule_holds, sample_grid

SHAPE_POSITION = (Stream.SHAPE, Attribute.POSITION)
SHAPE_NUMBER = (Stream.SHAPE, Attribute.NUMBER)
LINE_TYPE = (Stream.LINE, Attribute.TYPE)
LINE_COLOR = (Stream.LINE, Attribute.COLOR)
_LEVEL_ATTRIBUTES = (Attribute.SIZE, Attribute.TYPE, Attribute.COLOR)


@dataclass(frozen=True)
class CategorySpec:
    """One puzzle class: the rules it instantiates plus attributes always randomized."""

    combos: tuple
    distracting: tuple = ()
    name: str = ""

    def __post_init__(self):
        combos = tuple(c if isinstance(c, Combination) else Combination.parse(c) for c in self.combos)
        distracting = tuple(_attribute_key(s, a) for s, a in self.distracting)
        object.__setattr__(self, "combos", combos)
        object.__setattr__(self, "distracting", distracting)
        keys = [(c.stream, c.attribute) for c in combos]
        if not combos:
            raise ValueError("a category needs at least one rule")
        if len(set(keys)) != len(keys):
            raise ValueError(f"two rules govern the same attribute in {self.label}")
        for key in distracting:
            domain(*key)
            if key in keys:
                raise ValueError(f"{key[0].name}/{key[1].name} is both governed and distracting")
        if set(distracting) - set(available_distractors(combos)):
            raise ValueError(f"cannot randomize {distracting} alongside {[str(c) for c in combos]}")

    @property
    def label(self):
        return self.name or "+".join(str(c) for c in self.combos)

    @property
    def streams(self):
        return frozenset(c.stream for c in self.combos)


def available_distractors(combos, exclude=()):
    """Non-governed attributes of the active streams that may be randomized."""
    keys = {(c.stream, c.attribute) for c in combos}
    level_sets = {c.stream for c in combos if c.attribute in _LEVEL_ATTRIBUTES and is_set_valued(*_c(c))}
    out = []
    for stream in sorted({c.stream for c in combos}):
        for attr in STREAM_ATTRIBUTES[stream]:
            key = (stream, attr)
            if key in keys or key in exclude:
                continue
            if key == SHAPE_NUMBER and (SHAPE_POSITION in keys or Stream.SHAPE in level_sets):
                continue
            if key == LINE_TYPE and Stream.LINE in level_sets:
                continue
            out.append(key)
    return out


def _attribute_key(stream, attribute):
    """(stream, attribute) from enum members or their lower-case names."""
    stream = Stream[stream.upper()] if isinstance(stream, str) else Stream(stream)
    attribute = Attribute[attribute.upper()] if isinstance(attribute, str) else Attribute(attribute)
    return stream, attribute


def _c(combo):
    return combo.rule, combo.stream, combo.attribute


@dataclass
class GeneratorConfig:
    taxonomy: Taxonomy = Taxonomy.PGM
    categories: list = field(default_factory=list)
    distraction_mean: float = 0.0
    distraction_divergence: float = 0.0
    choices: int = 8
    direction: Direction = Direction.ROW
    rng_seed: int = 0
    max_attempts: int = 100

    def __post_init__(self):
        self.taxonomy = Taxonomy(self.taxonomy)
        self.direction = Direction(self.direction)
        self.categories = [c if isinstance(c, CategorySpec) else CategorySpec(**c) for c in self.categories]
        if self.distraction_mean < 0 or self.distraction_divergence < 0:
            raise ValueError("distraction mean and divergence must be nonnegative")
        if self.choices < 2:
            raise ValueError("need at least two choices")
        legal = set(enumerate_combinations(self.taxonomy))
        for cat in self.categories:
            bad = [str(c) for c in cat.combos if c not in legal]
            if bad:
                raise ValueError(f"{bad} not legal under the {self.taxonomy.value} taxonomy")
            room = len(available_distractors(cat.combos, cat.distracting))
            if self.distraction_mean > room:
                raise ValueError(
                    f"distraction mean {self.distraction_mean} exceeds the {room} free attributes of {cat.label}")

    @property
    def n_categories(self):
        return len(self.categories)


@dataclass(frozen=True)
class PuzzleInstance:
    context: tuple
    choices: tuple
    answer_index: int
    rules: tuple
    category: int
    distracting: tuple
    seed: int

    @property
    def answer(self):
        return self.choices[self.answer_index]


@dataclass
class PuzzleDraft:
    """Per-panel attribute values before realization (row-major, answer last)."""

    rules: list
    streams: frozenset
    values: list
    slot_order: tuple
    distracting: list = field(default_factory=list)

    @property
    def governed(self):
        return {r.key for r in self.rules}


def _make_rules(cat, direction, rng):
    rules = []
    for combo in cat.combos:
        param = 0
        if combo.rule == Rule.PROGRESSION:
            param = int(PROGRESSION_STEPS[rng.integers(len(PROGRESSION_STEPS))])
        elif combo.rule == Rule.ARITHMETIC:
            param = 1 if rng.random() < 0.5 else -1
        rules.append(RuleSpec(combo.rule, combo.stream, combo.attribute, direction, param))
    return rules


def draft_puzzle(config, category, rng):
    """Sample rule grids and constant background values for one puzzle."""
    cat = config.categories[category]
    rules = _make_rules(cat, config.direction, rng)
    grids = {r.key: sample_grid(r, rng) for r in rules}
    level_sets = {r.stream for r in rules if r.attribute in _LEVEL_ATTRIBUTES and r.set_valued}
    base = {}
    if Stream.SHAPE in cat.streams:
        base[SHAPE_NUMBER] = 4 if Stream.SHAPE in level_sets else int(rng.integers(1, 5))
        for attr in _LEVEL_ATTRIBUTES:
            dom = domain(Stream.SHAPE, attr)
            base[(Stream.SHAPE, attr)] = int(rng.integers(dom.lo, dom.hi + 1))
    if Stream.LINE in cat.streams:
        n_lines = 4 if Stream.LINE in level_sets else 2
        base[LINE_TYPE] = frozenset(int(v) for v in rng.choice(N_LINE_TYPES, n_lines, replace=False))
        dom = domain(Stream.LINE, Attribute.COLOR)
        base[LINE_COLOR] = int(rng.integers(dom.lo, dom.hi + 1))
    values = []
    for i in range(9):
        panel = {}
        for stream in sorted(cat.streams):
            for attr in STREAM_ATTRIBUTES[stream]:
                key = (stream, attr)
                if key in grids:
                    panel[key] = grids[key][i]
                elif key in base:
                    panel[key] = base[key]
        if SHAPE_POSITION in panel:
            panel[SHAPE_NUMBER] = len(panel[SHAPE_POSITION])
        values.append(panel)
    draft = PuzzleDraft(rules, cat.streams, values, tuple(int(s) for s in rng.permutation(N_SLOTS)))
    return _randomize(draft, list(cat.distracting), rng)


def _randomize(draft, keys, rng):
    # counts first so that a random layout can honour the panel's count
    keys = sorted(keys, key=lambda k: (k != SHAPE_NUMBER, k))
    for key in keys:
        dom = domain(*key)
        for panel in draft.values:
            if key == SHAPE_NUMBER:
                panel[key] = int(rng.integers(dom.lo, dom.hi + 1))
            elif key == SHAPE_POSITION:
                panel[key] = frozenset(int(s) for s in rng.choice(N_SLOTS, panel[SHAPE_NUMBER], replace=False))
            elif key == LINE_TYPE:
                k = int(rng.integers(1, 4))
                panel[key] = frozenset(int(v) for v in rng.choice(N_LINE_TYPES, k, replace=False))
            else:
                panel[key] = int(rng.integers(dom.lo, dom.hi + 1))
        draft.distracting.append(key)
    return draft


def sample_distraction_count(mean, divergence, available, rng):
    """Rounded Gaussian draw clamped to ``[0, available]``; deterministic when divergence is 0."""
    x = mean if divergence == 0 else rng.normal(mean, divergence)
    return int(min(max(math.floor(x + 0.5), 0), available))


def inject_distraction(draft, mean, divergence, rng):
    """Randomize a sampled number of free attributes independently per panel."""
    if mean < 0 or divergence < 0:
        raise ValueError("distraction mean and divergence must be nonnegative")
    draft = copy.deepcopy(draft)
    combos = [r.combination for r in draft.rules]
    free = available_distractors(combos, draft.distracting)
    k = sample_distraction_count(mean, divergence, len(free), rng)
    if k == 0:
        return draft
    picked = sorted(rng.choice(len(free), size=k, replace=False))
    return _randomize(draft, [free[i] for i in picked], rng)


def realize_draft(draft):
    panels = []
    for values in draft.values:
        assignment = dict(values)
        if Stream.SHAPE in draft.streams and SHAPE_POSITION not in assignment:
            assignment[SHAPE_POSITION] = frozenset(draft.slot_order[:assignment[SHAPE_NUMBER]])
        panels.append(realize(assignment))
    return panels


def matrix_valid(context, candidate, rules):
    """True when every rule holds with ``candidate`` in the bottom-right cell."""
    panels = (*context, candidate)
    for spec in rules:
        grid = [read_attribute(p, spec.stream, spec.attribute, as_set=spec.set_valued) for p in panels]
        if not rule_holds(spec, grid):
            return False
    return True


def _toggle(current, dom, rng, limit=None):
    for _ in range(50):
        level = int(rng.integers(dom.lo, dom.hi + 1))
        new = current ^ {level}
        if new and (limit is None or len(new) <= limit):
            return frozenset(new)
    return current


def _perturb(assignment, key, rng, as_set):
    new = dict(assignment)
    dom = domain(*key)
    if key == SHAPE_NUMBER:
        slots = set(new[SHAPE_POSITION])
        n = len(slots)
        target = int(rng.choice([v for v in dom.levels if v != n]))
        free = sorted(set(range(N_SLOTS)) - slots)
        if target > n:
            slots |= set(int(s) for s in rng.choice(free, target - n, replace=False))
        else:
            slots -= set(int(s) for s in rng.choice(sorted(slots), n - target, replace=False))
        new[SHAPE_POSITION] = frozenset(slots)
        return new
    current = new[key]
    if dom.set_valued or as_set or isinstance(current, frozenset):
        if not isinstance(current, frozenset):
            current = frozenset([current])
        new[key] = _toggle(current, dom, rng)
    else:
        new[key] = int(rng.choice([v for v in dom.levels if v != current]))
    return new


def make_choices(context, answer, rules, rng, n_choices=8, budget=100):
    """Answer plus ``n_choices - 1`` foils, shuffled; returns (choices, answer_index).

    Each foil perturbs one governed attribute of the answer (after a quarter
    of the budget, a second non-governed attribute as well) and must break at
    least one rule and differ from every other choice.
    """
    set_keys = {r.key for r in rules if r.set_valued}
    base = read_assignment(answer, set_keys)
    governed = sorted({r.key for r in rules})
    others = sorted(k for k in base if k not in governed)
    if SHAPE_POSITION in base and SHAPE_NUMBER not in governed and SHAPE_POSITION not in governed:
        others.append(SHAPE_NUMBER)
    seen = {answer}
    foils = []
    for _ in range(n_choices - 1):
        for attempt in range(budget):
            key = governed[int(rng.integers(len(governed)))]
            cand = _perturb(base, key, rng, key in set_keys)
            if attempt >= budget // 4 and others:
                extra = others[int(rng.integers(len(others)))]
                cand = _perturb(cand, extra, rng, False)
            try:
                panel = realize(cand)
            except Unrealizable:
                continue
            if panel in seen or not panel.is_valid() or matrix_valid(context, panel, rules):
                continue
            foils.append(panel)
            seen.add(panel)
            break
        else:
            raise FoilCollision(f"no fresh foil after {budget} perturbations")
    index = int(rng.integers(n_choices))
    choices = tuple(foils[:index]) + (answer,) + tuple(foils[index:])
    return choices, index


def validate_puzzle(puzzle):
    """Brute-force check: the answer completes every rule and no foil does."""
    if len(puzzle.context) != 8 or not 0 <= puzzle.answer_index < len(puzzle.choices):
        return False
    if not all(isinstance(p, PanelSymbolic) and p.is_valid() for p in (*puzzle.context, *puzzle.choices)):
        return False
    if {r.key for r in puzzle.rules} & set(puzzle.distracting):
        return False
    valid = [matrix_valid(puzzle.context, c, puzzle.rules) for c in puzzle.choices]
    return valid[puzzle.answer_index] and sum(valid) == 1


def generate_puzzle(config, category, seed):
    """Deterministic in (config, category, seed); resamples up to ``config.max_attempts`` times."""
    if not 0 <= category < len(config.categories):
        raise IndexError(f"category {category} out of range for {len(config.categories)} categories")
    rng = np.random.default_rng(seed)
    for _ in range(config.max_attempts):
        try:
            draft = draft_puzzle(config, category, rng)
            draft = inject_distraction(draft, config.distraction_mean, config.distraction_divergence, rng)
            panels = realize_draft(draft)
            choices, index = make_choices(panels[:8], panels[8], draft.rules, rng, config.choices)
        except (NoValidThird, Unrealizable, FoilCollision):
            continue
        puzzle = PuzzleInstance(
            context=tuple(panels[:8]),
            choices=choices,
            answer_index=index,
            rules=tuple(draft.rules),
            category=category,
            distracting=tuple(draft.distracting),
            seed=int(seed),
        )
        if validate_puzzle(puzzle):
            return puzzle
    raise GenerationExhausted(f"category {category}, seed {seed}: {config.max_attempts} attempts failed")
