"""Answer-preserving relabellings of a puzzle, for training-time augmentation.

A relabelling moves every object to a permuted slot, renames the levels of
shape type/size/color, and permutes line types and line colors, applying
the same bijection to all 16 panels. Rules that only compare values for
equality or combine them as sets (constant, xor/or/and, consistent union,
set arithmetic on slots) hold before iff they hold after. Progression and
value arithmetic depend on the order of levels, so attributes they govern
keep the identity map, and so does the slot grid under a position
progression.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import N_LINE_TYPES, N_SLOTS, Attribute, Rule, Stream
from .panels import (
    LINE_WIDTH,
    N_COLOR,
    N_LINE_COLOR,
    N_SIZE,
    N_TYPE,
    SHAPE_DIM,
    SLOT_WIDTH,
    PanelSymbolic,
    ShapeObject,
)

_ORDERED = (Rule.PROGRESSION, Rule.ARITHMETIC)


@dataclass(frozen=True)
class Relabelling:
    slots: tuple
    type: tuple
    size: tuple
    color: tuple
    line_types: tuple
    line_color: tuple

    @classmethod
    def identity(cls):
        return cls(*(tuple(range(n)) for n in (N_SLOTS, N_TYPE, N_SIZE, N_COLOR, N_LINE_TYPES, N_LINE_COLOR)))


def frozen_parts(combos):
    """Names of the ``Relabelling`` fields that must stay the identity for these rules."""
    frozen = set()
    for c in combos:
        if c.rule not in _ORDERED:
            continue
        if c.stream == Stream.SHAPE:
            if c.attribute == Attribute.POSITION and c.rule == Rule.PROGRESSION:
                frozen.add("slots")
            elif c.attribute in (Attribute.TYPE, Attribute.SIZE, Attribute.COLOR):
                frozen.add(c.attribute.name.lower())
        elif c.attribute == Attribute.TYPE:
            frozen.add("line_types")
        else:
            frozen.add("line_color")
    return frozen


def sample_relabelling(combos, rng):
    """Uniformly random relabelling that leaves every rule of ``combos`` intact."""
    frozen = frozen_parts(combos)
    ident = Relabelling.identity()
    parts = {}
    for name, values in vars(ident).items():
        parts[name] = values if name in frozen else tuple(int(v) for v in rng.permutation(len(values)))
    return Relabelling(**parts)


def relabel_panel(panel, m):
    shapes = [None] * N_SLOTS
    for i, obj in enumerate(panel.shapes):
        if obj is not None:
            shapes[m.slots[i]] = ShapeObject(m.type[obj.type], m.size[obj.size], m.color[obj.color])
    lines = [None] * N_LINE_TYPES
    for k, c in enumerate(panel.lines):
        if c is not None:
            lines[m.line_types[k]] = m.line_color[c]
    return PanelSymbolic(tuple(shapes), tuple(lines))


def relabel_puzzle(puzzle, m):
    """Symbolic relabelling; rules and answer index carry over unchanged."""
    from dataclasses import replace
    return replace(
        puzzle,
        context=tuple(relabel_panel(p, m) for p in puzzle.context),
        choices=tuple(relabel_panel(p, m) for p in puzzle.choices),
    )


def encoding_columns(m):
    """Column gather index: ``encode(relabel(p)) == encode(p)[..., cols]``."""
    cols = np.empty(SHAPE_DIM + N_LINE_TYPES * LINE_WIDTH, dtype=np.intp)
    for i in range(N_SLOTS):
        src, dst = i * SLOT_WIDTH, m.slots[i] * SLOT_WIDTH
        cols[dst] = src
        for t in range(N_TYPE):
            cols[dst + 1 + m.type[t]] = src + 1 + t
        for s in range(N_SIZE):
            cols[dst + 1 + N_TYPE + m.size[s]] = src + 1 + N_TYPE + s
        for c in range(N_COLOR):
            cols[dst + 1 + N_TYPE + N_SIZE + m.color[c]] = src + 1 + N_TYPE + N_SIZE + c
    for k in range(N_LINE_TYPES):
        src, dst = SHAPE_DIM + k * LINE_WIDTH, SHAPE_DIM + m.line_types[k] * LINE_WIDTH
        cols[dst] = src
        for c in range(N_LINE_COLOR):
            cols[dst + 1 + m.line_color[c]] = src + 1 + c
    return cols


def augment_encoded(x, combos_per_row, rng):
    """Relabel each encoded puzzle of a (B, P, D) batch independently."""
    out = np.empty_like(x)
    for b in range(len(x)):
        out[b] = x[b][:, encoding_columns(sample_relabelling(combos_per_row[b], rng))]
    return out
