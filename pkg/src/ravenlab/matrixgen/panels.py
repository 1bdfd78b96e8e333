"""Symbolic panels, attribute readout and the fixed-length panel encoding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import DOMAINS, N_LINE_TYPES, N_SLOTS, Attribute, Stream


@dataclass(frozen=True)
class ShapeObject:
    type: int
    size: int
    color: int


@dataclass(frozen=True)
class PanelSymbolic:
    """Nine shape slots (row-major 3x3 grid) plus one optional color per line type."""

    shapes: tuple = (None,) * N_SLOTS
    lines: tuple = (None,) * N_LINE_TYPES

    def __post_init__(self):
        if len(self.shapes) != N_SLOTS or len(self.lines) != N_LINE_TYPES:
            raise ValueError("panel needs 9 shape slots and 6 line slots")

    @property
    def number(self):
        return sum(o is not None for o in self.shapes)

    def is_valid(self):
        for obj in self.shapes:
            if obj is None:
                continue
            for attr, value in ((Attribute.TYPE, obj.type), (Attribute.SIZE, obj.size), (Attribute.COLOR, obj.color)):
                if not DOMAINS[(Stream.SHAPE, attr)].contains(value):
                    return False
        return all(c is None or DOMAINS[(Stream.LINE, Attribute.COLOR)].contains(c) for c in self.lines)


_SHAPE_FIELD = {Attribute.TYPE: "type", Attribute.SIZE: "size", Attribute.COLOR: "color"}


def read_attribute(panel, stream, attribute, as_set=False):
    """Read one attribute off a panel; ``None`` when it is not readable.

    Level attributes read as a single int when every object agrees (or as a
    frozenset of levels when ``as_set``). Position and line type always read
    as frozensets, number as a count.
    """
    if stream == Stream.SHAPE:
        if attribute == Attribute.POSITION:
            occupied = frozenset(i for i, o in enumerate(panel.shapes) if o is not None)
            return occupied or None
        if attribute == Attribute.NUMBER:
            return panel.number or None
        field = _SHAPE_FIELD[attribute]
        values = frozenset(getattr(o, field) for o in panel.shapes if o is not None)
    else:
        if attribute == Attribute.TYPE:
            present = frozenset(i for i, c in enumerate(panel.lines) if c is not None)
            return present or None
        values = frozenset(c for c in panel.lines if c is not None)
    if not values:
        return None
    if as_set:
        return values
    return next(iter(values)) if len(values) == 1 else None


def read_assignment(panel, set_attributes=()):
    """Attribute values of both streams, in the form ``realize`` consumes.

    ``set_attributes`` lists (stream, attribute) pairs to read as sets even
    when a single level is present.
    """
    out = {}
    if panel.number:
        out[(Stream.SHAPE, Attribute.POSITION)] = read_attribute(panel, Stream.SHAPE, Attribute.POSITION)
        for attr in (Attribute.TYPE, Attribute.SIZE, Attribute.COLOR):
            key = (Stream.SHAPE, attr)
            value = read_attribute(panel, Stream.SHAPE, attr, as_set=key in set_attributes)
            out[key] = value if value is not None else read_attribute(panel, Stream.SHAPE, attr, as_set=True)
    if any(c is not None for c in panel.lines):
        out[(Stream.LINE, Attribute.TYPE)] = read_attribute(panel, Stream.LINE, Attribute.TYPE)
        key = (Stream.LINE, Attribute.COLOR)
        value = read_attribute(panel, Stream.LINE, Attribute.COLOR, as_set=key in set_attributes)
        out[key] = value if value is not None else read_attribute(panel, Stream.LINE, Attribute.COLOR, as_set=True)
    return out


class Unrealizable(Exception):
    """An assignment asks for more distinct levels than there are objects."""


def _spread(value, n):
    if isinstance(value, frozenset):
        levels = sorted(value)
        if len(levels) > n:
            raise Unrealizable(f"{len(levels)} levels over {n} objects")
        return [levels[i % len(levels)] for i in range(n)]
    return [value] * n


def realize(assignment):
    """Build a panel from an assignment keyed by (stream, attribute).

    Shape objects occupy the ``POSITION`` slots in ascending order; a level
    set is spread over them cyclically so each level appears at least once.
    Lines work the same way over the present line types.
    """
    shapes = [None] * N_SLOTS
    slots = assignment.get((Stream.SHAPE, Attribute.POSITION))
    if slots:
        slots = sorted(slots)
        t = _spread(assignment[(Stream.SHAPE, Attribute.TYPE)], len(slots))
        s = _spread(assignment[(Stream.SHAPE, Attribute.SIZE)], len(slots))
        c = _spread(assignment[(Stream.SHAPE, Attribute.COLOR)], len(slots))
        for i, slot in enumerate(slots):
            shapes[slot] = ShapeObject(int(t[i]), int(s[i]), int(c[i]))
    lines = [None] * N_LINE_TYPES
    present = assignment.get((Stream.LINE, Attribute.TYPE))
    if present:
        present = sorted(present)
        colors = _spread(assignment[(Stream.LINE, Attribute.COLOR)], len(present))
        for i, k in enumerate(present):
            lines[k] = int(colors[i])
    return PanelSymbolic(tuple(shapes), tuple(lines))


# encoding layout
N_TYPE = DOMAINS[(Stream.SHAPE, Attribute.TYPE)].hi + 1
N_SIZE = DOMAINS[(Stream.SHAPE, Attribute.SIZE)].hi + 1
N_COLOR = DOMAINS[(Stream.SHAPE, Attribute.COLOR)].hi + 1
N_LINE_COLOR = DOMAINS[(Stream.LINE, Attribute.COLOR)].hi + 1
SLOT_WIDTH = 1 + N_TYPE + N_SIZE + N_COLOR
LINE_WIDTH = 1 + N_LINE_COLOR
SHAPE_DIM = N_SLOTS * SLOT_WIDTH
LINE_DIM = N_LINE_TYPES * LINE_WIDTH
ENCODING_DIM = SHAPE_DIM + LINE_DIM


def encode_panel(panel, dtype=np.float64):
    """One-hot panel code of length ``ENCODING_DIM``.

    Per shape slot: [present, type one-hot, size one-hot, color one-hot];
    then per line type: [present, color one-hot]. The shape block comes
    first (``SHAPE_DIM`` entries), the line block after it.
    """
    out = np.zeros(ENCODING_DIM, dtype=dtype)
    for slot, obj in enumerate(panel.shapes):
        if obj is None:
            continue
        base = slot * SLOT_WIDTH
        out[base] = 1
        out[base + 1 + obj.type] = 1
        out[base + 1 + N_TYPE + obj.size] = 1
        out[base + 1 + N_TYPE + N_SIZE + obj.color] = 1
    for k, color in enumerate(panel.lines):
        if color is None:
            continue
        base = SHAPE_DIM + k * LINE_WIDTH
        out[base] = 1
        out[base + 1 + color] = 1
    return out


def encode_puzzle(puzzle, dtype=np.uint8):
    """Stack the 8 context then the 8 choice encodings into a (16, ENCODING_DIM) array."""
    return np.stack([encode_panel(p, dtype) for p in (*puzzle.context, *puzzle.choices)])


def panel_to_json(panel):
    return {
        "shapes": [None if o is None else [o.type, o.size, o.color] for o in panel.shapes],
        "lines": list(panel.lines),
    }


def panel_from_json(obj):
    shapes = tuple(None if o is None else ShapeObject(int(o[0]), int(o[1]), int(o[2])) for o in obj["shapes"])
    lines = tuple(None if c is None else int(c) for c in obj["lines"])
    return PanelSymbolic(shapes, lines)

