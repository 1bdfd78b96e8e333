"""Attribute domains, rule names and the legal rule-attribute combinations."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum


class Stream(IntEnum):
    SHAPE = 0
    LINE = 1


class Attribute(IntEnum):
    SIZE = 0
    TYPE = 1
    COLOR = 2
    POSITION = 3
    NUMBER = 4


class Rule(IntEnum):
    CONSTANT = 0
    PROGRESSION = 1
    ARITHMETIC = 2
    XOR = 3
    OR = 4
    AND = 5
    CONSISTENT_UNION = 6  # "distribute three" in the RAVEN naming


class Taxonomy(str, Enum):
    PGM = "pgm"
    RAVEN = "raven"


class Direction(str, Enum):
    ROW = "row"
    ROW_AND_COLUMN = "row_and_column"


SET_RULES = frozenset({Rule.XOR, Rule.OR, Rule.AND})

N_SLOTS = 9
N_LINE_TYPES = 6


@dataclass(frozen=True)
class AttributeDomain:
    """Integer levels ``lo..hi`` (inclusive), or subsets of ``range(hi + 1)`` when ``set_valued``."""

    stream: Stream
    attribute: Attribute
    lo: int
    hi: int
    set_valued: bool = False

    @property
    def levels(self):
        return range(self.lo, self.hi + 1)

    def contains(self, value):
        if isinstance(value, frozenset):
            return bool(value) and all(self.lo <= v <= self.hi for v in value)
        return self.lo <= value <= self.hi


DOMAINS = {
    (Stream.SHAPE, Attribute.SIZE): AttributeDomain(Stream.SHAPE, Attribute.SIZE, 0, 9),
    (Stream.SHAPE, Attribute.TYPE): AttributeDomain(Stream.SHAPE, Attribute.TYPE, 0, 6),
    (Stream.SHAPE, Attribute.COLOR): AttributeDomain(Stream.SHAPE, Attribute.COLOR, 0, 9),
    (Stream.SHAPE, Attribute.POSITION): AttributeDomain(Stream.SHAPE, Attribute.POSITION, 0, N_SLOTS - 1, True),
    # empty shape panels are never generated, so counts start at one
    (Stream.SHAPE, Attribute.NUMBER): AttributeDomain(Stream.SHAPE, Attribute.NUMBER, 1, N_SLOTS),
    (Stream.LINE, Attribute.TYPE): AttributeDomain(Stream.LINE, Attribute.TYPE, 0, N_LINE_TYPES - 1, True),
    (Stream.LINE, Attribute.COLOR): AttributeDomain(Stream.LINE, Attribute.COLOR, 0, 9),
}

STREAM_ATTRIBUTES = {
    Stream.SHAPE: (Attribute.SIZE, Attribute.TYPE, Attribute.COLOR, Attribute.POSITION, Attribute.NUMBER),
    Stream.LINE: (Attribute.TYPE, Attribute.COLOR),
}


def domain(stream, attribute):
    try:
        return DOMAINS[(Stream(stream), Attribute(attribute))]
    except KeyError:
        raise ValueError(f"no attribute {Attribute(attribute).name} on stream {Stream(stream).name}") from None


@dataclass(frozen=True, order=True)
class Combination:
    rule: Rule
    stream: Stream
    attribute: Attribute

    def __str__(self):
        return f"{self.rule.name.lower()}:{self.stream.name.lower()}:{self.attribute.name.lower()}"

    @classmethod
    def parse(cls, text):
        rule, stream, attribute = text.strip().lower().split(":")
        return cls(Rule[rule.upper()], Stream[stream.upper()], Attribute[attribute.upper()])


_ALL_PGM = (Rule.PROGRESSION, Rule.XOR, Rule.OR, Rule.AND, Rule.CONSISTENT_UNION)

_PGM_TABLE = {
    (Stream.SHAPE, Attribute.SIZE): _ALL_PGM,
    (Stream.SHAPE, Attribute.TYPE): _ALL_PGM,
    (Stream.SHAPE, Attribute.COLOR): _ALL_PGM,
    # no progression on a slot layout; no consistent union on it either
    (Stream.SHAPE, Attribute.POSITION): (Rule.XOR, Rule.OR, Rule.AND),
    # a count is not a set of values
    (Stream.SHAPE, Attribute.NUMBER): (Rule.PROGRESSION, Rule.CONSISTENT_UNION),
    (Stream.LINE, Attribute.TYPE): (Rule.XOR, Rule.OR, Rule.AND, Rule.CONSISTENT_UNION),
    (Stream.LINE, Attribute.COLOR): _ALL_PGM,
}

_RAVEN_RULES = (Rule.CONSTANT, Rule.PROGRESSION, Rule.ARITHMETIC, Rule.CONSISTENT_UNION)


def enumerate_combinations(taxonomy):
    """Legal (rule, stream, attribute) triples, sorted by enum order."""
    taxonomy = Taxonomy(taxonomy)
    combos = set()
    if taxonomy is Taxonomy.PGM:
        for (stream, attribute), rules in _PGM_TABLE.items():
            combos.update(Combination(r, stream, attribute) for r in rules)
    else:
        for attribute in STREAM_ATTRIBUTES[Stream.SHAPE]:
            for rule in _RAVEN_RULES:
                if (rule, attribute) == (Rule.ARITHMETIC, Attribute.TYPE):
                    continue
                combos.add(Combination(rule, Stream.SHAPE, attribute))
    return sorted(combos)


def is_set_valued(rule, stream, attribute):
    """Whether the rule reads the attribute as a set (of slots, lines or levels)."""
    return domain(stream, attribute).set_valued or Rule(rule) in SET_RULES
