"""Rule specifications, row completion and rule checking.

Semantics:

* constant -- the three values of a line are identical;
* progression -- fixed step ``param`` in {-2, -1, 1, 2}; slot sets are
  shifted cyclically over the grid instead;
* arithmetic -- third = first + second (``param`` +1) or first - second
  (``param`` -1); on slot sets, union or difference;
* xor / or / and -- symmetric difference, union, intersection of sets
  (slot sets, line-type sets, or the set of levels present in a panel);
* consistent union -- every line holds the same three distinct values in
  some order.
"""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import NoValidThird
from .domains import SET_RULES, Attribute, Combination, Direction, Rule, Stream, domain, is_set_valued

PROGRESSION_STEPS = (-2, -1, 1, 2)


@dataclass(frozen=True)
class RuleSpec:
    rule: Rule
    stream: Stream
    attribute: Attribute
    direction: Direction = Direction.ROW
    param: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rule", Rule(self.rule))
        object.__setattr__(self, "stream", Stream(self.stream))
        object.__setattr__(self, "attribute", Attribute(self.attribute))
        object.__setattr__(self, "direction", Direction(self.direction))
        domain(self.stream, self.attribute)
        if self.rule == Rule.PROGRESSION and self.param not in PROGRESSION_STEPS:
            raise ValueError(f"progression step must be one of {PROGRESSION_STEPS}, got {self.param}")
        if self.rule == Rule.ARITHMETIC and self.param not in (-1, 1):
            raise ValueError(f"arithmetic sign must be +1 or -1, got {self.param}")
        if self.rule in SET_RULES and self.attribute == Attribute.NUMBER:
            raise ValueError("set rules do not apply to a count")

    @property
    def combination(self):
        return Combination(self.rule, self.stream, self.attribute)

    @property
    def key(self):
        return (self.stream, self.attribute)

    @property
    def domain(self):
        return domain(self.stream, self.attribute)

    @property
    def set_valued(self):
        return is_set_valued(self.rule, self.stream, self.attribute)


def shift(slots, step, modulus):
    return frozenset((s + step) % modulus for s in slots)


def _as_value(spec, value):
    if spec.set_valued and not isinstance(value, frozenset):
        return frozenset([int(value)]) if not hasattr(value, "__iter__") else frozenset(value)
    return value


def _in_domain(spec, value):
    dom = spec.domain
    if isinstance(value, frozenset):
        return bool(value) and all(dom.lo <= v <= dom.hi for v in value)
    return dom.lo <= value <= dom.hi


def complete(spec, first, second):
    """Deterministic third value for every rule except consistent union."""
    dom = spec.domain
    rule = spec.rule
    if rule == Rule.CONSTANT:
        if first != second:
            raise NoValidThird("constant rule needs equal operands")
        third = first
    elif rule == Rule.PROGRESSION:
        if isinstance(first, frozenset):
            if shift(first, spec.param, dom.hi + 1) != second:
                raise NoValidThird("operands are not one shift apart")
            third = shift(second, spec.param, dom.hi + 1)
        else:
            if second - first != spec.param:
                raise NoValidThird(f"operands differ by {second - first}, step is {spec.param}")
            third = second + spec.param
    elif rule == Rule.ARITHMETIC:
        if isinstance(first, frozenset):
            third = first | second if spec.param > 0 else first - second
        else:
            third = first + spec.param * second
    elif rule == Rule.XOR:
        third = first ^ second
    elif rule == Rule.OR:
        third = first | second
    elif rule == Rule.AND:
        third = first & second
    else:
        raise NoValidThird("consistent union has no deterministic third value")
    if not _in_domain(spec, third):
        raise NoValidThird(f"{rule.name.lower()} leaves the domain: {third}")
    return third


def apply_rule(spec, first, second, rng=None):
    """Third value of a line given its first two.

    Consistent union draws the third uniformly among values distinct from
    both operands, which needs ``rng``. Raises ``NoValidThird`` when no
    in-domain completion exists.
    """
    first, second = _as_value(spec, first), _as_value(spec, second)
    if not (_in_domain(spec, first) and _in_domain(spec, second)):
        raise ValueError(f"operands {first!r}, {second!r} outside the {spec.attribute.name} domain")
    if spec.rule != Rule.CONSISTENT_UNION:
        return complete(spec, first, second)
    if first == second:
        raise NoValidThird("consistent union needs distinct operands")
    if rng is None:
        raise ValueError("consistent union needs an rng")
    for _ in range(100):
        third = sample_value(spec, rng)
        if third != first and third != second:
            return third
    raise NoValidThird("could not draw a distinct third value")


def lines_of(grid, direction):
    rows = [tuple(grid[3 * r:3 * r + 3]) for r in range(3)]
    if Direction(direction) == Direction.ROW:
        return rows
    return rows + [tuple(grid[c::3]) for c in range(3)]


def rule_holds(spec, grid):
    """Check a rule on a row-major grid of nine read-out values."""
    lines = lines_of(grid, spec.direction)
    if any(v is None for line in lines for v in line):
        return False
    if spec.rule == Rule.CONSISTENT_UNION:
        union = set(lines[0])
        return all(len(set(line)) == 3 and set(line) == union for line in lines)
    for a, b, c in lines:
        try:
            if complete(spec, a, b) != c:
                return False
        except NoValidThird:
            return False
    return True


# sampling ---------------------------------------------------------------

# cap on drawn set sizes: slot layouts, line layouts, and sets of levels
SET_SIZE_CAP = {Attribute.POSITION: 4}
LINE_SET_CAP = 3
LEVEL_SET_CAP = 2


def set_cap(spec):
    if spec.stream == Stream.LINE and spec.attribute == Attribute.TYPE:
        return LINE_SET_CAP
    return SET_SIZE_CAP.get(spec.attribute, LEVEL_SET_CAP)


def sample_value(spec, rng, lo=None, hi=None):
    dom = spec.domain
    if spec.set_valued:
        k = int(rng.integers(1, set_cap(spec) + 1))
        return frozenset(int(v) for v in rng.choice(dom.hi - dom.lo + 1, size=k, replace=False) + dom.lo)
    lo = dom.lo if lo is None else lo
    hi = dom.hi if hi is None else hi
    return int(rng.integers(lo, hi + 1))


def sample_operands(spec, rng):
    """First two values of a line, drawn so that the rule can often be completed."""
    dom = spec.domain
    rule = spec.rule
    if rule == Rule.CONSTANT:
        a = sample_value(spec, rng)
        return a, a
    if rule == Rule.PROGRESSION:
        if spec.set_valued:
            a = sample_value(spec, rng)
            return a, shift(a, spec.param, dom.hi + 1)
        lo = max(dom.lo, dom.lo - 2 * spec.param)
        hi = min(dom.hi, dom.hi - 2 * spec.param)
        a = sample_value(spec, rng, lo, hi)
        return a, a + spec.param
    if rule == Rule.ARITHMETIC and not spec.set_valued:
        lo = max(dom.lo, 1)
        if spec.param > 0:
            a = sample_value(spec, rng, lo, dom.hi - lo)
            return a, sample_value(spec, rng, lo, dom.hi - a)
        a = sample_value(spec, rng, lo + lo, dom.hi)
        return a, sample_value(spec, rng, lo, a - lo)
    a = sample_value(spec, rng)
    b = sample_value(spec, rng)
    while rule == Rule.CONSISTENT_UNION and b == a:
        b = sample_value(spec, rng)
    return a, b


def sample_grid(spec, rng, attempts=100):
    """Nine row-major values satisfying ``spec`` on every governed line."""
    for _ in range(attempts):
        try:
            grid = _sample_grid(spec, rng)
        except NoValidThird:
            continue
        if rule_holds(spec, grid):
            return grid
    raise NoValidThird(f"could not fill a grid for {spec.combination}")


def _sample_triple(spec, rng):
    values = []
    while len(values) < 3:
        v = sample_value(spec, rng)
        if v not in values:
            values.append(v)
    return values


def _sample_grid(spec, rng):
    dom = spec.domain
    if spec.rule == Rule.CONSISTENT_UNION:
        triple = _sample_triple(spec, rng)
        if spec.direction == Direction.ROW:
            return [triple[i] for _ in range(3) for i in rng.permutation(3)]
        order = [triple[i] for i in rng.permutation(3)]
        turn = 1 if rng.random() < 0.5 else 2
        return [order[(c + turn * r) % 3] for r in range(3) for c in range(3)]
    if spec.direction == Direction.ROW:
        grid = []
        for _ in range(3):
            for _ in range(100):
                a, b = sample_operands(spec, rng)
                try:
                    grid += [a, b, complete(spec, a, b)]
                    break
                except NoValidThird:
                    continue
            else:
                raise NoValidThird(f"no completable row for {spec.combination}")
        return grid
    if spec.rule == Rule.CONSTANT:
        return [sample_value(spec, rng)] * 9
    if spec.rule == Rule.PROGRESSION:
        step = spec.param
        if spec.set_valued:
            a = sample_value(spec, rng)
            return [shift(a, step * (r + c), dom.hi + 1) for r in range(3) for c in range(3)]
        lo = max(dom.lo, dom.lo - 4 * step)
        hi = min(dom.hi, dom.hi - 4 * step)
        if lo > hi:
            raise NoValidThird("domain too small for a two-way progression")
        a = sample_value(spec, rng, lo, hi)
        return [a + step * (r + c) for r in range(3) for c in range(3)]
    # arithmetic and set rules: free 2x2 block, the rest follows
    v00, v01 = sample_operands(spec, rng)
    v10, v11 = sample_operands(spec, rng)
    if spec.rule == Rule.AND:
        # the corner is the intersection of all four, so seed a shared level
        core = sample_value(spec, rng) if spec.set_valued else frozenset()
        v00, v01, v10, v11 = (v | core for v in (v00, v01, v10, v11))
    v02, v12 = complete(spec, v00, v01), complete(spec, v10, v11)
    v20, v21 = complete(spec, v00, v10), complete(spec, v01, v11)
    return [v00, v01, v02, v10, v11, v12, v20, v21, complete(spec, v20, v21)]
