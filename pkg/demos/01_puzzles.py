"""
Generating and checking symbolic matrix puzzles
===============================================

A puzzle is a 3x3 grid of panels with the bottom-right one missing, plus
eight candidate answers. Each category fixes which rule governs which
attribute; distraction randomizes extra attributes panel by panel.
"""
import numpy as np

from ravenlab.matrixgen import (
    CategorySpec,
    GeneratorConfig,
    encode_puzzle,
    enumerate_combinations,
    generate_puzzle,
    validate_puzzle,
)

print(len(enumerate_combinations("pgm")), "pgm-style combinations")
print(len(enumerate_combinations("raven")), "raven-style combinations")


def show(panel):
    objs = [f"t{o.type}s{o.size}c{o.color}@{i}" for i, o in enumerate(panel.shapes) if o]
    lines = [f"L{k}c{c}" for k, c in enumerate(panel.lines) if c is not None]
    return " ".join(objs + lines) or "(empty)"


# one clean category: sizes step up by one along every row
config = GeneratorConfig(categories=[CategorySpec(combos=["progression:shape:size"])])
puzzle = generate_puzzle(config, category=0, seed=42)
print("\nrules:", [str(r.combination) + f" step {r.param}" for r in puzzle.rules])
for row in range(3):
    cells = list(puzzle.context[3 * row:3 * row + 3]) + ([] if row < 2 else [None])
    print(" | ".join("?" if p is None else show(p) for p in cells))
for k, choice in enumerate(puzzle.choices):
    mark = "*" if k == puzzle.answer_index else " "
    print(f"{mark} choice {k}: {show(choice)}")
print("valid:", validate_puzzle(puzzle))

# the same category with two randomized attributes per puzzle
noisy = GeneratorConfig(categories=config.categories, distraction_mean=2)
p = generate_puzzle(noisy, 0, 42)
print("\ndistracting attributes:", [(s.name, a.name) for s, a in p.distracting])
print("first row:", " | ".join(show(x) for x in p.context[:3]))

# what the student sees: 16 panels x 318 binary features
x = encode_puzzle(p)
print("\nencoded:", x.shape, x.dtype, "active features per panel:", x.sum(axis=1)[:4], "...")

# answer positions are uniform over the eight slots
idx = [generate_puzzle(config, 0, s).answer_index for s in range(800)]
print("answer position counts:", np.bincount(idx, minlength=8))
