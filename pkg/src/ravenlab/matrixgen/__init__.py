"""Procedural 3x3 matrix puzzles over symbolic panels."""
from .domains import (
    DOMAINS,
    Attribute,
    AttributeDomain,
    Combination,
    Direction,
    Rule,
    Stream,
    Taxonomy,
    enumerate_combinations,
)
from .generator import (
    CategorySpec,
    GeneratorConfig,
    PuzzleDraft,
    PuzzleInstance,
    available_distractors,
    draft_puzzle,
    generate_puzzle,
    inject_distraction,
    make_choices,
    matrix_valid,
    realize_draft,
    sample_distraction_count,
    validate_puzzle,
)
from .io import dumps_puzzle, puzzle_from_json, puzzle_to_json, read_dataset, write_dataset
from .panels import (
    ENCODING_DIM,
    LINE_DIM,
    SHAPE_DIM,
    PanelSymbolic,
    ShapeObject,
    encode_panel,
    encode_puzzle,
    read_attribute,
    realize,
)
from .rules import RuleSpec, apply_rule, rule_holds, sample_grid
from .symmetry import Relabelling, augment_encoded, encoding_columns, relabel_puzzle, sample_relabelling
