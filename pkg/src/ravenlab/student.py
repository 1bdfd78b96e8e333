"""Logic Embedding Network: scores each answer candidate by summing relation
MLPs over every 3-panel combination of the 8 context panels plus the candidate.

Row and column triples go through one relation network (kept in row/column
order), the remaining 78 through a second one (ascending slot order). Both see
a global context vector ``z``. A scoring MLP maps the summed relation vector to
one score per candidate.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConfigMismatch, ShapeMismatch
from .matrixgen.domains import enumerate_combinations
from .matrixgen.panels import ENCODING_DIM, LINE_DIM, SHAPE_DIM, encode_puzzle
from .tensor import (
    MLP,
    Linear,
    Module,
    Tensor,
    bce_with_logits,
    concat,
    cross_entropy,
    matmul,
    relu,
    reshape,
    softmax,
    transpose,
)
from .tensor.nn import uniform_init

CANDIDATE = 8


@dataclass
class LenConfig:
    embed_dim: int = 64
    embed_hidden: tuple = (128,)
    g_hidden: tuple = (128, 128)
    f_hidden: tuple = (128,)
    two_stream: bool = False
    type_loss: bool = False
    type_loss_weight: float = 10.0
    n_types: int = 29
    choices: int = 8
    matrix_size: int = 3
    input_dim: int = ENCODING_DIM
    shape_dim: int = SHAPE_DIM
    line_dim: int = LINE_DIM

    def __post_init__(self):
        self.embed_hidden = tuple(self.embed_hidden)
        self.g_hidden = tuple(self.g_hidden)
        self.f_hidden = tuple(self.f_hidden)
        if self.embed_dim <= 0:
            raise ValueError("embed_dim must be positive")
        if self.type_loss_weight < 0:
            raise ValueError("type_loss_weight must be nonnegative")
        if self.matrix_size != 3:
            raise ValueError("only 3x3 matrices are supported")
        if not self.g_hidden:
            raise ValueError("g_hidden needs at least one layer")
        if self.two_stream and self.shape_dim + self.line_dim != self.input_dim:
            raise ConfigMismatch("two-stream split does not cover the input encoding")

    @property
    def beta(self):
        """Weight of the type loss actually applied (0 when the type head is off)."""
        return self.type_loss_weight if self.type_loss else 0.0

@dataclass(frozen=True)
class TripleIndex:
    """Panel triples for one candidate; slot 8 is the candidate."""

    all_triples: tuple
    rowcol_triples: tuple
    other_triples: tuple

    @classmethod
    def build(cls, n=3):
        slots = range(n * n)
        rows = [tuple(range(r * n, r * n + n)) for r in range(n)]
        cols = [tuple(range(c, n * n, n)) for c in range(n)]
        rowcol = tuple(rows + cols)
        if n == 3:
            rowcol = (rows[0], rows[1], rows[2], cols[0], cols[1], cols[2])
        all_triples = tuple(combinations(slots, n))
        taken = {tuple(sorted(t)) for t in rowcol}
        other = tuple(t for t in all_triples if t not in taken)
        return cls(all_triples, rowcol, other)


TRIPLES = TripleIndex.build(3)


def _selectors(triples, n_choices):
    """Constant 0/1 matrices for the batched relation pass.

    ``gather`` has one row per evaluated triple and 3 * 16 + 1 columns: a 1 in
    block ``pos`` at the panel filling triple position ``pos``, plus a final
    column for the global-context term. Triples without the candidate appear
    once; triples with it once per choice, slot 8 mapped to panel 8 + k.
    ``member`` (K, T) marks which evaluated triples belong to each choice's sum.
    """
    n_panels = 8 + n_choices
    fixed = [t for t in triples if CANDIDATE not in t]
    moving = [t for t in triples if CANDIDATE in t]
    rows = [tuple(t) for t in fixed]
    owner = [None] * len(fixed)
    for k in range(n_choices):
        rows += [tuple(8 + k if s == CANDIDATE else s for s in t) for t in moving]
        owner += [k] * len(moving)
    gather = np.zeros((len(rows), 3 * n_panels + 1))
    member = np.zeros((n_choices, len(rows)))
    for i, t in enumerate(rows):
        for pos, panel in enumerate(t):
            gather[i, pos * n_panels + panel] = 1.0
        gather[i, -1] = 1.0
        if owner[i] is None:
            member[:, i] = 1.0
        else:
            member[owner[i], i] = 1.0
    return Tensor(gather), Tensor(member)


class RelationMLP(Module):
    """g(x_a, x_b, x_c, z): an MLP on the concatenation of three embeddings and z.

    The first layer's weight is stored as four (embed_dim, hidden) blocks so
    that it can be applied per panel before triples are gathered; the result
    is identical to multiplying the concatenated input.
    """

    def __init__(self, embed_dim, hidden, rng):
        fan_in = 4 * embed_dim
        self.w_first = Tensor(uniform_init(rng, fan_in, (embed_dim, hidden[0])), requires_grad=True)
        self.w_second = Tensor(uniform_init(rng, fan_in, (embed_dim, hidden[0])), requires_grad=True)
        self.w_third = Tensor(uniform_init(rng, fan_in, (embed_dim, hidden[0])), requires_grad=True)
        self.w_context = Tensor(uniform_init(rng, fan_in, (embed_dim, hidden[0])), requires_grad=True)
        self.bias = Tensor(np.zeros(hidden[0]), requires_grad=True)
        self.rest = MLP(list(hidden), rng, final_relu=True) if len(hidden) > 1 else None

    @property
    def first_weight(self):
        return concat([self.w_first, self.w_second, self.w_third, self.w_context], axis=0)

    def _tail(self, h):
        h = relu(h)
        return self.rest(h) if self.rest is not None else h

    def __call__(self, x):
        """Apply to explicit concatenated inputs of width 4 * embed_dim."""
        return self._tail(matmul(x, self.first_weight) + self.bias)

    def gathered(self, emb, z, gather):
        """Apply to every gathered triple of a panel-major (P, B, E) batch.

        Returns (T, B, H): one relation vector per evaluated triple.
        """
        P, B, _ = emb.shape
        H = self.bias.shape[0]
        per_panel = matmul(emb, concat([self.w_first, self.w_second, self.w_third], axis=1))
        per_panel = transpose(reshape(per_panel, (P, B, 3, H)), (2, 0, 1, 3))
        zp = reshape(matmul(z, self.w_context) + self.bias, (1, B * H))
        stacked = concat([reshape(per_panel, (3 * P, B * H)), zp], axis=0)
        h = reshape(matmul(gather, stacked), (gather.shape[0], B, H))
        return self._tail(h)


@dataclass
class StudentOutput:
    scores: Tensor
    choice_probs: Tensor
    type_logits: Tensor | None = None
    embeddings: np.ndarray | None = None
    relation: Tensor | None = None

    @property
    def prediction(self):
        return self.scores.data.argmax(axis=-1)


def as_batch(puzzles):
    """Accept a puzzle, a list of puzzles, or an encoded (B, 16, D) array."""
    if isinstance(puzzles, np.ndarray):
        x = puzzles
    elif hasattr(puzzles, "context"):
        x = encode_puzzle(puzzles)[None]
    else:
        x = np.stack([encode_puzzle(p) for p in puzzles])
    if x.ndim == 2:
        x = x[None]
    return x.astype(np.float64, copy=False)


class LogicEmbeddingNetwork(Module):
    def __init__(self, config=None, rng=None, seed=0):
        self.config = config or LenConfig()
        cfg = self.config
        rng = rng if rng is not None else np.random.default_rng(seed)
        E = cfg.embed_dim
        if cfg.two_stream:
            self.shape_embedder = MLP([cfg.shape_dim, *cfg.embed_hidden, E], rng, final_relu=True)
            self.line_embedder = MLP([cfg.line_dim, *cfg.embed_hidden, E], rng, final_relu=True)
            self.fusion = MLP([2 * E, E], rng, final_relu=True)
        else:
            self.embedder = MLP([cfg.input_dim, *cfg.embed_hidden, E], rng, final_relu=True)
        self.context_projection = Linear(E, E, rng)
        self.g_rowcol = RelationMLP(E, cfg.g_hidden, rng)
        self.g_other = RelationMLP(E, cfg.g_hidden, rng)
        self.f = MLP([cfg.g_hidden[-1], *cfg.f_hidden, 1], rng)
        self.type_head = Linear(cfg.g_hidden[-1], cfg.n_types, rng)
        self._rowcol = _selectors(TRIPLES.rowcol_triples, cfg.choices)
        self._other = _selectors(TRIPLES.other_triples, cfg.choices)

    # pieces ------------------------------------------------------------
    def fuse_two_stream(self, shape_repr, line_repr):
        if not self.config.two_stream:
            raise ConfigMismatch("fuse_two_stream needs a two-stream model")
        if shape_repr is None or line_repr is None:
            raise ConfigMismatch("both stream representations are required")
        return self.fusion(concat([shape_repr, line_repr], axis=-1))

    def embed_panels(self, x):
        """(B, P, D) encodings -> (B, P, embed_dim) embeddings, each panel independently."""
        x = x if isinstance(x, Tensor) else Tensor(as_batch(x))
        if x.shape[-1] != self.config.input_dim:
            raise ShapeMismatch(f"panel encodings have width {x.shape[-1]}, expected {self.config.input_dim}")
        if not self.config.two_stream:
            return self.embedder(x)
        sd = self.config.shape_dim
        return self.fuse_two_stream(self.shape_embedder(x[..., :sd]), self.line_embedder(x[..., sd:]))

    def global_context(self, context_embeddings):
        """z = affine projection of the mean of the 8 context embeddings."""
        if context_embeddings.shape[-2] != 8:
            raise ShapeMismatch(f"need 8 context embeddings, got {context_embeddings.shape}")
        return self.context_projection(context_embeddings.mean(axis=-2))

    def score_choice(self, context_embeddings, choice_embedding, z):
        """Literal per-candidate score: one relation call per triple.

        Shapes: contexts (8, E), choice (E,), z (E,). Slow; the batched
        ``forward`` computes the same numbers.
        """
        panels = [reshape(context_embeddings[i], (1, -1)) for i in range(8)]
        panels.append(reshape(choice_embedding, (1, -1)))
        z = reshape(z, (1, -1))
        total = None
        for triples, g in ((TRIPLES.rowcol_triples, self.g_rowcol), (TRIPLES.other_triples, self.g_other)):
            for t in triples:
                out = g(concat([panels[t[0]], panels[t[1]], panels[t[2]], z], axis=-1))
                total = out if total is None else total + out
        return reshape(self.f(total), ())

    # full model --------------------------------------------------------
    def forward(self, puzzles):
        x = Tensor(as_batch(puzzles))
        B = x.shape[0]
        K = self.config.choices
        if x.shape[1] != 8 + K:
            raise ShapeMismatch(f"expected {8 + K} panels per puzzle, got {x.shape[1]}")
        # panel-major layout keeps every big product a single 2-D matmul
        emb = self.embed_panels(transpose(x, (1, 0, 2)))
        z = self.global_context(transpose(emb[:8], (1, 0, 2)))
        relation = self._relation_sum(emb, z)
        scores_raw, hidden = self.f(relation, return_hidden=True)
        scores = transpose(reshape(scores_raw, (K, B)))
        out = StudentOutput(scores=scores, choice_probs=softmax(scores), relation=relation,
                            embeddings=hidden.data.mean(axis=0))
        if self.config.beta > 0:
            out.type_logits = self.type_head(relation.mean(axis=0))
        return out

    __call__ = forward

    def _relation_sum(self, emb, z):
        """(K, B, H) argument of the scoring MLP, one slice per candidate."""
        B = emb.shape[1]
        total = None
        for g, (gather, member) in ((self.g_rowcol, self._rowcol), (self.g_other, self._other)):
            out = g.gathered(emb, z, gather)
            T, _, H = out.shape
            summed = reshape(matmul(member, reshape(out, (T, B * H))), (member.shape[0], B, H))
            total = summed if total is None else total + summed
        return total

    def loss(self, output, answer_index, type_targets=None, reduction="mean"):
        """Choice cross-entropy plus beta times multi-label type BCE (when beta > 0)."""
        answer_index = np.asarray(answer_index)
        ce = cross_entropy(output.scores, answer_index, reduction=reduction)
        beta = self.config.beta
        if beta == 0:
            return ce
        if type_targets is None or output.type_logits is None:
            raise ValueError("type loss is enabled but type targets/logits are missing")
        type_term = bce_with_logits(output.type_logits, np.asarray(type_targets, dtype=np.float64),
                                    reduction="none").mean(axis=-1)
        if reduction == "mean":
            type_term = type_term.mean()
        return ce + beta * type_term


def type_targets(puzzles, taxonomy="pgm"):
    """Multi-hot indicator of each puzzle's rule combinations."""
    combos = enumerate_combinations(taxonomy)
    index = {c: i for i, c in enumerate(combos)}
    out = np.zeros((len(puzzles), len(combos)))
    for row, p in enumerate(puzzles):
        for r in p.rules:
            out[row, index[r.combination]] = 1.0
    return out


def export_embeddings(model, puzzles, path, batch_size=64):
    """Write (puzzle id, category, distraction count, embedding...) rows as CSV."""
    rows = []
    for start in range(0, len(puzzles), batch_size):
        chunk = puzzles[start:start + batch_size]
        emb = model.forward(chunk).embeddings
        for p, e in zip(chunk, emb):
            rows.append([p.seed, p.category, len(p.distracting), *(repr(float(v)) for v in e)])
    width = len(rows[0]) - 3 if rows else model.config.f_hidden[-1] if model.config.f_hidden else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["puzzle_id", "category", "distraction_count", *(f"e{i}" for i in range(width))])
        w.writerows(rows)
    return len(rows)

