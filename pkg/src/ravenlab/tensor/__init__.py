from .core import (
    Tensor,
    add,
    as_tensor,
    bce_with_logits,
    binary_cross_entropy,
    concat,
    cross_entropy,
    getitem,
    log_softmax,
    matmul,
    mean,
    mse,
    mul,
    neg,
    relu,
    reshape,
    sigmoid,
    softmax,
    square,
    sub,
    sum_,
    transpose,
)
from .checkpoint import load_checkpoint, save_checkpoint, dumps_checkpoint, loads_checkpoint
from .nn import MLP, Linear, Module
from .optim import Adam, AdamState, adam_step
