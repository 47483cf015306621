"""Minimal numpy autodiff: tensors, primitives, semiring contraction, Adam."""
from .einsum import DEFAULT_BLOCK_SIZE, ContractionPlan, EinsumSpecError, einsum_log, einsum_real
from .ops import (
    add,
    affine,
    clamp_min,
    concatenate,
    div,
    exp,
    expand_dims,
    getitem,
    log,
    log_softmax,
    logaddexp,
    logsumexp,
    matmul,
    minimum,
    mul,
    neg,
    relu,
    reshape,
    sigmoid,
    softmax,
    stack,
    sub,
    sum,
    tanh,
    transpose,
    where,
)
from .optim import Adam, AdamState, NonFiniteGradientError, adam_step_with_clip, clip_by_global_norm
from .tensor import (
    ComputationRecord,
    Tensor,
    TensorError,
    as_tensor,
    backward,
    is_grad_enabled,
    make_node,
    no_grad,
)

__all__ = [
    "Adam",
    "AdamState",
    "ComputationRecord",
    "ContractionPlan",
    "DEFAULT_BLOCK_SIZE",
    "EinsumSpecError",
    "NonFiniteGradientError",
    "Tensor",
    "TensorError",
    "adam_step_with_clip",
    "add",
    "affine",
    "as_tensor",
    "backward",
    "clamp_min",
    "clip_by_global_norm",
    "concatenate",
    "div",
    "einsum_log",
    "einsum_real",
    "exp",
    "expand_dims",
    "getitem",
    "is_grad_enabled",
    "log",
    "log_softmax",
    "logaddexp",
    "logsumexp",
    "make_node",
    "matmul",
    "minimum",
    "mul",
    "neg",
    "no_grad",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "stack",
    "sub",
    "sum",
    "tanh",
    "transpose",
    "where",
]
