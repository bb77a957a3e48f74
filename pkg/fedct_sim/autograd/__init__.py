"""
Autograd module: dense float64 tensors with reverse-mode differentiation.
"""

from .tensor import (
    Tensor,
    Tape,
    TapeRecord,
    get_tape,
    no_grad,
    is_grad_enabled,
    backward,
    matmul,
    add,
    sub,
    mul,
    scale,
    relu,
    sum_all,
    mean_all,
    take_rows,
    softmax_cross_entropy,
    cosine_similarity,
    cosine_similarity_matrix,
)
from .gradcheck import finite_difference_check

__all__ = [
    "Tensor",
    "Tape",
    "TapeRecord",
    "get_tape",
    "no_grad",
    "is_grad_enabled",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "sum_all",
    "mean_all",
    "take_rows",
    "softmax_cross_entropy",
    "cosine_similarity",
    "cosine_similarity_matrix",
    "finite_difference_check",
]
