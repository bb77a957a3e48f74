"""
Central finite-difference gradient checking.
"""

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, get_tape, no_grad


def finite_difference_check(f: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5) -> float:
    """
    Compare tape gradients of ``f`` with central finite differences.

    ``f`` must read its parameters from ``params`` and be deterministic.
    Parameter values are restored and their gradients cleared on return.

    Args:
        f: Zero-argument callable returning a scalar tensor
        params: Tensors with requires_grad=True to perturb
        step: Finite-difference step

    Returns:
        Max over coordinates of ``|analytic - numeric| / max(1, |numeric|)``
    """
    for param in params:
        param.zero_grad()
    get_tape().clear()
    backward(f())
    analytic = [
        param.grad.copy() if param.grad is not None else np.zeros_like(param.data)
        for param in params
    ]

    max_error = 0.0
    with no_grad():
        for param, grad in zip(params, analytic):
            for index in np.ndindex(param.data.shape):
                original = param.data[index]
                param.data[index] = original + step
                plus = f().item()
                param.data[index] = original - step
                minus = f().item()
                param.data[index] = original
                numeric = (plus - minus) / (2.0 * step)
                error = abs(grad[index] - numeric) / max(1.0, abs(numeric))
                max_error = max(max_error, error)

    for param in params:
        param.zero_grad()
    return max_error
