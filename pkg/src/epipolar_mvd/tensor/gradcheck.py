"""Central finite-difference gradient checking."""

from collections.abc import Callable

import numpy as np

from ..errors import NonFiniteError, ShapeError
from .core import Tensor, as_tensor

DEFAULT_STEP = 1e-5


def numeric_gradient(f: Callable[[Tensor], float], x: Tensor, h: float = DEFAULT_STEP) -> Tensor:
    """
    Central-difference gradient of a scalar function.

    ``x`` is perturbed in place one coordinate at a time and restored afterwards.

    Raises:
        NonFiniteError: If ``f`` is not finite at ``x`` or at a shifted point
    """
    if not (isinstance(x, np.ndarray) and x.dtype == np.float64 and x.flags.c_contiguous):
        x = as_tensor(x)
    base = float(f(x))
    if not np.isfinite(base):
        raise NonFiniteError(f"f(x) is not finite ({base})")

    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat_x.size):
        original = flat_x[i]
        flat_x[i] = original + h
        f_plus = float(f(x))
        flat_x[i] = original - h
        f_minus = float(f(x))
        flat_x[i] = original
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(f"f is not finite near coordinate {i}")
        flat_grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic: Tensor, numeric: Tensor) -> float:
    """Max over coordinates of ``|analytic - numeric| / max(1, |numeric|)``."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.shape != numeric.shape:
        raise ShapeError(f"gradient shapes differ: {analytic.shape} vs {numeric.shape}")
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def finite_diff_check(
    f: Callable[[Tensor], float],
    x: Tensor,
    analytic: Tensor,
    h: float = DEFAULT_STEP,
) -> float:
    """
    Compare an analytic gradient against central differences.

    Args:
        f: Pure scalar-valued function of ``x``
        x: Point to check at (perturbed in place and restored)
        analytic: Hand-derived gradient of ``f`` at ``x``
        h: Finite-difference step

    Returns:
        Maximum relative error (see ``relative_error``)
    """
    return relative_error(analytic, numeric_gradient(f, x, h))
