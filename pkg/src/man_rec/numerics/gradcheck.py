from __future__ import annotations

from collections.abc import Callable, Mapping

import numpy as np

from man_rec.constants import DEFAULT_FD_STEP
from man_rec.errors import NonFiniteError
from man_rec.numerics.tensor import Tensor, backward


def _evaluate(f: Callable[[], Tensor], context: str) -> float:
    value = float(f().data.reshape(-1)[0])
    if not np.isfinite(value):
        raise NonFiniteError(f"Non-finite function value {value} ({context}).")
    return value


def parameter_errors(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    step: float = DEFAULT_FD_STEP,
    *,
    floor: float = 1e-8,
) -> dict[str, float]:
    """Compare analytic gradients with central differences, entry by entry.

    ``f`` must rebuild its graph from ``params`` on every call and be deterministic.
    The error of one entry is ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``;
    the result maps each parameter name to its worst entry.
    """
    for tensor in params.values():
        tensor.zero_grad()
    loss = f()
    _evaluate(lambda: loss, "analytic pass")
    backward(loss)
    analytic = {
        name: tensor.grad if tensor.grad is not None else np.zeros(tensor.shape)
        for name, tensor in params.items()
    }

    errors: dict[str, float] = {}
    for name, tensor in params.items():
        worst = 0.0
        for index in np.ndindex(*tensor.shape):
            original = tensor.data[index]
            tensor.data[index] = original + step
            plus = _evaluate(f, f"{name}{list(index)} + step")
            tensor.data[index] = original - step
            minus = _evaluate(f, f"{name}{list(index)} - step")
            tensor.data[index] = original

            numeric = (plus - minus) / (2.0 * step)
            exact = float(analytic[name][index])
            scale = max(abs(exact), abs(numeric), floor)
            worst = max(worst, abs(exact - numeric) / scale)
        errors[name] = worst
    return errors


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    step: float = DEFAULT_FD_STEP,
    *,
    floor: float = 1e-8,
) -> float:
    """Maximum relative error between analytic and finite-difference gradients."""
    errors = parameter_errors(f, params, step, floor=floor)
    return max(errors.values(), default=0.0)
