from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from man_rec.errors import NonFiniteError
from man_rec.network.parameters import ParameterStore
from man_rec.numerics.tensor import Array


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, Array] = field(default_factory=dict)
    v: dict[str, Array] = field(default_factory=dict)


class Adam:
    """Adam with bias correction over a :class:`ParameterStore`.

    Parameters without a gradient in a step are left alone, moments included.
    """

    def __init__(
        self,
        store: ParameterStore,
        learning_rate: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.store = store
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def step(self) -> None:
        adam_step(
            self.store,
            self.state,
            self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
        )


def adam_step(
    store: ParameterStore,
    state: AdamState,
    learning_rate: float,
    *,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One update from the gradients currently stored on the parameters.

    Raises :class:`NonFiniteError` naming the first parameter whose gradient is not
    finite, before anything is modified. Padding rows are zeroed again afterwards.
    """
    grads = {
        name: tensor.grad for name, tensor in store.items() if tensor.grad is not None
    }
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"Non-finite gradient for parameter {name!r}.")

    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for name, grad in grads.items():
        tensor = store[name]
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - beta1) * grad if m is None else beta1 * m + (1.0 - beta1) * grad
        squared = grad * grad
        v = (1.0 - beta2) * squared if v is None else beta2 * v + (1 - beta2) * squared
        state.m[name] = m
        state.v[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        tensor.data -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    store.reset_padding()
