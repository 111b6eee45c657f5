"""Adam with bias correction over lists of `Node` parameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from ..errors import ContractError, DivergenceError
from .tensor import Node

BETA1 = 0.9
BETA2 = 0.999
EPS_ADAM = 1e-8


@dataclass
class AdamState:
    """Optimizer moments and hyperparameters.

    Attributes:
        lr: Learning rate.
        m: First-moment accumulators, one per parameter.
        v: Second-moment accumulators, one per parameter.
        step: Number of updates applied so far.
    """

    lr: float
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    step: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    eps: float = EPS_ADAM


def init_adam(params: Sequence[Node], lr: float) -> AdamState:
    """Zero-initialized moments matching ``params``."""
    return AdamState(
        lr=lr,
        m=[np.zeros_like(p.value) for p in params],
        v=[np.zeros_like(p.value) for p in params],
    )


def adam_step(
    params: Sequence[Node], grads: Sequence[np.ndarray], state: AdamState
) -> AdamState:
    """Apply one bias-corrected Adam update in place.

    Raises:
        ContractError: If gradient and parameter shapes disagree.
        DivergenceError: If any gradient entry is not finite.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError(
            "parameter, gradient and state counts differ",
            {"params": len(params), "grads": len(grads), "state": len(state.m)},
        )
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ContractError(
                "gradient shape mismatch",
                {"index": i, "param": list(p.shape), "grad": list(g.shape)},
            )
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient", {"index": i, "name": p.name})

    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


class Adam:
    """Optimizer bound to a parameter list, reading gradients from ``Node.grad``."""

    def __init__(self, params: Sequence[Node], lr: float = 1e-3) -> None:
        self.params = list(params)
        self.state = init_adam(self.params, lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.value) for p in self.params]
        adam_step(self.params, grads, self.state)
