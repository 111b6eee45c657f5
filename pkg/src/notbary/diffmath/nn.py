"""Multilayer perceptrons built on `Node` parameters.

Hidden layers use the rectifier; the output layer is linear or softplus
(the latter gives strictly positive outputs for Gaussian scale nets).
Weights are stored as ``(in, out)`` matrices so a layer computes
``x @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Literal, Sequence, Tuple, Union

import numpy as np

from ..errors import ContractError
from .tensor import Node, as_node, parameter

HiddenActivation = Literal["relu"]
OutputActivation = Literal["linear", "softplus"]


@dataclass
class MlpParams:
    """Weights and biases of a fully connected network.

    Attributes:
        weights: One ``(in, out)`` matrix per layer.
        biases: One ``(out,)`` vector per layer.
        hidden_activation: Activation after every layer but the last.
        output_activation: Activation of the last layer.
    """

    weights: List[Node]
    biases: List[Node]
    hidden_activation: HiddenActivation = "relu"
    output_activation: OutputActivation = "linear"
    _widths: Tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.weights or len(self.weights) != len(self.biases):
            raise ContractError(
                "MLP needs one bias per weight matrix",
                {"weights": len(self.weights), "biases": len(self.biases)},
            )
        widths = [self.weights[0].shape[0]]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[0] != widths[-1] or b.shape != (w.shape[1],):
                raise ContractError(
                    "incompatible layer shapes",
                    {"layer": i, "weight": list(w.shape), "bias": list(b.shape)},
                )
            widths.append(w.shape[1])
        self._widths = tuple(widths)

    @property
    def widths(self) -> Tuple[int, ...]:
        return self._widths

    @property
    def in_dim(self) -> int:
        return self._widths[0]

    @property
    def out_dim(self) -> int:
        return self._widths[-1]

    def parameters(self) -> List[Node]:
        out: List[Node] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Node]]:
        named = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            named.append((f"{prefix}layer{i}.weight", w))
            named.append((f"{prefix}layer{i}.bias", b))
        return named

    def manifest(self) -> dict:
        return {
            "widths": list(self._widths),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }


def init_mlp(
    widths: Sequence[int],
    rng: np.random.Generator,
    *,
    output_activation: OutputActivation = "linear",
) -> MlpParams:
    """Create an MLP with ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))`` initialization.

    Args:
        widths: ``[in, hidden..., out]``; at least two entries.
        rng: Generator consumed layer by layer (weights then bias).
        output_activation: ``"linear"`` or ``"softplus"``.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ContractError("MLP widths must be >= 1 with at least two entries", {"widths": widths})
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)), f"layer{i}.weight"))
        biases.append(parameter(rng.uniform(-bound, bound, size=(fan_out,)), f"layer{i}.bias"))
    return MlpParams(weights, biases, output_activation=output_activation)


def mlp_forward(params: MlpParams, x: Union[Node, np.ndarray]) -> Node:
    """Evaluate the network on a batch whose last axis is the input width.

    Leading axes are treated as batch axes, so ``(n, m, in)`` maps to
    ``(n, m, out)``.

    Raises:
        ContractError: If the last axis of ``x`` differs from the input width.
    """
    h = as_node(x)
    if h.ndim == 0 or h.shape[-1] != params.in_dim:
        raise ContractError(
            "input width does not match network",
            {"expected": params.in_dim, "shape": list(h.shape)},
        )
    lead = h.shape[:-1]
    if h.ndim != 2:
        h = h.reshape(-1, params.in_dim)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = h.relu()
    if params.output_activation == "softplus":
        h = h.softplus()
    if len(lead) != 1:
        h = h.reshape(*lead, params.out_dim)
    return h
