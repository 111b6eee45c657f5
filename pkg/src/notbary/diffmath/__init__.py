"""Minimal reverse-mode differentiation, MLPs and Adam on numpy.

Public API:
    - Node, parameter, concat, backward, frozen
    - MlpParams, init_mlp, mlp_forward
    - AdamState, Adam, init_adam, adam_step
    - finite_diff_grad, max_relative_error
    - pack_arrays, unpack_arrays
"""

from .gradcheck import finite_diff_grad, max_relative_error
from .nn import MlpParams, init_mlp, mlp_forward
from .optim import Adam, AdamState, adam_step, init_adam
from .serialize import pack_arrays, unpack_arrays
from .tensor import Node, as_node, backward, concat, frozen, parameter

__all__ = [
    "Node",
    "as_node",
    "backward",
    "concat",
    "frozen",
    "parameter",
    "MlpParams",
    "init_mlp",
    "mlp_forward",
    "Adam",
    "AdamState",
    "adam_step",
    "init_adam",
    "finite_diff_grad",
    "max_relative_error",
    "pack_arrays",
    "unpack_arrays",
]
