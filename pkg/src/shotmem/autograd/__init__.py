from . import ops
from .gradcheck import check_gradients, finite_diff, rel_error
from .tensor import (
    NumericError,
    OpGraph,
    ShapeError,
    StateError,
    Tensor,
    TensorError,
    as_tensor,
    backward,
    zero_grads,
)

__all__ = [
    "ops",
    "Tensor",
    "OpGraph",
    "TensorError",
    "ShapeError",
    "NumericError",
    "StateError",
    "as_tensor",
    "backward",
    "zero_grads",
    "finite_diff",
    "rel_error",
    "check_gradients",
]
