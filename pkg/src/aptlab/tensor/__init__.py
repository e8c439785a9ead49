from src.aptlab.tensor.counter import MacCounter, count_macs
from src.aptlab.tensor.gradcheck import gradcheck, numerical_grad, relative_error
from src.aptlab.tensor.ops import (
    add,
    add_row,
    broadcast_rows,
    concat_rows,
    cross_entropy,
    gather_rows,
    gelu,
    layernorm,
    matmul,
    reshape,
    scale,
    slice_rows,
    softmax_rows,
    take_row,
    transpose,
)
from src.aptlab.tensor.optim import Adam, adam_step
from src.aptlab.tensor.tensor import Tape, Tensor, backward, zeros

__all__ = [
    "Adam", "MacCounter", "Tape", "Tensor", "adam_step", "add", "add_row",
    "backward", "broadcast_rows", "concat_rows", "count_macs", "cross_entropy",
    "gather_rows", "gelu", "gradcheck", "layernorm", "matmul", "numerical_grad",
    "relative_error", "reshape", "scale", "slice_rows", "softmax_rows", "take_row",
    "transpose", "zeros",
]
