from .tensor import (  # noqa: F401
    DTYPE, ShapeError, Tensor, backward, no_grad, as_tensor,
)
from . import tensor as ops  # noqa: F401
from .cplx import CTensor  # noqa: F401
from .nn import GRU, LayerNorm, Linear, Module, Parameter, gru_cell  # noqa: F401
from .optim import AdamWState, LRSchedule, adamw_step  # noqa: F401
