from .autograd import ShapeError, Tensor, no_grad
from .layers import (
    ParamStore,
    additive_attention,
    bilstm,
    embed,
    linear,
    load_embedding_file,
    lstm,
    lstm_step,
    mlp,
)
from .optim import NumericError, adam_step, clip_global_norm, global_norm

__all__ = [
    "Tensor", "ShapeError", "no_grad", "ParamStore", "additive_attention", "bilstm", "embed",
    "linear", "load_embedding_file", "lstm", "lstm_step", "mlp", "NumericError",
    "adam_step", "clip_global_norm", "global_norm",
]
