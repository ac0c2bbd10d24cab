"""Small numpy reverse-mode autodiff engine."""
from .tensor import (
    Graph, GraphReleasedError, ShapeError, Tensor, as_tensor, backward, current_graph,
    enable_grad, get_default_dtype, is_grad_enabled, memory_tag, no_grad, precision,
    set_default_dtype,
)
from .ops import (
    add, affine, clip, concat, div, exp, getitem, log, log_softmax, matmul, mean, mul, neg,
    pad_last, pick, prelu, relu, reshape, sigmoid, softmax, sqrt, square, stack, sub, sum,
    take_rows, tanh, transpose,
)
from .conv import conv1d, conv_out_len, conv_transpose1d, frame_layer_norm, global_layer_norm
from .recurrent import lstm_sequence
