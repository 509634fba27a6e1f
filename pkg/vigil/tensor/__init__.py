"""Dense tensor value type and forward numeric kernels."""
from .tensor import DTYPES, Tensor, as_tensor
from .kernels import (
    ConvKernel,
    activation,
    batchnorm_infer,
    concat_channels,
    conv2d,
    conv2d_reference,
    dense,
    depthwise_conv2d,
    deterministic_mode,
    elementwise,
    expand_separable,
    is_deterministic,
    leaky_relu,
    maxpool2d,
    maxpool2d_reference,
    pointwise_conv2d,
    relu6,
    separable_conv2d,
    set_deterministic,
    sigmoid,
)

__all__ = [
    "DTYPES",
    "Tensor",
    "as_tensor",
    "ConvKernel",
    "activation",
    "batchnorm_infer",
    "concat_channels",
    "conv2d",
    "conv2d_reference",
    "dense",
    "depthwise_conv2d",
    "deterministic_mode",
    "elementwise",
    "expand_separable",
    "is_deterministic",
    "leaky_relu",
    "maxpool2d",
    "maxpool2d_reference",
    "pointwise_conv2d",
    "relu6",
    "separable_conv2d",
    "set_deterministic",
    "sigmoid",
]
