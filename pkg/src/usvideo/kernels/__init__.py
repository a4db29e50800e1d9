"""Dense numpy kernels with analytic backward passes.

Every forward function returns ``(out, cache)`` and has a matching
``*_backward(dout, cache)``. Arrays are plain ``np.ndarray``; the working
precision is chosen once with :func:`set_precision`.
"""

from usvideo.kernels.precision import check_finite, default_dtype, set_precision, precision
from usvideo.kernels.conv import ConvSpec, LayerGrads, conv2d, conv3d, conv_backward, conv_forward
from usvideo.kernels.pooling import maxpool3d, maxpool3d_backward, spp3d, spp3d_backward, spp_length
from usvideo.kernels.layers import (
    batchnorm, batchnorm_backward, BatchNormState, dropout, dropout_backward,
    fully_connected, fully_connected_backward, relu, relu_backward, sigmoid,
)
from usvideo.kernels.lstm import LSTMParams, lstm_batch, lstm_batch_backward, lstm_sequence, lstm_sequence_backward
from usvideo.kernels.losses import (
    bce_loss, bce_logit_grad, cosine_consistency_loss, cosine_consistency_backward, mse_loss, mse_backward,
)
from usvideo.kernels.optim import Adam, AdamState
from usvideo.kernels.init import glorot_uniform
from usvideo.kernels.gradcheck import GradCheckReport, grad_check, numerical_gradient

batchnorm3d = batchnorm
batchnorm3d_backward = batchnorm_backward

__all__ = [
    "Adam", "AdamState", "BatchNormState", "ConvSpec", "GradCheckReport", "LSTMParams", "LayerGrads",
    "batchnorm", "batchnorm3d", "batchnorm3d_backward", "batchnorm_backward", "bce_logit_grad", "bce_loss",
    "check_finite", "conv2d", "conv3d", "conv_backward", "conv_forward", "cosine_consistency_backward",
    "cosine_consistency_loss", "default_dtype", "dropout", "dropout_backward", "fully_connected",
    "fully_connected_backward", "glorot_uniform", "grad_check", "lstm_batch", "lstm_batch_backward",
    "lstm_sequence", "lstm_sequence_backward", "maxpool3d", "maxpool3d_backward", "mse_backward", "mse_loss",
    "numerical_gradient", "precision", "relu", "relu_backward", "set_precision", "sigmoid", "spp3d",
    "spp3d_backward", "spp_length",
]
