from .ops import (
    LossOutput,
    conv2d,
    conv2d_backward,
    dropout,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    relu_backward,
    softmax_channels,
    upsample2x_concat,
    upsample2x_concat_backward,
    weighted_ce_loss,
)
from .optim import AdamState, adam_init, adam_step, sgd_step
from .unet import (
    UNetConfig,
    UNetModel,
    deserialize_model,
    parameter_count,
    serialize_model,
    unet_backward,
    unet_forward,
    unet_forward_cached,
    unet_init,
)

__all__ = [
    "AdamState",
    "LossOutput",
    "UNetConfig",
    "UNetModel",
    "adam_init",
    "adam_step",
    "conv2d",
    "conv2d_backward",
    "deserialize_model",
    "dropout",
    "maxpool2x2",
    "maxpool2x2_backward",
    "parameter_count",
    "relu",
    "relu_backward",
    "serialize_model",
    "sgd_step",
    "softmax_channels",
    "unet_backward",
    "unet_forward",
    "unet_forward_cached",
    "unet_init",
    "upsample2x_concat",
    "upsample2x_concat_backward",
    "weighted_ce_loss",
]
