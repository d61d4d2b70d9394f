"""A 36-channel UNet with dilated contracting-path convolutions.

Five contraction blocks of two 3x3 convolutions (dilation 2 by default) with
ReLU, dropout after each block, and 2x2 max pooling between blocks; filter
counts double per level.  Four decoder stages use nearest-neighbor upsampling
concatenated with the matching skip, followed by two dilation-1 convolutions.
A 1x1 head and per-pixel softmax produce class probabilities.  Because
dilation never changes weight shapes, the dilation-2 network has exactly as
many trainable parameters as its dilation-1 twin.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError, ShapeError
from .ops import (
    conv2d,
    conv2d_backward,
    dropout,
    dropout_backward,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    relu_backward,
    softmax_channels,
    upsample2x_concat,
    upsample2x_concat_backward,
)

DEPTH = 5
CHECKPOINT_MAGIC = b"UNET"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 36
    n_classes: int = 2
    depth: int = DEPTH
    base_filters: int = 8
    dropout_rate: float = 0.1
    dilation: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.depth != DEPTH:
            raise ValueError(f"depth is fixed at {DEPTH} contraction blocks")
        if self.base_filters < 1:
            raise ValueError("base_filters must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.dilation < 1:
            raise ValueError("dilation must be >= 1")

    @property
    def filters(self) -> list[int]:
        return [self.base_filters * (1 << i) for i in range(self.depth)]


def _conv_specs(config: UNetConfig) -> list[tuple[str, int, int, int]]:
    """Declaration-ordered conv layers as (name, in_ch, out_ch, kernel)."""
    f = config.filters
    specs = []
    c_in = config.in_channels
    for i in range(config.depth):
        specs.append((f"enc{i}.conv0", c_in, f[i], 3))
        specs.append((f"enc{i}.conv1", f[i], f[i], 3))
        c_in = f[i]
    deep = f[-1]
    for j in range(config.depth - 2, -1, -1):
        specs.append((f"dec{j}.conv0", f[j] + deep, f[j], 3))
        specs.append((f"dec{j}.conv1", f[j], f[j], 3))
        deep = f[j]
    specs.append(("head", f[0], config.n_classes, 1))
    return specs


@dataclass
class UNetModel:
    """Configuration plus an ordered mapping of parameter arrays."""

    config: UNetConfig
    params: dict[str, np.ndarray]
    param_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.param_names:
            self.param_names = list(self.params)
        expected = [n for spec in _conv_specs(self.config) for n in (f"{spec[0]}.w", f"{spec[0]}.b")]
        if self.param_names != expected:
            raise ShapeError("parameter names do not match the configured architecture")
        for name, c_in, c_out, k in _conv_specs(self.config):
            if self.params[f"{name}.w"].shape != (c_out, c_in, k, k):
                raise ShapeError(f"{name}.w has wrong shape")
            if self.params[f"{name}.b"].shape != (c_out,):
                raise ShapeError(f"{name}.b has wrong shape")

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "UNetModel":
        return UNetModel(
            config=self.config,
            params={k: v.copy() for k, v in self.params.items()},
            param_names=list(self.param_names),
        )


def parameter_count(config: UNetConfig) -> int:
    return sum(c_out * c_in * k * k + c_out for _, c_in, c_out, k in _conv_specs(config))


def unet_init(config: UNetConfig) -> UNetModel:
    """He-normal weights (std sqrt(2 / fan_in)) and zero biases, seeded."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(config.seed)])))
    params: dict[str, np.ndarray] = {}
    for name, c_in, c_out, k in _conv_specs(config):
        fan_in = c_in * k * k
        std = np.sqrt(2.0 / fan_in)
        params[f"{name}.w"] = rng.normal(0.0, std, size=(c_out, c_in, k, k))
        params[f"{name}.b"] = np.zeros(c_out)
    return UNetModel(config=config, params=params)


def _conv1x1(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("oc,bchw->bohw", w[:, :, 0, 0], x) + b[None, :, None, None]


def _conv1x1_backward(grad_out, x, w):
    d_b = grad_out.sum(axis=(0, 2, 3))
    d_w = np.einsum("bohw,bchw->oc", grad_out, x)[:, :, None, None]
    d_x = np.einsum("oc,bohw->bchw", w[:, :, 0, 0], grad_out)
    return d_x, d_w, d_b


def unet_forward_cached(
    model: UNetModel, x: np.ndarray, training: bool = False, dropout_seed: int = 0
) -> tuple[np.ndarray, dict]:
    """Forward pass returning per-pixel class probabilities and the cache
    needed by :func:`unet_backward`."""
    cfg = model.config
    if x.ndim != 4:
        raise ShapeError(f"input must be (B, C, H, W), got {x.shape}")
    if x.shape[1] != cfg.in_channels:
        raise ShapeError(f"input channels {x.shape[1]} != configured {cfg.in_channels}")
    div = 1 << (cfg.depth - 1)
    if x.shape[2] % div or x.shape[3] % div:
        raise ShapeError(f"H and W must be divisible by {div}, got {x.shape[2:]}")

    p = model.params
    cache: dict = {"input": x, "conv_in": {}, "pre_relu": {}, "pool": [], "drop": [], "concat": []}

    def conv_block(name: str, t: np.ndarray, dilation: int) -> np.ndarray:
        for k in (0, 1):
            layer = f"{name}.conv{k}"
            cache["conv_in"][layer] = t
            t = conv2d(t, p[f"{layer}.w"], p[f"{layer}.b"], dilation)
            cache["pre_relu"][layer] = t
            t = relu(t)
        return t

    skips = []
    t = x
    for i in range(cfg.depth):
        t = conv_block(f"enc{i}", t, cfg.dilation)
        t, mask = dropout(t, cfg.dropout_rate, dropout_seed, call_index=i, training=training)
        cache["drop"].append(mask)
        if i < cfg.depth - 1:
            skips.append(t)
            pooled, idx = maxpool2x2(t)
            cache["pool"].append((idx, t.shape))
            t = pooled

    for j in range(cfg.depth - 2, -1, -1):
        skip = skips[j]
        cache["concat"].append((skip.shape[1], t.shape))
        t = upsample2x_concat(t, skip)
        t = conv_block(f"dec{j}", t, 1)

    cache["head_in"] = t
    logits = _conv1x1(t, p["head.w"], p["head.b"])
    cache["logits"] = logits
    return softmax_channels(logits), cache


def unet_forward(
    model: UNetModel, x: np.ndarray, training: bool = False, dropout_seed: int = 0
) -> np.ndarray:
    probs, _ = unet_forward_cached(model, x, training=training, dropout_seed=dropout_seed)
    return probs


def unet_backward(model: UNetModel, cache: dict, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Backpropagate a logits gradient through the cached forward pass,
    returning parameter gradients keyed like ``model.params``."""
    cfg = model.config
    p = model.params
    grads: dict[str, np.ndarray] = {}

    def conv_block_backward(name: str, g: np.ndarray, dilation: int) -> np.ndarray:
        for k in (1, 0):
            layer = f"{name}.conv{k}"
            g = relu_backward(g, cache["pre_relu"][layer])
            g, d_w, d_b = conv2d_backward(g, cache["conv_in"][layer], p[f"{layer}.w"], dilation)
            grads[f"{layer}.w"] = d_w
            grads[f"{layer}.b"] = d_b
        return g

    g, d_w, d_b = _conv1x1_backward(grad_logits, cache["head_in"], p["head.w"])
    grads["head.w"] = d_w
    grads["head.b"] = d_b

    skip_grads: list[np.ndarray | None] = [None] * (cfg.depth - 1)
    for stage, j in enumerate(range(0, cfg.depth - 1)):
        g = conv_block_backward(f"dec{j}", g, 1)
        skip_channels, dec_shape = cache["concat"][cfg.depth - 2 - j]
        g, d_skip = upsample2x_concat_backward(g, skip_channels)
        skip_grads[j] = d_skip
        assert g.shape == dec_shape

    for i in range(cfg.depth - 1, -1, -1):
        if i < cfg.depth - 1:
            idx, pre_pool_shape = cache["pool"][i]
            g = maxpool2x2_backward(g, idx, pre_pool_shape)
            g = g + skip_grads[i]
        g = dropout_backward(g, cache["drop"][i])
        g = conv_block_backward(f"enc{i}", g, cfg.dilation)

    return grads


def serialize_model(model: UNetModel) -> bytes:
    """Checkpoint bytes: magic, version, config block, then parameter blobs
    as little-endian f64 in declaration order."""
    cfg = model.config
    head = CHECKPOINT_MAGIC + struct.pack("<I", CHECKPOINT_VERSION)
    cfg_block = struct.pack(
        "<IIIIdIQ",
        cfg.in_channels,
        cfg.n_classes,
        cfg.depth,
        cfg.base_filters,
        cfg.dropout_rate,
        cfg.dilation,
        cfg.seed % (1 << 64),
    )
    blobs = b"".join(model.params[name].astype("<f8").tobytes(order="C") for name in model.param_names)
    return head + cfg_block + blobs


def deserialize_model(data: bytes) -> UNetModel:
    cfg_fmt = "<IIIIdIQ"
    cfg_size = struct.calcsize(cfg_fmt)
    if len(data) < 8 + cfg_size:
        raise FormatError("checkpoint truncated before config block")
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {data[:4]!r}")
    (version,) = struct.unpack("<I", data[4:8])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    in_ch, n_classes, depth, base_filters, dropout_rate, dilation, seed = struct.unpack(
        cfg_fmt, data[8 : 8 + cfg_size]
    )
    try:
        config = UNetConfig(
            in_channels=in_ch,
            n_classes=n_classes,
            depth=depth,
            base_filters=base_filters,
            dropout_rate=dropout_rate,
            dilation=dilation,
            seed=seed,
        )
    except ValueError as exc:
        raise FormatError(f"invalid checkpoint config: {exc}") from None

    params: dict[str, np.ndarray] = {}
    offset = 8 + cfg_size
    for name, c_in, c_out, k in _conv_specs(config):
        for suffix, shape in ((".w", (c_out, c_in, k, k)), (".b", (c_out,))):
            nbytes = int(np.prod(shape)) * 8
            blob = data[offset : offset + nbytes]
            if len(blob) != nbytes:
                raise FormatError(f"checkpoint truncated in parameter {name}{suffix}")
            params[name + suffix] = np.frombuffer(blob, dtype="<f8").reshape(shape).copy()
            offset += nbytes
    if offset != len(data):
        raise FormatError(f"checkpoint has {len(data) - offset} trailing bytes")
    return UNetModel(config=config, params=params)
