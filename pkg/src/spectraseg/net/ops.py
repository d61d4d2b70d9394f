"""Dense tensor ops with hand-written backward passes.

Tensors are 64-bit numpy arrays in (batch, channels, height, width) layout.
Convolutions are 3x3 with a configurable dilation; zero padding equal to the
dilation keeps the spatial size unchanged, so an output pixel sees the 5x5
neighborhood {y, y+-d} x {x, x+-d}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import PadError, ShapeError

KERNEL = 3
PROB_FLOOR = 1e-12


def _check_conv_args(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> None:
    if x.ndim != 4:
        raise ShapeError(f"input must be (B, C, H, W), got {x.shape}")
    if w.ndim != 4 or w.shape[2:] != (KERNEL, KERNEL):
        raise ShapeError(f"weights must be (O, C, 3, 3), got {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input channels {x.shape[1]} != weight channels {w.shape[1]}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias must be ({w.shape[0]},), got {b.shape}")


def _windows(xp: np.ndarray, h: int, w: int, d: int) -> np.ndarray:
    """Stack the 9 dilated tap views of a padded input: (B, C, 3, 3, H, W)."""
    views = [
        [xp[:, :, i * d : i * d + h, j * d : j * d + w] for j in range(KERNEL)]
        for i in range(KERNEL)
    ]
    return np.stack([np.stack(row, axis=2) for row in views], axis=2)


def conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, dilation: int = 2) -> np.ndarray:
    """Same-size 3x3 convolution; out-of-range taps read zero."""
    _check_conv_args(x, weights, bias)
    d = int(dilation)
    if d < 1:
        raise ValueError("dilation must be >= 1")
    nb, c, h, w = x.shape
    o = weights.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (d, d), (d, d)))
    win = _windows(xp, h, w, d).reshape(nb, c * 9, h * w)
    wm = weights.reshape(o, c * 9)
    out = np.matmul(wm, win).reshape(nb, o, h, w)
    return out + bias[None, :, None, None]


def conv2d_backward(
    grad_out: np.ndarray, x: np.ndarray, weights: np.ndarray, dilation: int = 2
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d: returns (d_input, d_weights, d_bias)."""
    d = int(dilation)
    nb, c, h, w = x.shape
    o = weights.shape[0]
    if grad_out.shape != (nb, o, h, w):
        raise ShapeError(f"upstream gradient shape {grad_out.shape} != {(nb, o, h, w)}")
    xp = np.pad(x, ((0, 0), (0, 0), (d, d), (d, d)))
    win = _windows(xp, h, w, d).reshape(nb, c * 9, h * w)
    go = grad_out.reshape(nb, o, h * w)

    d_bias = grad_out.sum(axis=(0, 2, 3))
    d_weights = np.matmul(go, win.transpose(0, 2, 1)).sum(axis=0).reshape(o, c, KERNEL, KERNEL)

    wm = weights.reshape(o, c * 9)
    d_win = np.matmul(wm.T, go).reshape(nb, c, KERNEL, KERNEL, h, w)
    d_xp = np.zeros_like(xp)
    for i in range(KERNEL):
        for j in range(KERNEL):
            d_xp[:, :, i * d : i * d + h, j * d : j * d + w] += d_win[:, :, i, j]
    return d_xp[:, :, d : d + h, d : d + w], d_weights, d_bias


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Exact zeros get zero gradient.
    return grad_out * (x > 0.0)


def maxpool2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling; returns (pooled, argmax) with argmax in 0..3 per
    window (row-major within the window, first index wins ties)."""
    if x.ndim != 4:
        raise ShapeError(f"input must be (B, C, H, W), got {x.shape}")
    nb, c, h, w = x.shape
    if h % 2 or w % 2:
        raise PadError(f"H and W must be even for 2x2 pooling, got {h}x{w}")
    win = x.reshape(nb, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        nb, c, h // 2, w // 2, 4
    )
    idx = np.argmax(win, axis=-1)
    pooled = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return pooled, idx


def maxpool2x2_backward(grad_out: np.ndarray, argmax: np.ndarray, input_shape) -> np.ndarray:
    nb, c, h, w = input_shape
    win = np.zeros((nb, c, h // 2, w // 2, 4))
    np.put_along_axis(win, argmax[..., None], grad_out[..., None], axis=-1)
    return win.reshape(nb, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        nb, c, h, w
    )


def upsample2x_concat(decoder: np.ndarray, skip: np.ndarray) -> np.ndarray:
    """Nearest-neighbor 2x upsample of ``decoder`` concatenated after ``skip``."""
    if decoder.ndim != 4 or skip.ndim != 4:
        raise ShapeError("inputs must be (B, C, H, W)")
    nb, _, h, w = decoder.shape
    if skip.shape[0] != nb or skip.shape[2] != 2 * h or skip.shape[3] != 2 * w:
        raise ShapeError(
            f"skip spatial dims {skip.shape[2:]} must be twice decoder dims {(h, w)}"
        )
    up = decoder.repeat(2, axis=2).repeat(2, axis=3)
    return np.concatenate([skip, up], axis=1)


def upsample2x_concat_backward(
    grad_out: np.ndarray, skip_channels: int
) -> tuple[np.ndarray, np.ndarray]:
    """Split the concat gradient and fold the upsample replicas back down."""
    d_skip = grad_out[:, :skip_channels]
    d_up = grad_out[:, skip_channels:]
    nb, c, h2, w2 = d_up.shape
    d_decoder = d_up.reshape(nb, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))
    return d_decoder, d_skip


def dropout(
    x: np.ndarray, rate: float, seed: int, call_index: int = 0, training: bool = True
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout; identity outside training.  The mask is a pure
    function of (seed, call_index), so repeated calls are reproducible."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("rate must be in [0, 1)")
    if not training or rate == 0.0:
        return x, None
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence([int(seed), int(call_index)]))
    )
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


def dropout_backward(grad_out: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return grad_out if mask is None else grad_out * mask


def softmax_channels(logits: np.ndarray) -> np.ndarray:
    """Per-pixel softmax across the channel axis with max subtraction."""
    if logits.ndim != 4 or logits.shape[1] < 2:
        raise ShapeError(f"logits must be (B, C>=2, H, W), got {logits.shape}")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class LossOutput:
    """Weighted cross-entropy value and its gradient w.r.t. the logits.

    ``weighted_sum`` and ``weight_total`` expose the unnormalized accumulator
    (value = weighted_sum / weight_total); ``per_class_sum`` splits the
    accumulator by target class.
    """

    value: float
    grad_logits: np.ndarray
    weighted_sum: float
    weight_total: float
    per_class_sum: np.ndarray


def weighted_ce_loss(probs: np.ndarray, targets: np.ndarray, class_weights: np.ndarray) -> LossOutput:
    """Class-weighted categorical cross entropy, normalized by the summed
    applied weights; the gradient is w.r.t. pre-softmax logits (fused form).
    """
    if probs.ndim != 4:
        raise ShapeError(f"probs must be (B, C, H, W), got {probs.shape}")
    nb, c, h, w = probs.shape
    if targets.shape != (nb, h, w):
        raise ShapeError(f"targets must be {(nb, h, w)}, got {targets.shape}")
    weights = np.asarray(class_weights, dtype=np.float64)
    if weights.shape != (c,):
        raise ShapeError(f"class_weights must be ({c},), got {weights.shape}")
    if weights.min() < 0:
        raise ValueError("class weights must be >= 0")

    t = targets.astype(np.int64)
    if t.min() < 0 or t.max() >= c:
        raise ValueError("target labels out of range")
    pix_w = weights[t]                                        # (B, H, W)
    p_true = np.take_along_axis(probs, t[:, None], axis=1)[:, 0]
    nll = -np.log(np.maximum(p_true, PROB_FLOOR))

    per_class = np.zeros(c)
    np.add.at(per_class, t.ravel(), (pix_w * nll).ravel())
    weighted_sum = float(per_class.sum())
    weight_total = float(pix_w.sum())
    value = weighted_sum / weight_total if weight_total > 0 else 0.0

    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, t[:, None], 1.0, axis=1)
    denom = weight_total if weight_total > 0 else 1.0
    grad = pix_w[:, None] * (probs - onehot) / denom
    return LossOutput(
        value=value,
        grad_logits=grad,
        weighted_sum=weighted_sum,
        weight_total=weight_total,
        per_class_sum=per_class,
    )
