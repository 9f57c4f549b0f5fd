"""LeNet-style glyph feature network with hand-written forward/backward.

Layout for a 28x28 binary input: conv(5x5, 6) -> ReLU -> maxpool 2x2 ->
conv(5x5, 16) -> ReLU -> maxpool 2x2 -> flatten(256) -> fc 120 -> ReLU ->
fc 84 -> ReLU -> fc d. Convolutions are valid (no padding), stride 1;
pooling is 2x2 stride 2 with first-position (row-major) tie-break.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

INPUT_SIDE = 28
FLAT_SIZE = 256  # 16 * 4 * 4 after two conv/pool stages


@dataclass
class CnnParams:
    conv1_w: np.ndarray  # (6, 1, 5, 5)
    conv1_b: np.ndarray  # (6,)
    conv2_w: np.ndarray  # (16, 6, 5, 5)
    conv2_b: np.ndarray  # (16,)
    fc1_w: np.ndarray    # (256, 120)
    fc1_b: np.ndarray    # (120,)
    fc2_w: np.ndarray    # (120, 84)
    fc2_b: np.ndarray    # (84,)
    fc3_w: np.ndarray    # (84, d)
    fc3_b: np.ndarray    # (d,)

    # Declared tensor order; checkpoints and accumulators follow it.
    FIELDS = ("conv1_w", "conv1_b", "conv2_w", "conv2_b",
              "fc1_w", "fc1_b", "fc2_w", "fc2_b", "fc3_w", "fc3_b")

    @property
    def dim(self) -> int:
        return self.fc3_w.shape[1]

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in self.FIELDS]

    def zeros_like(self) -> "CnnParams":
        return CnnParams(*(np.zeros_like(t) for _, t in self.tensors()))

    def astype(self, dtype) -> "CnnParams":
        return CnnParams(*(t.astype(dtype) for _, t in self.tensors()))


def cnn_init(seed: int, d: int, dtype=np.float32) -> CnnParams:
    """Glorot-uniform weights (fan computed per layer), zero biases."""
    if d < 1:
        raise ValueError(f"output dimension must be >= 1, got {d}")
    rng = np.random.default_rng(seed)

    def glorot(shape, fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=shape).astype(dtype)

    return CnnParams(
        conv1_w=glorot((6, 1, 5, 5), 1 * 25, 6 * 25),
        conv1_b=np.zeros(6, dtype=dtype),
        conv2_w=glorot((16, 6, 5, 5), 6 * 25, 16 * 25),
        conv2_b=np.zeros(16, dtype=dtype),
        fc1_w=glorot((FLAT_SIZE, 120), FLAT_SIZE, 120),
        fc1_b=np.zeros(120, dtype=dtype),
        fc2_w=glorot((120, 84), 120, 84),
        fc2_b=np.zeros(84, dtype=dtype),
        fc3_w=glorot((84, d), 84, d),
        fc3_b=np.zeros(d, dtype=dtype),
    )


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    # x: (B, C, H, W) -> (B, Ho, Wo, C*k*k)
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # (B, C, Ho, Wo, k, k)
    b, c, ho, wo = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho, wo, c * k * k)


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    o, c, k, _ = w.shape
    col = _im2col(x, k)
    out = col @ w.reshape(o, -1).T + b        # (B, Ho, Wo, O)
    return out.transpose(0, 3, 1, 2), col     # (B, O, Ho, Wo)


def _conv_backward(dout: np.ndarray, col: np.ndarray, w: np.ndarray, x_shape):
    # dout: (B, O, Ho, Wo); col: (B, Ho, Wo, C*k*k)
    o, c, k, _ = w.shape
    d = dout.transpose(0, 2, 3, 1)            # (B, Ho, Wo, O)
    dw = np.tensordot(d, col, axes=([0, 1, 2], [0, 1, 2])).reshape(w.shape)
    db = d.sum(axis=(0, 1, 2))
    dcol = d @ w.reshape(o, -1)               # (B, Ho, Wo, C*k*k)
    b, ho, wo = dcol.shape[:3]
    dcol = dcol.reshape(b, ho, wo, c, k, k)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + ho, j:j + wo] += dcol[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx, dw, db


def _pool_forward(x: np.ndarray):
    b, c, h, w = x.shape
    win = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(b, c, h // 2, w // 2, 4)
    # argmax over the row-major 2x2 window; np.argmax keeps the first max
    argmax = win.argmax(axis=-1)
    out = np.take_along_axis(win, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def _pool_backward(dout: np.ndarray, argmax: np.ndarray, x_shape):
    b, c, h, w = x_shape
    dwin = np.zeros((b, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, argmax[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return dwin.reshape(b, c, h, w)


@dataclass
class CnnTape:
    """Cached activations and pooling argmaxes from one forward pass."""
    x: np.ndarray
    col1: np.ndarray
    pre1: np.ndarray
    argmax1: np.ndarray
    pool1: np.ndarray
    col2: np.ndarray
    pre2: np.ndarray
    argmax2: np.ndarray
    flat: np.ndarray
    pre_fc1: np.ndarray
    pre_fc2: np.ndarray
    hidden2: np.ndarray
    dim: int


def cnn_forward_batch(params: CnnParams, bitmaps: np.ndarray, dtype=None):
    """Feature vectors for a stack of bitmaps, shape (B, 28, 28)."""
    bitmaps = np.asarray(bitmaps)
    if bitmaps.ndim != 3 or bitmaps.shape[1:] != (INPUT_SIDE, INPUT_SIDE):
        raise ValueError(f"expected (B, {INPUT_SIDE}, {INPUT_SIDE}) bitmaps, got {bitmaps.shape}")
    if dtype is None:
        dtype = params.conv1_w.dtype
    x = bitmaps.astype(dtype).reshape(-1, 1, INPUT_SIDE, INPUT_SIDE)

    pre1, col1 = _conv_forward(x, params.conv1_w, params.conv1_b)   # (B,6,24,24)
    act1 = np.maximum(pre1, 0)
    pool1, argmax1 = _pool_forward(act1)                            # (B,6,12,12)
    pre2, col2 = _conv_forward(pool1, params.conv2_w, params.conv2_b)  # (B,16,8,8)
    act2 = np.maximum(pre2, 0)
    pool2, argmax2 = _pool_forward(act2)                            # (B,16,4,4)
    flat = pool2.reshape(len(x), FLAT_SIZE)
    pre_fc1 = flat @ params.fc1_w + params.fc1_b
    h1 = np.maximum(pre_fc1, 0)
    pre_fc2 = h1 @ params.fc2_w + params.fc2_b
    h2 = np.maximum(pre_fc2, 0)
    feature = h2 @ params.fc3_w + params.fc3_b
    tape = CnnTape(x, col1, pre1, argmax1, pool1, col2, pre2, argmax2,
                   flat, pre_fc1, pre_fc2, h2, params.dim)
    return feature, tape


def cnn_forward(params: CnnParams, bitmap: np.ndarray):
    """Single-bitmap convenience wrapper; returns (d-vector, tape)."""
    feature, tape = cnn_forward_batch(params, np.asarray(bitmap)[None])
    return feature[0], tape


def cnn_backward_batch(params: CnnParams, tape: CnnTape, grad_output: np.ndarray) -> CnnParams:
    """Gradient of sum_b grad_output[b] . feature[b] w.r.t. every parameter."""
    grad_output = np.asarray(grad_output, dtype=tape.flat.dtype)
    if grad_output.shape != (len(tape.x), tape.dim):
        raise ValueError(f"grad_output shape {grad_output.shape} does not match "
                         f"tape batch {(len(tape.x), tape.dim)}")
    h1 = np.maximum(tape.pre_fc1, 0)

    dfc3_w = tape.hidden2.T @ grad_output
    dfc3_b = grad_output.sum(axis=0)
    dh2 = (grad_output @ params.fc3_w.T) * (tape.pre_fc2 > 0)
    dfc2_w = h1.T @ dh2
    dfc2_b = dh2.sum(axis=0)
    dh1 = (dh2 @ params.fc2_w.T) * (tape.pre_fc1 > 0)
    dfc1_w = tape.flat.T @ dh1
    dfc1_b = dh1.sum(axis=0)
    dflat = dh1 @ params.fc1_w.T

    dpool2 = dflat.reshape(-1, 16, 4, 4)
    dact2 = _pool_backward(dpool2, tape.argmax2, tape.pre2.shape)
    dpre2 = dact2 * (tape.pre2 > 0)
    dpool1, dconv2_w, dconv2_b = _conv_backward(dpre2, tape.col2, params.conv2_w, tape.pool1.shape)
    dact1 = _pool_backward(dpool1, tape.argmax1, tape.pre1.shape)
    dpre1 = dact1 * (tape.pre1 > 0)
    _, dconv1_w, dconv1_b = _conv_backward(dpre1, tape.col1, params.conv1_w, tape.x.shape)

    return CnnParams(dconv1_w, dconv1_b, dconv2_w, dconv2_b,
                     dfc1_w, dfc1_b, dfc2_w, dfc2_b, dfc3_w, dfc3_b)


def cnn_backward(params: CnnParams, tape: CnnTape, grad_output: np.ndarray) -> CnnParams:
    """Single-sample wrapper matching cnn_forward."""
    grad_output = np.asarray(grad_output)
    if grad_output.ndim == 1:
        grad_output = grad_output[None]
    return cnn_backward_batch(params, tape, grad_output)
