"""Dense tensor layer operations with hand-derived gradients.

Everything here operates on plain numpy arrays in channels-first layout.
Single examples are 3D (C, H, W); a leading batch axis is accepted everywhere
so the training loop can amortize the im2col work across a minibatch.
All functions are pure; the one exception is ``sgd_momentum_step`` which
updates the parameter and velocity arrays it owns in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when an operation receives arrays with incompatible shapes."""


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Promote a 3D (C,H,W) array to 4D (1,C,H,W). Returns (array, was_3d)."""
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected 3D or 4D input, got shape {x.shape}")


def conv2d_output_shape(h: int, w: int, k: int, stride: int) -> tuple[int, int]:
    """Valid (no padding) convolution output size; trailing pixels discarded."""
    if h < k or w < k:
        raise ShapeError(f"input {h}x{w} smaller than kernel {k}x{k}")
    return (h - k) // stride + 1, (w - k) // stride + 1


def _im2col(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """(N,C,H,W) -> (N, C*k*k, Ho*Wo) column matrix."""
    n, c, h, w = x.shape
    ho, wo = conv2d_output_shape(h, w, k, stride)
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]          # N,C,Ho,Wo,k,k
    win = win.transpose(0, 1, 4, 5, 2, 3)        # N,C,k,k,Ho,Wo
    return np.ascontiguousarray(win).reshape(n, c * k * k, ho * wo)


def _col2im(cols: np.ndarray, x_shape: tuple, k: int, stride: int) -> np.ndarray:
    """Scatter-add the column matrix back onto the input grid."""
    n, c, h, w = x_shape
    ho, wo = conv2d_output_shape(h, w, k, stride)
    cols = cols.reshape(n, c, k, k, ho, wo)
    x = np.zeros(x_shape, dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            x[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, i, j]
    return x


def conv2d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray,
                   stride: int) -> np.ndarray:
    """Valid convolution: out[o, i, j] = bias[o] + sum(filter_o * window_ij)."""
    xb, squeeze = _as_batch(x)
    c_out, c_in, k, k2 = weights.shape
    if k != k2:
        raise ShapeError(f"non-square kernel {k}x{k2}")
    if xb.shape[1] != c_in:
        raise ShapeError(
            f"input has {xb.shape[1]} channels, weights expect {c_in}")
    if bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} != ({c_out},)")
    n = xb.shape[0]
    ho, wo = conv2d_output_shape(xb.shape[2], xb.shape[3], k, stride)
    cols = _im2col(xb, k, stride)
    out = weights.reshape(c_out, -1) @ cols      # broadcast over batch
    out = out.reshape(n, c_out, ho, wo) + bias[None, :, None, None]
    return out[0] if squeeze else out


@dataclass
class LayerGradients:
    weight_grad: np.ndarray
    bias_grad: np.ndarray
    input_grad: np.ndarray


def conv2d_backward(x: np.ndarray, weights: np.ndarray, stride: int,
                    output_grad: np.ndarray) -> LayerGradients:
    xb, squeeze = _as_batch(x)
    gb, _ = _as_batch(output_grad)
    c_out, c_in, k, _ = weights.shape
    n = xb.shape[0]
    ho, wo = conv2d_output_shape(xb.shape[2], xb.shape[3], k, stride)
    if gb.shape != (n, c_out, ho, wo):
        raise ShapeError(
            f"output_grad shape {output_grad.shape} does not match "
            f"forward output ({c_out},{ho},{wo})")
    cols = _im2col(xb, k, stride)                # N, C*k*k, L
    g = gb.reshape(n, c_out, ho * wo)
    w2 = weights.reshape(c_out, -1)
    # fold the batch axis into the spatial one so both products hit BLAS
    g_flat = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(c_out, -1)
    cols_flat = np.ascontiguousarray(cols.transpose(1, 0, 2)).reshape(len(w2[0]), -1)
    weight_grad = (g_flat @ cols_flat.T).reshape(weights.shape)
    bias_grad = g.sum(axis=(0, 2))
    dcols = np.matmul(w2.T[None], g)             # batched (C*k*k, L)
    input_grad = _col2im(dcols, xb.shape, k, stride)
    if squeeze:
        input_grad = input_grad[0]
    return LayerGradients(weight_grad, bias_grad, input_grad)


def maxpool2d_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling with stride 2. Returns (pooled, argmax in 0..3)."""
    xb, squeeze = _as_batch(x)
    n, c, h, w = xb.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d needs even spatial dims, got {h}x{w}")
    win = xb.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    if squeeze:
        return out[0], arg[0]
    return out, arg


def maxpool2d_backward(argmax: np.ndarray, input_shape: tuple,
                       output_grad: np.ndarray) -> np.ndarray:
    """Route each output gradient to the window position that won the max."""
    gb, squeeze = _as_batch(output_grad)
    ab = argmax[None] if argmax.ndim == 3 else argmax
    n, c, ho, wo = gb.shape
    win = np.zeros((n, c, ho, wo, 4), dtype=gb.dtype)
    np.put_along_axis(win, ab[..., None], gb[..., None], axis=-1)
    win = win.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    x = win.reshape(n, c, 2 * ho, 2 * wo)
    if x.shape[-4:] != tuple(input_shape)[-4:] and x.shape[1:] != tuple(input_shape)[-3:]:
        raise ShapeError(f"reconstructed shape {x.shape} != input {input_shape}")
    return x[0] if squeeze else x


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, output_grad: np.ndarray) -> np.ndarray:
    return output_grad * (x > 0)


def linear_forward(x: np.ndarray, weights: np.ndarray,
                   bias: np.ndarray) -> np.ndarray:
    """weights @ x + bias. x may be (N,) or batched (B, N)."""
    m, n = weights.shape
    if x.shape[-1] != n:
        raise ShapeError(f"input length {x.shape[-1]} != weight columns {n}")
    if bias.shape != (m,):
        raise ShapeError(f"bias shape {bias.shape} != ({m},)")
    return x @ weights.T + bias


def linear_backward(x: np.ndarray, weights: np.ndarray,
                    output_grad: np.ndarray) -> LayerGradients:
    if output_grad.shape[-1] != weights.shape[0]:
        raise ShapeError(
            f"output_grad length {output_grad.shape[-1]} != rows {weights.shape[0]}")
    if x.ndim == 1:
        weight_grad = np.outer(output_grad, x)
        bias_grad = output_grad.copy()
    else:
        weight_grad = output_grad.T @ x
        bias_grad = output_grad.sum(axis=0)
    input_grad = output_grad @ weights
    return LayerGradients(weight_grad, bias_grad, input_grad)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_nll(logits: np.ndarray, target) -> tuple[np.ndarray, np.ndarray]:
    """Negative log likelihood of ``target`` under softmax(logits).

    Returns (loss, gradient wrt logits). Batched input (B, K) with a target
    index per row returns per-row losses and gradients.
    """
    k = logits.shape[-1]
    targets = np.atleast_1d(np.asarray(target, dtype=np.intp))
    if np.any(targets < 0) or np.any(targets >= k):
        raise IndexError(f"target out of range for {k} classes")
    p = softmax(logits)
    if logits.ndim == 1:
        loss = -np.log(p[targets[0]])
        grad = p.copy()
        grad[targets[0]] -= 1
        return loss, grad
    rows = np.arange(logits.shape[0])
    loss = -np.log(p[rows, targets])
    grad = p.copy()
    grad[rows, targets] -= 1
    return loss, grad


@dataclass
class SgdState:
    """Classical momentum: v <- mu*v - lr*g; theta <- theta + v."""
    momentum_coefficient: float = 0.08
    velocity: dict = field(default_factory=dict)

    def velocity_for(self, name: str, param: np.ndarray) -> np.ndarray:
        if name not in self.velocity:
            self.velocity[name] = np.zeros_like(param)
        return self.velocity[name]


def sgd_momentum_step(params: dict, grads: dict, state: SgdState,
                      learning_rate: float) -> None:
    """One in-place momentum update over a dict of named parameter arrays."""
    mu = state.momentum_coefficient
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"grad shape {g.shape} != param {p.shape} ({name})")
        v = state.velocity_for(name, p)
        v *= mu
        v -= learning_rate * g
        p += v
