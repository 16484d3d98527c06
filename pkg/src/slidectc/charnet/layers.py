"""Primitive operations with hand-written backward passes.

Activations use NHWC layout. Each op reads its parameters from, and writes
gradients into, dictionaries owned by the network, keyed by tensor name.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class ConvOp:
    def __init__(self, name: str, in_ch: int, maps: int, kernel: int, stride: int, pad: int):
        self.w, self.b = f"{name}.weight", f"{name}.bias"
        self.in_ch, self.maps, self.k, self.s, self.p = in_ch, maps, kernel, stride, pad
        self.needs_input_grad = True

    def param_shapes(self):
        return {self.w: (self.maps, self.in_ch, self.k, self.k), self.b: (self.maps,)}

    def fan_in(self):
        return self.in_ch * self.k * self.k

    def out_size(self, size: int) -> int:
        return (size + 2 * self.p - self.k) // self.s + 1

    def forward(self, x, tensors, train, rng):
        B, H, W, C = x.shape
        k, s, p = self.k, self.s, self.p
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s]  # [B, Ho, Wo, C, k, k]
        Ho, Wo = win.shape[1:3]
        cols = win.reshape(B * Ho * Wo, C * k * k)
        wmat = tensors[self.w].reshape(self.maps, -1)
        y = cols @ wmat.T + tensors[self.b]
        self.cache = (cols, x.shape, Ho, Wo) if train else None
        return y.reshape(B, Ho, Wo, self.maps)

    def backward(self, dy, tensors, grads):
        cols, (B, H, W, C), Ho, Wo = self.cache
        k, s, p = self.k, self.s, self.p
        dy2 = dy.reshape(-1, self.maps)
        grads[self.w] = (dy2.T @ cols).reshape(self.maps, C, k, k)
        grads[self.b] = dy2.sum(axis=0)
        self.cache = None
        if not self.needs_input_grad:
            return None
        taps = np.ascontiguousarray(tensors[self.w].transpose(2, 3, 0, 1))  # [k, k, maps, C]
        dxp = np.zeros((B, H + 2 * p, W + 2 * p, C), dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * Ho:s, j:j + s * Wo:s, :] += (dy2 @ taps[i, j]).reshape(B, Ho, Wo, C)
        return dxp[:, p:p + H, p:p + W, :]


class DenseOp:
    def __init__(self, name: str, in_features: int, units: int):
        self.w, self.b = f"{name}.weight", f"{name}.bias"
        self.in_features, self.units = in_features, units

    def param_shapes(self):
        return {self.w: (self.units, self.in_features), self.b: (self.units,)}

    def fan_in(self):
        return self.in_features

    def forward(self, x, tensors, train, rng):
        x2 = x.reshape(x.shape[0], -1)
        self.cache = (x2, x.shape) if train else None
        return x2 @ tensors[self.w].T + tensors[self.b]

    def backward(self, dy, tensors, grads):
        x2, shape = self.cache
        grads[self.w] = dy.T @ x2
        grads[self.b] = dy.sum(axis=0)
        self.cache = None
        return (dy @ tensors[self.w]).reshape(shape)


class BatchNormOp:
    """Normalizes over every axis but the last (channels / features)."""

    def __init__(self, name: str, features: int):
        self.gamma, self.beta = f"{name}.gamma", f"{name}.beta"
        self.mean, self.var = f"{name}.running_mean", f"{name}.running_var"
        self.features = features

    def param_shapes(self):
        return {self.gamma: (self.features,), self.beta: (self.features,)}

    def buffer_shapes(self):
        return {self.mean: (self.features,), self.var: (self.features,)}

    def forward(self, x, tensors, train, rng):
        axes = tuple(range(x.ndim - 1))
        if not train:
            scale = tensors[self.gamma] / np.sqrt(tensors[self.var] + BN_EPS)
            return (x - tensors[self.mean]) * scale + tensors[self.beta]
        n = x.size // x.shape[-1]
        mu = x.mean(axis=axes)
        centered = x - mu
        var = (centered * centered).mean(axis=axes)
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = centered * inv_std
        unbiased = var * (n / (n - 1)) if n > 1 else var
        tensors[self.mean] = (1 - BN_MOMENTUM) * tensors[self.mean] + BN_MOMENTUM * mu
        tensors[self.var] = (1 - BN_MOMENTUM) * tensors[self.var] + BN_MOMENTUM * unbiased
        self.cache = (xhat, inv_std, axes, n)
        return xhat * tensors[self.gamma] + tensors[self.beta]

    def backward(self, dy, tensors, grads):
        xhat, inv_std, axes, n = self.cache
        grads[self.gamma] = (dy * xhat).sum(axis=axes)
        grads[self.beta] = dy.sum(axis=axes)
        dxhat = dy * tensors[self.gamma]
        self.cache = None
        return inv_std / n * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


class ReluOp:
    def forward(self, x, tensors, train, rng):
        if train:
            self.cache = x > 0
        return np.maximum(x, 0)

    def backward(self, dy, tensors, grads):
        mask, self.cache = self.cache, None
        return dy * mask


class DropoutOp:
    def __init__(self, rate: float):
        self.rate = rate

    def forward(self, x, tensors, train, rng):
        if not train or self.rate == 0.0:
            self.cache = None
            return x
        keep = (rng.random(x.shape) >= self.rate).astype(x.dtype) / (1.0 - self.rate)
        self.cache = keep
        return x * keep

    def backward(self, dy, tensors, grads):
        keep, self.cache = self.cache, None
        return dy if keep is None else dy * keep


class MaxPoolOp:
    def __init__(self, window: int, stride: int):
        self.k, self.s = window, stride

    def out_size(self, size: int) -> int:
        return (size - self.k) // self.s + 1

    def forward(self, x, tensors, train, rng):
        B, H, W, C = x.shape
        k, s = self.k, self.s
        Ho, Wo = self.out_size(H), self.out_size(W)
        out = None
        arg = np.zeros((B, Ho, Wo, C), dtype=np.int16) if train else None
        for idx in range(k * k):
            i, j = divmod(idx, k)
            view = x[:, i:i + s * Ho:s, j:j + s * Wo:s, :]
            if out is None:
                out = view.copy()
                continue
            better = view > out  # ties keep the first (top-left) position
            out = np.where(better, view, out)
            if train:
                arg[better] = idx
        self.cache = (arg, x.shape) if train else None
        return out

    def backward(self, dy, tensors, grads):
        arg, shape = self.cache
        B, H, W, C = shape
        k, s = self.k, self.s
        Ho, Wo = dy.shape[1:3]
        dx = np.zeros(shape, dtype=dy.dtype)
        for idx in range(k * k):
            i, j = divmod(idx, k)
            dx[:, i:i + s * Ho:s, j:j + s * Wo:s, :] += np.where(arg == idx, dy, 0)
        self.cache = None
        return dx
