"""Fully connected network with LayerNorm and GELU, hand-written backprop.

Hidden blocks are ``Linear -> LayerNorm -> GELU``; the last layer is a plain
``Linear``. Inputs are batched row-wise, shape ``(B, in_features)``.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erf

from ..errors import DimensionError

SMALL_HIDDEN = (128,)
FULL_HIDDEN = (128, 256, 256, 128)
LN_EPS = 1e-5
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return cdf + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


def layernorm_forward(x, gamma, beta, eps=LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv_std = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv_std
    return gamma * xhat + beta, (xhat, inv_std)


def layernorm_backward(dy, gamma, cache):
    xhat, inv_std = cache
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    dx = inv_std * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


class MlpModel:
    """Parameters of the subspace network, keyed by name.

    ``W{i}`` has shape ``(out, in)``; hidden layer ``i`` additionally owns
    ``gamma{i}`` and ``beta{i}``.
    """

    def __init__(self, widths, params=None, seed=0):
        self.widths = tuple(int(w) for w in widths)
        if len(self.widths) < 2:
            raise ValueError("need at least input and output widths")
        self.params = params if params is not None else self._he_init(seed)
        for name, shape in self.param_shapes().items():
            if self.params[name].shape != shape:
                raise DimensionError(f"parameter {name} has shape {self.params[name].shape}, "
                                     f"expected {shape}")

    @classmethod
    def for_problem(cls, n: int, K: int, r: int, hidden=SMALL_HIDDEN, seed=0) -> "MlpModel":
        return cls((n * K, *hidden, n * r), seed=seed)

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def in_features(self) -> int:
        return self.widths[0]

    @property
    def out_features(self) -> int:
        return self.widths[-1]

    def param_shapes(self) -> dict[str, tuple]:
        shapes = {}
        for i in range(self.n_layers):
            fan_in, fan_out = self.widths[i], self.widths[i + 1]
            shapes[f"W{i}"] = (fan_out, fan_in)
            shapes[f"b{i}"] = (fan_out,)
            if i < self.n_layers - 1:
                shapes[f"gamma{i}"] = (fan_out,)
                shapes[f"beta{i}"] = (fan_out,)
        return shapes

    def _he_init(self, seed):
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in self.param_shapes().items():
            if name.startswith("W"):
                params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[1]), size=shape)
            elif name.startswith("gamma"):
                params[name] = np.ones(shape)
            else:
                params[name] = np.zeros(shape)
        return params

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def forward(self, x):
        """Return ``(output, cache)`` for a batch ``x`` of shape ``(B, in)``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.in_features:
            raise DimensionError(f"input width {x.shape[1]} != {self.in_features}")
        cache = []
        h = x
        last = self.n_layers - 1
        for i in range(self.n_layers):
            z = h @ self.params[f"W{i}"].T + self.params[f"b{i}"]
            if i == last:
                cache.append((h,))
                return z, cache
            y, ln_cache = layernorm_forward(z, self.params[f"gamma{i}"], self.params[f"beta{i}"])
            cache.append((h, ln_cache, y))
            h = gelu(y)
        raise AssertionError("unreachable")

    def backward(self, cache, dout) -> tuple[dict, np.ndarray]:
        """Parameter gradients and input gradient for upstream ``dout``."""
        grads = {}
        g = dout
        for i in reversed(range(self.n_layers)):
            h = cache[i][0]
            if i < self.n_layers - 1:
                _, ln_cache, y = cache[i]
                g = g * gelu_grad(y)
                g, grads[f"gamma{i}"], grads[f"beta{i}"] = layernorm_backward(
                    g, self.params[f"gamma{i}"], ln_cache)
            grads[f"W{i}"] = g.T @ h
            grads[f"b{i}"] = g.sum(axis=0)
            g = g @ self.params[f"W{i}"]
        return grads, g

    def copy(self) -> "MlpModel":
        return MlpModel(self.widths, {k: v.copy() for k, v in self.params.items()})


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        root_c2 = np.sqrt(1.0 - b2 ** self.t)
        # lr * (m/c1) / (sqrt(v/c2) + eps) with the corrections folded into scalars
        step_size = self.lr * root_c2 / c1
        eps = self.eps * root_c2
        for name, g in grads.items():
            m, v = self.m[name], self.v[name]
            tmp = np.subtract(g, m)
            m += (1.0 - b1) * tmp
            np.multiply(g, g, out=tmp)
            v *= b2
            tmp *= 1.0 - b2
            v += tmp
            np.sqrt(v, out=tmp)
            tmp += eps
            np.divide(m, tmp, out=tmp)
            tmp *= step_size
            params[name] -= tmp
