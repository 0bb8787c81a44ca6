"""Differentiable layers over [H, W, C] feature maps and flat vectors.

Every layer caches what its backward pass needs during forward, accumulates
parameter gradients into Param.grad, and returns the gradient with respect
to its input. Single-image layout (no batch axis) except where noted.
"""

from __future__ import annotations

import numpy as np

from .core import Param, he_normal


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, output in (0, 1)."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


class Activation:
    """Elementwise sigmoid, tanh, or relu with analytic derivative."""

    KINDS = ("sigmoid", "tanh", "relu")

    def __init__(self, kind: str):
        if kind not in self.KINDS:
            raise ValueError(f"unknown activation {kind!r}, expected one of {self.KINDS}")
        self.kind = kind
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind == "relu":
            self._cache = x > 0.0
            return np.maximum(x, 0.0)
        if self.kind == "sigmoid":
            y = sigmoid(x)
        else:
            y = np.tanh(x)
        self._cache = y
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self.kind == "relu":
            return grad_out * self._cache
        if self.kind == "sigmoid":
            y = self._cache
            return grad_out * y * (1.0 - y)
        y = self._cache
        return grad_out * (1.0 - y * y)

    def params(self) -> list[Param]:
        return []


class Conv2d:
    """2D convolution on [H, W, C] maps with square k x k filters.

    Output H' = (H + 2*pad - k) // stride + 1, likewise W'. Forward runs as
    im2col + matmul; backward scatters column gradients back per kernel tap.
    """

    def __init__(
        self,
        ksize: int,
        in_channels: int,
        out_channels: int,
        stride: int = 1,
        pad: int = 0,
        rng: np.random.Generator | None = None,
        name: str = "conv",
        use_bias: bool = True,
    ):
        if ksize < 1 or stride < 1 or pad < 0:
            raise ValueError(f"bad conv geometry k={ksize} stride={stride} pad={pad}")
        rng = rng if rng is not None else np.random.default_rng()
        fan_in = ksize * ksize * in_channels
        self.weights = Param(
            he_normal(rng, (ksize, ksize, in_channels, out_channels), fan_in),
            name=f"{name}.weights",
        )
        # a bias feeding batch norm is redundant (mean subtraction removes it)
        self.bias = Param(np.zeros(out_channels), name=f"{name}.bias") if use_bias else None
        self.ksize = ksize
        self.stride = stride
        self.pad = pad
        self._cols = None
        self._in_shape = None

    def out_shape(self, h: int, w: int) -> tuple[int, int]:
        k, s, p = self.ksize, self.stride, self.pad
        if k > h + 2 * p or k > w + 2 * p:
            raise ValueError(
                f"kernel {k}x{k} larger than padded input {h + 2 * p}x{w + 2 * p}"
            )
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def _im2col(self, xp: np.ndarray, oh: int, ow: int) -> np.ndarray:
        k, s = self.ksize, self.stride
        sh, sw, sc = xp.strides
        windows = np.lib.stride_tricks.as_strided(
            xp,
            shape=(oh, ow, k, k, xp.shape[2]),
            strides=(s * sh, s * sw, sh, sw, sc),
            writeable=False,
        )
        return windows.reshape(oh * ow, k * k * xp.shape[2])

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3:
            raise ValueError(f"conv input must be [H,W,C], got shape {x.shape}")
        k = self.ksize
        cin = self.weights.value.shape[2]
        if x.shape[2] != cin:
            raise ValueError(
                f"conv input has {x.shape[2]} channels but filters expect {cin}"
            )
        oh, ow = self.out_shape(x.shape[0], x.shape[1])
        xp = np.pad(x, ((self.pad, self.pad), (self.pad, self.pad), (0, 0))) if self.pad else x
        cols = np.ascontiguousarray(self._im2col(xp, oh, ow))
        wmat = self.weights.value.reshape(k * k * cin, -1)
        out = cols @ wmat
        if self.bias is not None:
            out += self.bias.value
        self._cols = cols
        self._in_shape = x.shape
        return out.reshape(oh, ow, -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        h, w, cin = self._in_shape
        k, s, p = self.ksize, self.stride, self.pad
        oh, ow, cout = grad_out.shape
        g = grad_out.reshape(oh * ow, cout)

        wmat = self.weights.value.reshape(k * k * cin, cout)
        self.weights.grad += (self._cols.T @ g).reshape(self.weights.value.shape)
        if self.bias is not None:
            self.bias.grad += g.sum(axis=0)

        gcols = (g @ wmat.T).reshape(oh, ow, k, k, cin)
        gxp = np.zeros((h + 2 * p, w + 2 * p, cin))
        for a in range(k):
            for b in range(k):
                gxp[a : a + s * oh : s, b : b + s * ow : s, :] += gcols[:, :, a, b, :]
        return gxp[p : p + h, p : p + w, :] if p else gxp

    def params(self) -> list[Param]:
        return [self.weights, self.bias] if self.bias is not None else [self.weights]


class MaxPool2x2:
    """2x2 max pooling with stride 2; H and W must be even.

    Backward routes each cell's gradient to the first scanned maximum within
    its window (row-major window order).
    """

    def __init__(self):
        self._argmax = None
        self._in_shape = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        h, w, c = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"max pool needs even dimensions, got {h}x{w} (caller pads)")
        windows = x.reshape(h // 2, 2, w // 2, 2, c).transpose(0, 2, 1, 3, 4)
        flat = windows.reshape(h // 2, w // 2, 4, c)
        self._argmax = flat.argmax(axis=2)
        self._in_shape = x.shape
        return flat.max(axis=2)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        h, w, c = self._in_shape
        gflat = np.zeros((h // 2, w // 2, 4, c))
        oh, ow = h // 2, w // 2
        ii, jj, cc = np.meshgrid(np.arange(oh), np.arange(ow), np.arange(c), indexing="ij")
        gflat[ii, jj, self._argmax, cc] = grad_out
        return gflat.reshape(oh, ow, 2, 2, c).transpose(0, 2, 1, 3, 4).reshape(h, w, c)

    def params(self) -> list[Param]:
        return []


class Linear:
    """Affine map x @ W + b for x of shape [N] or a batch [B, N]."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator | None = None,
        name: str = "fc",
    ):
        rng = rng if rng is not None else np.random.default_rng()
        self.weights = Param(
            he_normal(rng, (in_features, out_features), in_features), name=f"{name}.weights"
        )
        self.bias = Param(np.zeros(out_features), name=f"{name}.bias")
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        n_in = self.weights.value.shape[0]
        if x.shape[-1] != n_in:
            raise ValueError(
                f"linear input has {x.shape[-1]} features but weights expect {n_in}"
            )
        self._x = x
        return x @ self.weights.value + self.bias.value

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x = self._x
        if x.ndim == 1:
            self.weights.grad += np.outer(x, grad_out)
            self.bias.grad += grad_out
        else:
            self.weights.grad += x.T @ grad_out
            self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weights.value.T

    def params(self) -> list[Param]:
        return [self.weights, self.bias]


class BatchNorm:
    """Per-feature standardization of a [n, features] batch with learned
    scale gamma and shift beta.

    Train mode normalizes by mini-batch statistics (biased variance) and
    updates running statistics by exponential moving average; eval mode
    normalizes by the running statistics.
    """

    def __init__(self, features: int, epsilon: float = 1e-5, momentum: float = 0.9, name: str = "bn"):
        if epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {epsilon}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0,1), got {momentum}")
        self.gamma = Param(np.ones(features), name=f"{name}.gamma")
        self.beta = Param(np.zeros(features), name=f"{name}.beta")
        self.running_mean = np.zeros(features)
        self.running_var = np.ones(features)
        self.epsilon = epsilon
        self.momentum = momentum
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.gamma.value.shape[0]:
            raise ValueError(
                f"batch norm expects [n, {self.gamma.value.shape[0]}], got {x.shape}"
            )
        if train:
            n = x.shape[0]
            if n < 2:
                raise ValueError(f"train-mode batch norm needs n >= 2, got n={n}")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.epsilon)
            xhat = (x - mean) * inv_std
            m = self.momentum
            self.running_mean = m * self.running_mean + (1.0 - m) * mean
            self.running_var = m * self.running_var + (1.0 - m) * var
            self._cache = ("train", xhat, inv_std, n)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.epsilon)
            xhat = (x - self.running_mean) * inv_std
            self._cache = ("eval", xhat, inv_std, x.shape[0])
        return self.gamma.value * xhat + self.beta.value

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        mode, xhat, inv_std, n = self._cache
        self.beta.grad += grad_out.sum(axis=0)
        self.gamma.grad += (grad_out * xhat).sum(axis=0)
        if mode == "eval":
            return grad_out * self.gamma.value * inv_std
        # gradient through mini-batch mean and variance
        gsum = grad_out.sum(axis=0)
        gx_sum = (grad_out * xhat).sum(axis=0)
        return (self.gamma.value * inv_std / n) * (n * grad_out - gsum - xhat * gx_sum)

    def params(self) -> list[Param]:
        return [self.gamma, self.beta]


class Dropout:
    """Inverted dropout: zero elements with probability p at train time and
    scale survivors by 1/(1-p); eval is the identity."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0,1), got {p}")
        self.p = p
        self._mask = None

    def forward(self, x: np.ndarray, train: bool, rng: np.random.Generator | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if not train or self.p == 0.0:
            self._mask = None
            return x
        rng = rng if rng is not None else np.random.default_rng()
        self._mask = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * self._mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return grad_out
        return grad_out * self._mask

    def params(self) -> list[Param]:
        return []


class _SpatialNorm:
    """BatchNorm over the H*W positions of one [H, W, C] map."""

    def __init__(self, channels: int, name: str):
        self.bn = BatchNorm(channels, name=name)
        self._shape = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._shape = x.shape
        return self.bn.forward(x.reshape(-1, x.shape[2]), train).reshape(x.shape)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return self.bn.backward(grad_out.reshape(-1, self._shape[2])).reshape(self._shape)

    def params(self) -> list[Param]:
        return self.bn.params()


class ResidualBlock:
    """Two 3x3 convolutions with a skip connection, same width throughout.

    variant "original": out = relu(x + F(x)) with F = conv-relu-conv.
    variant "identity": out = x + F(x) with pre-activation inside F and the
    shortcut left untouched, so a stack of zero-weight blocks is the exact
    identity map.

    Optional batch normalization inserts the conventional norm for each
    variant (post-conv for original, pre-conv for identity); parameter
    shapes are identical across the two variants either way.
    """

    VARIANTS = ("original", "identity")

    def __init__(
        self,
        channels: int,
        variant: str,
        rng: np.random.Generator | None = None,
        use_batch_norm: bool = False,
        name: str = "block",
    ):
        if variant not in self.VARIANTS:
            raise ValueError(f"unknown residual variant {variant!r}")
        rng = rng if rng is not None else np.random.default_rng()
        self.variant = variant
        self.conv1 = Conv2d(
            3, channels, channels, pad=1, rng=rng, name=f"{name}.conv1", use_bias=not use_batch_norm
        )
        self.conv2 = Conv2d(
            3, channels, channels, pad=1, rng=rng, name=f"{name}.conv2", use_bias=not use_batch_norm
        )
        self.norm1 = _SpatialNorm(channels, f"{name}.norm1") if use_batch_norm else None
        self.norm2 = _SpatialNorm(channels, f"{name}.norm2") if use_batch_norm else None
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.variant == "original":
            h = self.conv1.forward(x)
            if self.norm1 is not None:
                h = self.norm1.forward(h, train)
            mask1 = h > 0.0
            a = np.maximum(h, 0.0)
            f = self.conv2.forward(a)
            if self.norm2 is not None:
                f = self.norm2.forward(f, train)
            y = f + x
            mask_out = y > 0.0
            self._cache = (mask1, mask_out)
            return np.maximum(y, 0.0)
        # identity: pre-activation path, clean shortcut
        h = self.norm1.forward(x, train) if self.norm1 is not None else x
        mask1 = h > 0.0
        a1 = np.maximum(h, 0.0)
        c1 = self.conv1.forward(a1)
        h2 = self.norm2.forward(c1, train) if self.norm2 is not None else c1
        mask2 = h2 > 0.0
        a2 = np.maximum(h2, 0.0)
        f = self.conv2.forward(a2)
        self._cache = (mask1, mask2)
        return x + f

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self.variant == "original":
            mask1, mask_out = self._cache
            gy = grad_out * mask_out
            gf = gy
            if self.norm2 is not None:
                gf = self.norm2.backward(gf)
            ga = self.conv2.backward(gf)
            gh = ga * mask1
            if self.norm1 is not None:
                gh = self.norm1.backward(gh)
            return self.conv1.backward(gh) + gy
        mask1, mask2 = self._cache
        ga2 = self.conv2.backward(grad_out)
        gh2 = ga2 * mask2
        if self.norm2 is not None:
            gh2 = self.norm2.backward(gh2)
        ga1 = self.conv1.backward(gh2)
        gh1 = ga1 * mask1
        if self.norm1 is not None:
            gh1 = self.norm1.backward(gh1)
        return grad_out + gh1

    def params(self) -> list[Param]:
        out = self.conv1.params() + self.conv2.params()
        if self.norm1 is not None:
            out += self.norm1.params() + self.norm2.params()
        return out
