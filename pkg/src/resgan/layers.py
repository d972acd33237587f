"""Layer vocabulary: convolution, transposed convolution, batch normalization,
pooling, nearest upsampling, dense heads and the channel-concat residual block.

Convolution uses the cross-correlation convention (no kernel flip). The
transposed convolution is implemented as the exact adjoint of conv2d: its
forward pass is conv2d's input-gradient routine, so the inner-product identity
<conv(x), y> == <x, deconv(y)> holds by construction for shared weights.

Layer parameter mutation (optimizer steps, batchnorm buffer updates) belongs
to the training thread; eval-mode forward passes are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, ShapeError
from .tensor import Tensor, concat

__all__ = [
    "LayerSpec",
    "conv2d",
    "deconv2d",
    "avg_pool",
    "upsample_nearest",
    "concat_residual",
    "Conv2d",
    "Deconv2d",
    "BatchNorm2d",
    "Dense",
    "AvgPool2d",
    "UpsampleNearest",
    "Activation",
    "Flatten",
]


# --- functional primitives -------------------------------------------------


def _im2col(xp, k, stride, ho, wo):
    """Gather k*k patches of a padded (N,C,Hp,Wp) array into (C*k*k, N*ho*wo).

    The channel-major layout makes each (i,j) write a near-contiguous block
    and lets the convolution run as one large matrix product.
    """
    n, c, _, _ = xp.shape
    xp_t = xp.transpose(1, 0, 2, 3)
    cols = np.empty((c, k, k, n, ho, wo), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp_t[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(c * k * k, n * ho * wo)


def _col2im(dcols, shape, k, stride, pad, ho, wo):
    """Scatter-add (C*k*k, N*ho*wo) columns back onto an (N,C,H,W) canvas."""
    n, c, h, w = shape
    canvas = np.zeros((c, n, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    d6 = dcols.reshape(c, k, k, n, ho, wo)
    for i in range(k):
        for j in range(k):
            canvas[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += d6[:, i, j]
    out = canvas.transpose(1, 0, 2, 3)
    if pad:
        out = out[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(out)


def _conv_fwd(x, w, stride, pad):
    n, cin, h, width = x.shape
    cout, cin_w, k, _ = w.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d channel mismatch: input {cin}, weight expects {cin_w}")
    if h + 2 * pad < k or width + 2 * pad < k:
        raise ShapeError(f"kernel {k} exceeds padded input {h + 2 * pad}x{width + 2 * pad}")
    ho = (h + 2 * pad - k) // stride + 1
    wo = (width + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, k, stride, ho, wo)
    out = w.reshape(cout, cin * k * k) @ cols
    out = out.reshape(cout, n, ho, wo).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(out), cols


def _conv_dx(g, w, stride, pad, h, width):
    """Gradient of conv2d w.r.t. its input; also the deconv2d forward map."""
    n, cout, ho, wo = g.shape
    cout_w, cin, k, _ = w.shape
    if cout != cout_w:
        raise ShapeError(f"channel mismatch: got {cout}, weight expects {cout_w}")
    if (stride == 1 and pad <= k - 1
            and ho == h + 2 * pad - k + 1 and wo == width + 2 * pad - k + 1):
        # stride-1 shortcut: correlate with the flipped, channel-swapped kernel
        # instead of scattering columns (much less memory traffic)
        w_t = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        out, _ = _conv_fwd(g, w_t, 1, k - 1 - pad)
        return out
    g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(cout, n * ho * wo)
    dcols = w.reshape(cout, cin * k * k).T @ g2
    return _col2im(dcols, (n, cin, h, width), k, stride, pad, ho, wo)


def _conv_dw(cols, g, cout, cin, k):
    n, _, ho, wo = g.shape
    g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(cout, n * ho * wo)
    return (g2 @ cols.T).reshape(cout, cin, k, k)


def conv2d(x, weight, bias=None, stride=1, pad=0):
    """Strided 2-d cross-correlation of (N,Cin,H,W) with (Cout,Cin,k,k) weights."""
    data, cols = _conv_fwd(x.data, weight.data, stride, pad)
    n, cin, h, w_in = x.shape
    cout, _, k, _ = weight.shape

    def grad_fn(g):
        dx = _conv_dx(g, weight.data, stride, pad, h, w_in)
        dw = _conv_dw(cols, g, cout, cin, k)
        return dx, dw

    out = x._make(data, "conv2d", (x, weight), grad_fn)
    if bias is not None:
        out = out + bias.reshape(1, cout, 1, 1)
    return out


def deconv2d(x, weight, bias=None, stride=1, pad=0):
    """Transposed convolution: the adjoint of conv2d under shared weights.

    x is (N,Cin,H,W) and weight is (Cin,Cout,k,k); the output spatial size is
    (H-1)*stride - 2*pad + k.
    """
    n, cin, h, w_in = x.shape
    cin_w, cout, k, _ = weight.shape
    if cin != cin_w:
        raise ShapeError(f"deconv2d channel mismatch: input {cin}, weight expects {cin_w}")
    ho = (h - 1) * stride - 2 * pad + k
    wo = (w_in - 1) * stride - 2 * pad + k
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"deconv2d output size {ho}x{wo} is not positive")
    data = _conv_dx(x.data, weight.data, stride, pad, ho, wo)

    def grad_fn(g):
        dx_full, _ = _conv_fwd(g, weight.data, stride, pad)
        gp = np.pad(g, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else g
        cols = _im2col(gp, k, stride, h, w_in)
        dw = _conv_dw(cols, x.data, cin, cout, k)
        return dx_full, dw

    out = x._make(data, "deconv2d", (x, weight), grad_fn)
    if bias is not None:
        out = out + bias.reshape(1, cout, 1, 1)
    return out


def avg_pool(x, window, stride=None):
    """Average non-overlapping window*window blocks; spatial dims must divide."""
    stride = window if stride is None else stride
    if stride != window:
        raise ShapeError("avg_pool supports non-overlapping windows only (stride == window)")
    if window < 1:
        raise ShapeError("avg_pool window must be >= 1")
    n, c, h, w = x.shape
    if h % window or w % window:
        raise ShapeError(f"avg_pool window {window} does not divide {h}x{w}")
    ho, wo = h // window, w // window
    data = x.data.reshape(n, c, ho, window, wo, window).mean(axis=(3, 5))

    def grad_fn(g):
        scaled = g / (window * window)
        return (np.repeat(np.repeat(scaled, window, axis=2), window, axis=3),)

    return x._make(data, "avg_pool", (x,), grad_fn)


def upsample_nearest(x, factor):
    """Replicate every pixel factor x factor."""
    if factor < 1:
        raise ShapeError("upsample factor must be >= 1")
    n, c, h, w = x.shape
    data = np.repeat(np.repeat(x.data, factor, axis=2), factor, axis=3)

    def grad_fn(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return x._make(data, "upsample_nearest", (x,), grad_fn)


def concat_residual(x, branch):
    """Channel-concat the pass-through input ahead of the weighted branch output.

    The input occupies the leading channel block of the result verbatim.
    """
    if x.shape[0] != branch.shape[0] or x.shape[2:] != branch.shape[2:]:
        raise ShapeError(f"pass-through {x.shape} and branch {branch.shape} disagree off-channel")
    return concat([x, branch], axis=1)


# --- layer objects -----------------------------------------------------------

_KINDS = {
    "conv2d",
    "deconv2d",
    "batchnorm",
    "dense",
    "avg_pool",
    "upsample_nearest",
    "activation",
    "concat_residual",
}

WEIGHT_STD = 0.02  # zero-mean Gaussian init for conv/deconv/dense weights


@dataclass
class LayerSpec:
    """Declarative layer description used by the model builders."""

    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 1
    stride: int = 1
    pad: int = 0
    slope: float = 0.2
    momentum: float = 0.9
    epsilon: float = 1e-5
    window: int = 2
    factor: int = 2
    activation: str = "relu"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.kernel < 1 or self.stride < 1:
            raise ConfigError("kernel size and stride must be >= 1")
        if self.pad < 0:
            raise ConfigError("padding must be >= 0")
        if self.kind in ("conv2d", "deconv2d", "dense") and (
            self.in_channels < 1 or self.out_channels < 1
        ):
            raise ConfigError(f"{self.kind} needs positive channel counts")
        if self.kind == "batchnorm" and self.epsilon <= 0:
            raise ConfigError("batchnorm epsilon must be > 0")

    def build(self, rng):
        if self.kind == "conv2d":
            return Conv2d(self.in_channels, self.out_channels, self.kernel,
                          self.stride, self.pad, rng)
        if self.kind == "deconv2d":
            return Deconv2d(self.in_channels, self.out_channels, self.kernel,
                            self.stride, self.pad, rng)
        if self.kind == "batchnorm":
            return BatchNorm2d(self.out_channels or self.in_channels,
                               self.momentum, self.epsilon)
        if self.kind == "dense":
            return Dense(self.in_channels, self.out_channels, rng)
        if self.kind == "avg_pool":
            return AvgPool2d(self.window)
        if self.kind == "upsample_nearest":
            return UpsampleNearest(self.factor)
        if self.kind == "activation":
            return Activation(self.activation, self.slope)
        raise ConfigError(f"{self.kind} has no standalone layer object")


class Layer:
    """Base: forward(x, train) plus named parameter/buffer registries."""

    def forward(self, x, train=False):
        raise NotImplementedError

    def parameters(self):
        return []

    def buffers(self):
        return {}

    def load_buffers(self, values):
        pass

    __call__ = forward


class Conv2d(Layer):
    def __init__(self, cin, cout, kernel, stride=1, pad=0, rng=None):
        rng = rng or np.random.default_rng(0)
        self.stride, self.pad = stride, pad
        self.weight = Tensor(rng.normal(0.0, WEIGHT_STD, (cout, cin, kernel, kernel)),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(cout), requires_grad=True)

    def forward(self, x, train=False):
        return conv2d(x, self.weight, self.bias, self.stride, self.pad)

    def parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    __call__ = forward


class Deconv2d(Layer):
    def __init__(self, cin, cout, kernel, stride=1, pad=0, rng=None):
        rng = rng or np.random.default_rng(0)
        self.stride, self.pad = stride, pad
        self.weight = Tensor(rng.normal(0.0, WEIGHT_STD, (cin, cout, kernel, kernel)),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(cout), requires_grad=True)

    def forward(self, x, train=False):
        return deconv2d(x, self.weight, self.bias, self.stride, self.pad)

    def parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    __call__ = forward


class BatchNorm2d(Layer):
    """Per-channel normalization over (N,H,W) with running eval statistics.

    Train mode normalizes with biased batch statistics, then folds the batch
    mean/variance into the running buffers with the configured momentum. Eval
    mode applies the running statistics. Batches of fewer than two values per
    channel cannot be normalized and are a contract violation.

    Forward and backward are fused single tape nodes; the chained-primitive
    formulation moved too much memory on wide activations.
    """

    def __init__(self, channels, momentum=0.9, epsilon=1e-5):
        self.channels = channels
        self.momentum = momentum
        self.epsilon = epsilon
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        if c != self.channels:
            raise ShapeError(f"batchnorm built for {self.channels} channels, got {c}")
        gamma, beta = self.gamma, self.beta
        if train:
            m = n * h * w
            if m < 2:
                raise ContractError("batchnorm train mode needs at least 2 values per channel")
            mu = x.data.mean(axis=(0, 2, 3))
            centered = x.data - mu.reshape(1, c, 1, 1)
            var = np.mean(centered * centered, axis=(0, 2, 3))
            inv = 1.0 / np.sqrt(var + self.epsilon)
            xhat = centered * inv.reshape(1, c, 1, 1)
            data = xhat * gamma.data.reshape(1, c, 1, 1) + beta.data.reshape(1, c, 1, 1)
            mom = self.momentum
            self.running_mean = mom * self.running_mean + (1 - mom) * mu
            self.running_var = mom * self.running_var + (1 - mom) * var

            def grad_fn(g):
                dgamma = (g * xhat).sum(axis=(0, 2, 3))
                dbeta = g.sum(axis=(0, 2, 3))
                # dxhat = g * gamma, with gamma folded into the channel sums
                s1 = dbeta * gamma.data
                s2 = dgamma * gamma.data
                dx = (inv / m).reshape(1, c, 1, 1) * (
                    m * g * gamma.data.reshape(1, c, 1, 1)
                    - s1.reshape(1, c, 1, 1)
                    - xhat * s2.reshape(1, c, 1, 1)
                )
                return dx, dgamma, dbeta

            return x._make(data, "batchnorm", (x, gamma, beta), grad_fn)

        inv = 1.0 / np.sqrt(self.running_var + self.epsilon)
        xhat = (x.data - self.running_mean.reshape(1, c, 1, 1)) * inv.reshape(1, c, 1, 1)
        data = xhat * gamma.data.reshape(1, c, 1, 1) + beta.data.reshape(1, c, 1, 1)

        def grad_fn(g):
            dgamma = (g * xhat).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            dx = g * (gamma.data * inv).reshape(1, c, 1, 1)
            return dx, dgamma, dbeta

        return x._make(data, "batchnorm_eval", (x, gamma, beta), grad_fn)

    def parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def load_buffers(self, values):
        self.running_mean = np.array(values["running_mean"], dtype=np.float64)
        self.running_var = np.array(values["running_var"], dtype=np.float64)

    __call__ = forward


class Dense(Layer):
    def __init__(self, nin, nout, rng=None):
        rng = rng or np.random.default_rng(0)
        self.weight = Tensor(rng.normal(0.0, WEIGHT_STD, (nin, nout)), requires_grad=True)
        self.bias = Tensor(np.zeros(nout), requires_grad=True)

    def forward(self, x, train=False):
        return x @ self.weight + self.bias

    def parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    __call__ = forward


class AvgPool2d(Layer):
    def __init__(self, window):
        self.window = window

    def forward(self, x, train=False):
        return avg_pool(x, self.window)

    __call__ = forward


class UpsampleNearest(Layer):
    def __init__(self, factor):
        self.factor = factor

    def forward(self, x, train=False):
        return upsample_nearest(x, self.factor)

    __call__ = forward


class Activation(Layer):
    def __init__(self, kind, slope=0.2):
        if kind not in ("relu", "leaky_relu", "sigmoid", "tanh", "identity"):
            raise ConfigError(f"unknown activation {kind!r}")
        self.kind = kind
        self.slope = slope

    def forward(self, x, train=False):
        if self.kind == "relu":
            return x.relu()
        if self.kind == "leaky_relu":
            return x.leaky_relu(self.slope)
        if self.kind == "sigmoid":
            return x.sigmoid()
        if self.kind == "tanh":
            return x.tanh()
        return x

    __call__ = forward


class Flatten(Layer):
    def forward(self, x, train=False):
        n = x.shape[0]
        return x.reshape(n, x.size // n)

    __call__ = forward
