"""Model builders: the residual restoration generator, its d-headed
discriminator, and the four baseline families (gan, dcgan, wgan, cgan).

Construction is a pure function of (kind, dataset shape, attribute count,
seed): two builds with the same arguments produce bit-identical parameters.
Parameter registries preserve declaration order, which is also the checkpoint
blob order.

The restoration generator feeds coarse images through a shallow
fully-convolutional branch and rejoins the unweighted input either by
channel concatenation (default: the pass-through block survives verbatim)
or by addition, in which case the output head is a plain sigmoid so that a
zeroed branch passes the input straight through the head.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ConfigError, ShapeError
from .layers import (
    Activation,
    BatchNorm2d,
    Conv2d,
    Deconv2d,
    Dense,
    Flatten,
    concat_residual,
)
from .tensor import Tensor, concat

__all__ = [
    "MODEL_KINDS",
    "GeneratorNet",
    "DiscriminatorNet",
    "build_generator",
    "build_discriminator",
    "generate",
    "discriminate",
    "clip_weights",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
]

MODEL_KINDS = ("gan", "dcgan", "wgan", "cgan", "resgan")

LATENT_DIM = 100
BRANCH_CHANNELS = 32


def _check_kind(kind):
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def _check_image_shape(dataset_shape):
    if len(dataset_shape) != 3:
        raise ConfigError(f"dataset shape must be (C,H,W), got {dataset_shape}")
    c, h, w = dataset_shape
    for side in (h, w):
        reduced = side
        while reduced % 2 == 0 and reduced > 1:
            reduced //= 2
        if not (reduced == 7 or (reduced == 1 and side >= 8)):
            raise ConfigError(f"spatial size {side} is not a power of two times 7 or 8")
    if c < 1:
        raise ConfigError("channel count must be >= 1")
    return c, h, w


class _Net:
    """Ordered named layers with a declaration-order parameter registry."""

    def __init__(self):
        self._modules = []

    def _add(self, name, layer):
        self._modules.append((name, layer))
        return layer

    def parameters(self):
        out = []
        for mod_name, layer in self._modules:
            for p_name, p in layer.parameters():
                out.append((f"{mod_name}.{p_name}", p))
        return out

    def buffers(self):
        out = []
        for mod_name, layer in self._modules:
            for b_name, b in layer.buffers().items():
                out.append((f"{mod_name}.{b_name}", b))
        return out

    def load_state(self, params, buffers):
        own = dict(self.parameters())
        if set(own) != set(params):
            raise ConfigError("checkpoint parameter names do not match the rebuilt model")
        for name, arr in params.items():
            if own[name].shape != arr.shape:
                raise ConfigError(f"checkpoint shape mismatch for {name}")
            own[name].data = np.array(arr, dtype=np.float64)
        grouped = {}
        for name, arr in buffers.items():
            mod, _, leaf = name.rpartition(".")
            grouped.setdefault(mod, {})[leaf] = arr
        for mod_name, layer in self._modules:
            if mod_name in grouped:
                layer.load_buffers(grouped[mod_name])


class GeneratorNet(_Net):
    def __init__(self, kind, dataset_shape, d, seed, residual_mode="concat",
                 latent_dim=LATENT_DIM, cond_d=0):
        super().__init__()
        _check_kind(kind)
        c, h, w = _check_image_shape(dataset_shape)
        if residual_mode not in ("concat", "add"):
            raise ConfigError(f"residual_mode must be concat or add, got {residual_mode!r}")
        if kind == "cgan" and cond_d < 1:
            raise ConfigError("cgan generator needs a positive conditioning width")
        self.kind = kind
        self.dataset_shape = (c, h, w)
        self.d = d
        self.seed = seed
        self.residual_mode = residual_mode
        self.latent_dim = latent_dim
        self.cond_d = cond_d if kind == "cgan" else 0
        rng = np.random.default_rng([seed, 0])

        if kind == "resgan":
            b = BRANCH_CHANNELS
            self.branch = [
                self._add("branch0", Conv2d(c, b, 3, 1, 1, rng)),
                self._add("branch1", BatchNorm2d(b)),
                self._add("branch2", Activation("leaky_relu", 0.2)),
                self._add("branch3", Conv2d(b, b, 3, 1, 1, rng)),
                self._add("branch4", BatchNorm2d(b)),
                self._add("branch5", Activation("leaky_relu", 0.2)),
                self._add("branch6", Conv2d(b, c, 3, 1, 1, rng)),
            ]
            self.head = self._add("head", Conv2d(2 * c, c, 1, 1, 0, rng)) \
                if residual_mode == "concat" else None
        elif kind == "gan":
            self.body = [
                self._add("fc0", Dense(latent_dim, 256, rng)),
                self._add("act0", Activation("leaky_relu", 0.2)),
                self._add("fc1", Dense(256, c * h * w, rng)),
            ]
        else:  # dcgan / wgan / cgan deconvolution stack
            if h % 4 or w % 4:
                raise ConfigError(f"deconv generators need spatial dims divisible by 4, got {h}x{w}")
            self.h0, self.w0 = h // 4, w // 4
            in_dim = latent_dim + self.cond_d
            self.body = [
                self._add("fc0", Dense(in_dim, 128 * self.h0 * self.w0, rng)),
                self._add("bn0", BatchNorm2d(128)),
                self._add("act0", Activation("relu")),
                self._add("up0", Deconv2d(128, 64, 4, 2, 1, rng)),
                self._add("bn1", BatchNorm2d(64)),
                self._add("act1", Activation("relu")),
                self._add("up1", Deconv2d(64, c, 4, 2, 1, rng)),
            ]

    # --- forward ------------------------------------------------------------

    def branch_output(self, x, train=False):
        if self.kind != "resgan":
            raise ConfigError("branch_output is only defined for the restoration generator")
        out = x
        for layer in self.branch:
            out = layer.forward(out, train)
        return out

    def residual_join(self, x, train=False):
        """The tensor entering the output head: concat block or elementwise sum."""
        g = self.branch_output(x, train)
        if self.residual_mode == "concat":
            return concat_residual(x, g)
        return g + x

    def forward(self, x, attrs=None, train=False):
        c, h, w = self.dataset_shape
        if self.kind == "resgan":
            if x.shape[1:] != (c, h, w):
                raise ShapeError(f"coarse input shape {x.shape[1:]} != dataset shape {(c, h, w)}")
            joined = self.residual_join(x, train)
            if self.residual_mode == "concat":
                joined = self.head.forward(joined, train)
            return joined.sigmoid()

        if x.data.ndim != 2 or x.shape[1] != self.latent_dim:
            raise ShapeError(f"latent input must be (N,{self.latent_dim}), got {x.shape}")
        if self.kind == "cgan":
            if attrs is None or attrs.shape != (x.shape[0], self.cond_d):
                raise ShapeError(f"cgan needs attributes of shape (N,{self.cond_d})")
            x = concat([x, attrs], axis=1)
        out = x
        for i, layer in enumerate(self.body):
            out = layer.forward(out, train)
            if self.kind != "gan" and i == 0:
                out = out.reshape(x.shape[0], 128, self.h0, self.w0)
        out = out.sigmoid()
        return out.reshape(x.shape[0], c, h, w) if self.kind == "gan" else out

    __call__ = forward


class DiscriminatorNet(_Net):
    def __init__(self, kind, dataset_shape, d, seed, cond_d=0):
        super().__init__()
        _check_kind(kind)
        c, h, w = _check_image_shape(dataset_shape)
        if kind == "wgan" and d != 1:
            raise ConfigError(f"the wgan critic is single-headed, got d={d}")
        if kind == "cgan" and cond_d < 1:
            raise ConfigError("cgan discriminator needs a positive conditioning width")
        self.kind = kind
        self.dataset_shape = (c, h, w)
        self.d = d
        self.seed = seed
        self.cond_d = cond_d if kind == "cgan" else 0
        self.logistic = kind != "wgan"
        rng = np.random.default_rng([seed, 1])

        cin = c + self.cond_d
        h1, w1 = (h - 1) // 2 + 1, (w - 1) // 2 + 1
        h2, w2 = (h1 - 1) // 2 + 1, (w1 - 1) // 2 + 1
        self.body = [
            self._add("conv0", Conv2d(cin, 32, 3, 2, 1, rng)),
            self._add("act0", Activation("leaky_relu", 0.2)),
            self._add("conv1", Conv2d(32, 64, 3, 2, 1, rng)),
            self._add("act1", Activation("leaky_relu", 0.2)),
            self._add("flat", Flatten()),
            self._add("fc", Dense(64 * h2 * w2, d, rng)),
        ]

    def forward(self, x, attrs=None, train=False):
        c, h, w = self.dataset_shape
        if x.shape[1:] != (c, h, w):
            raise ShapeError(f"image shape {x.shape[1:]} != dataset shape {(c, h, w)}")
        if self.kind == "cgan":
            if attrs is None or attrs.shape != (x.shape[0], self.cond_d):
                raise ShapeError(f"cgan conditioning needs attributes of shape (N,{self.cond_d})")
            planes = attrs.reshape(x.shape[0], self.cond_d, 1, 1) * Tensor(np.ones((1, 1, h, w)))
            x = concat([x, planes], axis=1)
        out = x
        for layer in self.body:
            out = layer.forward(out, train)
        return out.sigmoid() if self.logistic else out

    __call__ = forward


def build_generator(kind, dataset_shape, d, seed, residual_mode="concat",
                    latent_dim=LATENT_DIM, cond_d=0):
    return GeneratorNet(kind, dataset_shape, d, seed, residual_mode, latent_dim, cond_d)


def build_discriminator(kind, dataset_shape, d, seed, cond_d=0):
    return DiscriminatorNet(kind, dataset_shape, d, seed, cond_d)


def generate(net, input, attrs=None, train=False):
    """Run the generator; output is the fine-image shape with values in [0,1]."""
    return net.forward(input, attrs=attrs, train=train)


def discriminate(net, x, attrs=None, train=False):
    """Run the discriminator; (N,d) scores, in (0,1) when the head is logistic."""
    return net.forward(x, attrs=attrs, train=train)


def clip_weights(net, c):
    """Clamp every parameter entry of the net into [-c, c] in place."""
    if c <= 0:
        raise ConfigError("clip bound must be positive")
    for _, p in net.parameters():
        np.clip(p.data, -c, c, out=p.data)


# --- checkpoint container ---------------------------------------------------

CHECKPOINT_MAGIC = b"RGAN"
_CHECKPOINT_VERSION = 1


def _pack_str(s):
    raw = s.encode("utf-8")
    return struct.pack("<B", len(raw)) + raw


def _read_str(buf, off):
    (n,) = struct.unpack_from("<B", buf, off)
    off += 1
    return buf[off : off + n].decode("utf-8"), off + n


def save_checkpoint(path, net, role):
    """Write one net as a versioned binary blob; round-trip load is bit-exact."""
    if role not in ("generator", "discriminator"):
        raise ConfigError(f"role must be generator or discriminator, got {role!r}")
    c, h, w = net.dataset_shape
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", _CHECKPOINT_VERSION),
        _pack_str(net.kind),
        _pack_str(role),
        _pack_str(getattr(net, "residual_mode", "")),
        struct.pack("<IIII", c, h, w, net.d),
        struct.pack("<I", getattr(net, "latent_dim", 0)),
        struct.pack("<I", net.cond_d),
        struct.pack("<q", net.seed),
    ]
    params = net.parameters()
    buffers = net.buffers()
    parts.append(struct.pack("<I", len(params) + len(buffers)))
    for tag, name, arr in (
        [(0, n, p.data) for n, p in params] + [(1, n, b) for n, b in buffers]
    ):
        raw = name.encode("utf-8")
        parts.append(struct.pack("<BH", tag, len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path):
    """Rebuild a net from a checkpoint file; returns (net, role)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CHECKPOINT_MAGIC:
        raise ConfigError(f"not a model checkpoint: bad magic {buf[:4]!r}")
    off = 4
    (version,) = struct.unpack_from("<I", buf, off)
    off += 4
    if version != _CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {version}")
    kind, off = _read_str(buf, off)
    role, off = _read_str(buf, off)
    residual_mode, off = _read_str(buf, off)
    c, h, w, d = struct.unpack_from("<IIII", buf, off)
    off += 16
    (latent_dim,) = struct.unpack_from("<I", buf, off)
    off += 4
    (cond_d,) = struct.unpack_from("<I", buf, off)
    off += 4
    (seed,) = struct.unpack_from("<q", buf, off)
    off += 8
    (n_entries,) = struct.unpack_from("<I", buf, off)
    off += 4

    params, buffers = {}, {}
    for _ in range(n_entries):
        tag, name_len = struct.unpack_from("<BH", buf, off)
        off += 3
        name = buf[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", buf, off)
        off += 1
        dims = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        count = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(dims)
        off += 8 * count
        (params if tag == 0 else buffers)[name] = arr.astype(np.float64)

    if role == "generator":
        net = build_generator(kind, (c, h, w), d, seed, residual_mode or "concat",
                              latent_dim or LATENT_DIM, cond_d)
    else:
        net = build_discriminator(kind, (c, h, w), d, seed, cond_d)
    net.load_state(params, buffers)
    return net, role
