"""Dataset ingestion, synthetic corpora and the coarse-image degradation pipeline.

Loaders return a `Dataset`: float64 images in [0,1] shaped (N,C,H,W) plus a
one-hot (or multi-hot) attribute row per image. Each binary loader has a
serializer that reproduces a well-formed input file byte for byte, so
parse -> serialize round-trips are testable at the byte level.

Degradation manufactures the coarse inputs: optional Gaussian pre-blur, then
average-pool by `factor`, then nearest-neighbour upsample back to the original
size, then optional clipped additive noise. Pooling and replication preserve
the image mean exactly and leave piecewise-constant images untouched, while
fine discriminative detail is averaged away.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, ShapeError

__all__ = [
    "Dataset",
    "CoarsePair",
    "DegradeConfig",
    "load_mnist",
    "save_mnist",
    "load_cifar",
    "save_cifar",
    "synth_dataset",
    "synth_digits",
    "linear_probe_accuracy",
    "degrade",
    "make_pairs",
    "split_dataset",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR10_RECORD = 3073
CIFAR100_RECORD = 3074


def validate_attributes(attributes, d, one_hot):
    attributes = np.asarray(attributes, dtype=np.float64)
    if attributes.ndim != 2 or attributes.shape[1] != d:
        raise ConfigError(f"attributes must be (N,{d}), got {attributes.shape}")
    if np.any(attributes < 0.0) or np.any(attributes > 1.0):
        raise ConfigError("attribute entries must lie in [0,1]")
    if one_hot and not np.array_equal(attributes.sum(axis=1), np.ones(len(attributes))):
        raise ConfigError("class datasets need exactly one active attribute per row")
    return attributes


@dataclass
class Dataset:
    """Images with aligned attribute rows; the empirical data distribution."""

    images: np.ndarray
    attributes: np.ndarray
    d: int
    name: str = "dataset"
    split: str = "all"
    one_hot: bool = True
    aux_labels: np.ndarray | None = None  # source-format extras kept for round-trips

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 4:
            raise ConfigError(f"images must be (N,C,H,W), got {self.images.shape}")
        if np.any(self.images < 0.0) or np.any(self.images > 1.0):
            raise ConfigError("pixel values must lie in [0,1]")
        self.attributes = validate_attributes(self.attributes, self.d, self.one_hot)
        if len(self.images) != len(self.attributes):
            raise ConfigError("image count != attribute count")

    def __len__(self):
        return len(self.images)

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])

    def subset(self, indices, split=None):
        aux = self.aux_labels[indices] if self.aux_labels is not None else None
        return Dataset(self.images[indices], self.attributes[indices], self.d,
                       self.name, split or self.split, self.one_hot, aux)

    def class_indices(self):
        return np.argmax(self.attributes, axis=1)


@dataclass
class CoarsePair:
    """One supervised restoration example: coarse input, fine target, attributes."""

    coarse: np.ndarray
    fine: np.ndarray
    attributes: np.ndarray


@dataclass
class DegradeConfig:
    factor: int = 4
    blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.factor < 1:
            raise ConfigError("degradation factor must be >= 1")
        if self.blur_sigma < 0 or self.noise_sigma < 0:
            raise ConfigError("blur/noise sigmas must be >= 0")


# --- IDX (big-endian header) ------------------------------------------------


def _read_exact(buf, fmt, offset, what):
    size = struct.calcsize(fmt)
    if offset + size > len(buf):
        raise FormatError(f"truncated file: needed {size} bytes for {what} at byte {offset}")
    return struct.unpack_from(fmt, buf, offset), offset + size


def load_mnist(images_path, labels_path):
    """Parse IDX image/label files into a (N,1,H,W) dataset with d=10 one-hots."""
    with open(images_path, "rb") as fh:
        raw = fh.read()
    (magic,), off = _read_exact(raw, ">I", 0, "image magic")
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(
            f"bad image magic at byte 0: 0x{magic:08x}, want 0x{IDX_IMAGE_MAGIC:08x}")
    (n, h, w), off = _read_exact(raw, ">III", off, "image dimensions")
    if len(raw) != off + n * h * w:
        raise FormatError(
            f"image payload at byte {off}: expected {n * h * w} bytes, file has {len(raw) - off}")
    images = np.frombuffer(raw, dtype=np.uint8, offset=off).reshape(n, 1, h, w)

    with open(labels_path, "rb") as fh:
        raw_l = fh.read()
    (magic_l,), off_l = _read_exact(raw_l, ">I", 0, "label magic")
    if magic_l != IDX_LABEL_MAGIC:
        raise FormatError(
            f"bad label magic at byte 0: 0x{magic_l:08x}, want 0x{IDX_LABEL_MAGIC:08x}")
    (n_l,), off_l = _read_exact(raw_l, ">I", off_l, "label count")
    if n_l != n:
        raise FormatError(f"label count {n_l} != image count {n}")
    if len(raw_l) != off_l + n:
        raise FormatError(
            f"label payload at byte {off_l}: expected {n} bytes, file has {len(raw_l) - off_l}")
    labels = np.frombuffer(raw_l, dtype=np.uint8, offset=off_l)
    if labels.max(initial=0) > 9:
        raise FormatError(f"label byte out of range at byte {off_l + int(labels.argmax())}")

    attributes = np.eye(10)[labels]
    return Dataset(images / 255.0, attributes, d=10, name="mnist")


def save_mnist(dataset, images_path, labels_path):
    """Serialize back to IDX; inverse of load_mnist for well-formed inputs."""
    n, c, h, w = dataset.images.shape
    if c != 1:
        raise ConfigError("IDX image files are single-channel")
    pixels = np.floor(dataset.images * 255.0 + 0.5).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, h, w))
        fh.write(pixels.tobytes())
    labels = dataset.class_indices().astype(np.uint8)
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        fh.write(labels.tobytes())


# --- CIFAR binary batches ------------------------------------------------------


def load_cifar(directory, variant="cifar10"):
    """Parse CIFAR binary batch files (all *.bin under directory, sorted)."""
    from pathlib import Path

    if variant not in ("cifar10", "cifar100"):
        raise ConfigError(f"variant must be cifar10 or cifar100, got {variant!r}")
    record = CIFAR10_RECORD if variant == "cifar10" else CIFAR100_RECORD
    d = 10 if variant == "cifar10" else 100
    files = sorted(Path(directory).glob("*.bin"))
    if not files:
        raise FormatError(f"no .bin batch files under {directory}")

    images, labels, coarse = [], [], []
    for path in files:
        raw = path.read_bytes()
        if len(raw) % record:
            raise FormatError(
                f"{path.name}: {len(raw)} bytes is not a multiple of the {record}-byte record")
        arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
        if variant == "cifar10":
            labels.append(arr[:, 0])
            pix = arr[:, 1:]
        else:
            coarse.append(arr[:, 0])
            labels.append(arr[:, 1])
            pix = arr[:, 2:]
        images.append(pix.reshape(-1, 3, 32, 32))
    labels = np.concatenate(labels)
    if labels.max(initial=0) >= d:
        raise FormatError(f"label byte {int(labels.max())} out of range for {variant}")
    attributes = np.eye(d)[labels]
    aux = np.concatenate(coarse) if coarse else None
    return Dataset(np.concatenate(images) / 255.0, attributes, d=d, name=variant,
                   aux_labels=aux)


def save_cifar(dataset, path, variant="cifar10"):
    """Serialize one binary batch file; inverse of load_cifar on a one-file dir."""
    if variant not in ("cifar10", "cifar100"):
        raise ConfigError(f"variant must be cifar10 or cifar100, got {variant!r}")
    n, c, h, w = dataset.images.shape
    if (c, h, w) != (3, 32, 32):
        raise ConfigError("CIFAR batches hold 3x32x32 images")
    pixels = np.floor(dataset.images * 255.0 + 0.5).astype(np.uint8).reshape(n, -1)
    labels = dataset.class_indices().astype(np.uint8).reshape(n, 1)
    if variant == "cifar10":
        records = np.concatenate([labels, pixels], axis=1)
    else:
        aux = (dataset.aux_labels if dataset.aux_labels is not None
               else np.zeros(n, dtype=np.uint8)).astype(np.uint8).reshape(n, 1)
        records = np.concatenate([aux, labels, pixels], axis=1)
    with open(path, "wb") as fh:
        fh.write(records.tobytes())


# --- synthetic corpora ------------------------------------------------------------


def synth_dataset(n, shape=(1, 28, 28), d=4, seed=0):
    """Axis-aligned bright-bar corpus: class k carries a bar in band k.

    Deterministic in seed, exactly class-balanced by interleaving, and easy
    enough that a linear probe on raw pixels separates the classes.
    """
    if n < 1:
        raise ConfigError("need at least one example")
    c, h, w = shape
    rng = np.random.default_rng(seed)
    classes = np.arange(n) % d
    images = rng.uniform(0.0, 0.1, size=(n, c, h, w))
    band = h // d
    thickness = max(2, band // 2)
    for i, k in enumerate(classes):
        top = int(k) * band + (band - thickness) // 2
        top = min(max(top + rng.integers(-1, 2), 0), h - thickness)
        images[i, :, top : top + thickness, :] = rng.uniform(0.75, 1.0,
                                                             size=(c, thickness, w))
    return Dataset(images, np.eye(d)[classes], d=d, name="synth")


# stroke polylines for a 10-glyph vector font in the unit square (x right, y down)
_GLYPHS = {
    0: [[(0.32, 0.18), (0.62, 0.18), (0.72, 0.32), (0.72, 0.68), (0.62, 0.84),
         (0.35, 0.84), (0.26, 0.68), (0.26, 0.32), (0.32, 0.18)]],
    1: [[(0.38, 0.26), (0.55, 0.16), (0.55, 0.84)]],
    2: [[(0.3, 0.3), (0.38, 0.17), (0.6, 0.16), (0.7, 0.3), (0.66, 0.45),
         (0.3, 0.72), (0.28, 0.84), (0.72, 0.84)]],
    3: [[(0.3, 0.2), (0.6, 0.16), (0.7, 0.3), (0.58, 0.47), (0.42, 0.5)],
        [(0.42, 0.5), (0.62, 0.52), (0.72, 0.66), (0.62, 0.83), (0.32, 0.82)]],
    4: [[(0.62, 0.84), (0.62, 0.16), (0.26, 0.6), (0.76, 0.6)]],
    5: [[(0.68, 0.17), (0.32, 0.17), (0.3, 0.48), (0.58, 0.44), (0.71, 0.58),
         (0.69, 0.74), (0.56, 0.85), (0.3, 0.82)]],
    6: [[(0.64, 0.16), (0.42, 0.3), (0.3, 0.52), (0.29, 0.7), (0.42, 0.85),
         (0.6, 0.84), (0.7, 0.7), (0.64, 0.54), (0.42, 0.52), (0.31, 0.62)]],
    7: [[(0.27, 0.17), (0.73, 0.17), (0.47, 0.84)]],
    8: [[(0.5, 0.16), (0.66, 0.24), (0.64, 0.42), (0.5, 0.49), (0.36, 0.42),
         (0.34, 0.24), (0.5, 0.16)],
        [(0.5, 0.49), (0.68, 0.58), (0.68, 0.76), (0.5, 0.85), (0.32, 0.76),
         (0.32, 0.58), (0.5, 0.49)]],
    9: [[(0.68, 0.45), (0.46, 0.5), (0.31, 0.4), (0.3, 0.25), (0.45, 0.15),
         (0.62, 0.16), (0.7, 0.3), (0.7, 0.6), (0.6, 0.84), (0.4, 0.85)]],
}


def _segment_distances(px, py, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    norm2 = dx * dx + dy * dy
    if norm2 == 0.0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / norm2, 0.0, 1.0)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def synth_digits(n, seed=0, shape=(1, 28, 28), glyph_scale=(0.6, 0.9),
                 stroke_width=(0.02, 0.028), distractors=(1, 3)):
    """Procedurally rendered digit glyphs under heavy pose and stroke jitter.

    A 28x28 stand-in corpus whose class identity lives in thin strokes:
    rotation, anisotropic scale, shear and translation vary enough that a
    classifier must read stroke topology, and block-average degradation
    genuinely destroys it. glyph_scale, stroke_width and the distractor count
    range set the severity.
    """
    if n < 1:
        raise ConfigError("need at least one example")
    c, h, w = shape
    rng = np.random.default_rng(seed)
    classes = np.arange(n) % 10
    ys, xs = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w,
                         indexing="ij")
    images = np.zeros((n, c, h, w))
    for i, k in enumerate(classes):
        angle = rng.uniform(-0.3, 0.3)
        sx, sy = rng.uniform(*glyph_scale, size=2)  # small glyphs: pooling bites harder
        shear = rng.uniform(-0.2, 0.2)
        tx, ty = rng.uniform(-0.13, 0.13, size=2)
        width = rng.uniform(*stroke_width)
        ink = rng.uniform(0.75, 1.0)
        cos_a, sin_a = np.cos(angle), np.sin(angle)
        canvas = np.zeros((h, w))
        for line in _GLYPHS[int(k)]:
            pts = []
            for (x, y) in line:
                u, v = x - 0.5, y - 0.5
                u, v = sx * (u + shear * v), sy * v
                pts.append((0.5 + cos_a * u - sin_a * v + tx,
                            0.5 + sin_a * u + cos_a * v + ty))
            for a, b in zip(pts[:-1], pts[1:]):
                dist = _segment_distances(xs, ys, a, b)
                canvas = np.maximum(canvas, np.clip((width - dist) / (0.45 * width), 0.0, 1.0))
        # class-independent distractor strokes: separable from the glyph at
        # stroke scale, indistinguishable from it after block averaging
        for _ in range(rng.integers(*distractors)):
            ax, ay = rng.uniform(0.08, 0.92, size=2)
            length, theta = rng.uniform(0.1, 0.22), rng.uniform(0.0, 2 * np.pi)
            bx, by = ax + length * np.cos(theta), ay + length * np.sin(theta)
            dist = _segment_distances(xs, ys, (ax, ay), (bx, by))
            canvas = np.maximum(canvas, np.clip((width - dist) / (0.45 * width), 0.0, 1.0))
        images[i, :] = ink * canvas
    images = np.clip(images + rng.uniform(0.0, 0.05, size=images.shape), 0.0, 1.0)
    return Dataset(images, np.eye(10)[classes], d=10, name="synth-digits")


def linear_probe_accuracy(dataset):
    """Least-squares linear classifier on raw pixels; the corpus sanity oracle."""
    flat = dataset.images.reshape(len(dataset), -1)
    design = np.concatenate([flat, np.ones((len(dataset), 1))], axis=1)
    weights, *_ = np.linalg.lstsq(design, dataset.attributes, rcond=None)
    pred = np.argmax(design @ weights, axis=1)
    return float(np.mean(pred == dataset.class_indices()))


# --- degradation ---------------------------------------------------------------


def _gaussian_blur(x, sigma):
    radius = max(1, int(np.ceil(3.0 * sigma)))
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    kernel /= kernel.sum()
    for axis in (-2, -1):
        pad = [(0, 0)] * x.ndim
        pad[axis] = (radius, radius)
        xp = np.pad(x, pad, mode="reflect")
        acc = np.zeros_like(x)
        for i, kv in enumerate(kernel):
            sl = [slice(None)] * x.ndim
            sl[axis] = slice(i, i + x.shape[axis])
            acc += kv * xp[tuple(sl)]
        x = acc
    return x


def degrade(fine, cfg):
    """Coarsen an image (C,H,W) or batch (N,C,H,W); output has the input shape."""
    arr = np.asarray(fine, dtype=np.float64)
    squeeze = arr.ndim == 3
    if squeeze:
        arr = arr[None]
    if arr.ndim != 4:
        raise ShapeError(f"degrade expects (C,H,W) or (N,C,H,W), got {arr.shape}")
    n, c, h, w = arr.shape
    f = cfg.factor
    if h % f or w % f:
        raise ShapeError(f"degradation factor {f} does not divide {h}x{w}")
    if cfg.blur_sigma > 0:
        arr = _gaussian_blur(arr, cfg.blur_sigma)
    pooled = arr.reshape(n, c, h // f, f, w // f, f).mean(axis=(3, 5))
    coarse = np.repeat(np.repeat(pooled, f, axis=2), f, axis=3)
    if cfg.noise_sigma > 0:
        rng = np.random.default_rng(cfg.seed)
        coarse = coarse + rng.normal(0.0, cfg.noise_sigma, size=coarse.shape)
    coarse = np.clip(coarse, 0.0, 1.0)
    return coarse[0] if squeeze else coarse


def make_pairs(dataset, cfg):
    """One CoarsePair per image, original order, attributes carried through."""
    coarse = degrade(dataset.images, cfg)
    return [CoarsePair(coarse[i], dataset.images[i], dataset.attributes[i])
            for i in range(len(dataset))]


def split_dataset(dataset, n_train, n_eval, seed=0):
    """Deterministic seeded-shuffle split into (train, eval) subsets."""
    if n_train + n_eval > len(dataset):
        raise ConfigError(
            f"requested {n_train}+{n_eval} examples from a {len(dataset)}-image dataset")
    order = np.random.default_rng(seed).permutation(len(dataset))
    return (dataset.subset(order[:n_train], "train"),
            dataset.subset(order[n_train : n_train + n_eval], "eval"))
