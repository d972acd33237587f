"""Alternating adversarial optimization, metric logging, balance detection
and evaluation.

One logical thread owns all mutable model state. A training step performs the
configured number of discriminator updates (each on freshly generated, graph-
detached fakes) followed by one generator update; the critic variant clips its
weights after every update. Everything random -- parameter init, batch order,
latent draws, degradation noise -- derives from the run seed, so a (config,
seed, dataset) triple fully determines the training log.

Accuracy per epoch is the embedded classifier's attribute agreement on real
images when the discriminator has one head per attribute; binary kinds log
real/fake accuracy instead, and the critic logs how often real outscores fake.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import DegradeConfig, degrade
from .errors import ConfigError, ContractError, TrainingDiverged
from .models import (
    build_discriminator,
    build_generator,
    clip_weights,
    discriminate,
    generate,
    save_checkpoint,
)
from .objectives import cgan_loss, gan_loss, guard_probability, resgan_loss, wgan_loss
from .tensor import Tensor
from .tensor import concat as concat_tensors

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "TrainingLog",
    "EvalReport",
    "Sgd",
    "Adam",
    "Batch",
    "discriminator_step",
    "generator_step",
    "train_step",
    "train",
    "detect_balance",
    "evaluate",
    "train_external_probe",
    "attribute_accuracy",
]


@dataclass
class TrainConfig:
    kind: str = "resgan"
    epochs: int = 30
    batch_size: int = 64
    optimizer: str = "adam"
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    d_steps_per_g_step: int = 0  # 0 = kind default (5 for the critic, else 1)
    clip_c: float = 0.01
    seed: int = 0
    degrade: DegradeConfig = field(default_factory=DegradeConfig)
    latent_dim: int = 100
    residual_mode: str = "concat"
    saturating: bool = False
    loss_eps: float = 1e-7  # probability guard for the logistic objectives
    checkpoint_every: int = 0  # 0 = final epoch only (when a directory is given)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch statistics)")
        if self.lr <= 0:
            raise ConfigError("learning rate must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.d_steps_per_g_step == 0:
            self.d_steps_per_g_step = 5 if self.kind == "wgan" else 1


@dataclass
class EpochRecord:
    epoch: int
    loss_g: float
    loss_d: float
    accuracy: float
    wall_s: float


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)
    config_hash: str = ""
    seed: int = 0

    def loss_g(self):
        return [r.loss_g for r in self.records]

    def loss_d(self):
        return [r.loss_d for r in self.records]

    def write_csv(self, path, timing="off"):
        """One row per epoch; wall_ms is 0 unless timing == "wall" (see README)."""
        with open(path, "w", newline="") as fh:
            fh.write("epoch,loss_g,loss_d,accuracy,wall_ms\n")
            for r in self.records:
                ms = int(round(r.wall_s * 1000.0)) if timing == "wall" else 0
                fh.write(f"{r.epoch},{r.loss_g!r},{r.loss_d!r},{r.accuracy!r},{ms}\n")


@dataclass
class EvalReport:
    loss: float
    accuracy: float
    kind: str
    dataset: str

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ConfigError(f"accuracy {self.accuracy} outside [0,1]")


# --- optimizers ---------------------------------------------------------------


class Sgd:
    def __init__(self, params, lr):
        self.params = list(params)
        self.lr = lr

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()

    def step(self):
        for _, p in self.params:
            if p.grad is not None:
                p.data = p.data - self.lr * p.grad


class Adam:
    def __init__(self, params, lr, beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {name: np.zeros_like(p.data) for name, p in self.params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params}
        self.t = 0

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _make_optimizer(cfg, params):
    if cfg.optimizer == "sgd":
        return Sgd(params, cfg.lr)
    return Adam(params, cfg.lr, cfg.beta1, cfg.beta2)


# --- batches and steps ------------------------------------------------------


@dataclass
class Batch:
    coarse: np.ndarray
    fine: np.ndarray
    attributes: np.ndarray


@dataclass
class StepMetrics:
    loss_d: float
    loss_g: float
    accuracy: float


def _losses(kind, d_real, d_fake, y, saturating, eps=1e-7):
    if kind == "resgan":
        return resgan_loss(d_real, d_fake, y, eps=eps, saturating=saturating)
    if kind == "wgan":
        return wgan_loss(d_real, d_fake)
    if kind == "cgan":
        return cgan_loss(d_real, d_fake, eps=eps)
    return gan_loss(d_real, d_fake, eps=eps)


def _generator_inputs(kind, batch, cfg, rng):
    """(input tensor, conditioning) the generator consumes for this batch."""
    n = len(batch.fine)
    if kind == "resgan":
        return Tensor(batch.coarse), None
    z = Tensor(rng.uniform(-1.0, 1.0, size=(n, cfg.latent_dim)))
    cond = Tensor(batch.attributes) if kind == "cgan" else None
    return z, cond


def _training_accuracy(kind, d_real, d_fake, y):
    dr, df = d_real.data, d_fake.data
    if kind == "wgan":
        return float(np.mean(dr > df))
    if dr.shape[1] == y.shape[1] and y.shape[1] > 1:
        return float(np.mean(np.argmax(dr, axis=1) == np.argmax(y, axis=1)))
    return float((np.mean(dr > 0.5) + np.mean(df < 0.5)) / 2.0)


def discriminator_step(gen, disc, batch, cfg, opt_d, rng):
    """One ascent update of the discriminator on graph-detached fakes.

    Returns (loss_d, accuracy, live fake): the fake keeps its generator graph
    so the following generator update can reuse the forward pass.
    """
    g_in, cond = _generator_inputs(cfg.kind, batch, cfg, rng)
    fake = generate(gen, g_in, attrs=cond, train=True)
    # the discriminator has no cross-example state, so score real and fake in one pass
    n = len(batch.fine)
    both = concat_tensors([Tensor(batch.fine), fake.detach()], axis=0)
    cond_both = concat_tensors([cond, cond], axis=0) if cond is not None else None
    scores = discriminate(disc, both, attrs=cond_both, train=True)
    d_real, d_fake = scores[:n], scores[n:]
    y = Tensor(batch.attributes)
    loss_d, _ = _losses(cfg.kind, d_real, d_fake, y, cfg.saturating, cfg.loss_eps)
    opt_d.zero_grad()
    loss_d.backward()
    opt_d.step()
    if cfg.kind == "wgan":
        clip_weights(disc, cfg.clip_c)
    acc = _training_accuracy(cfg.kind, d_real, d_fake, batch.attributes)
    return float(loss_d.item()), acc, (fake, cond)


def generator_step(gen, disc, batch, cfg, opt_g, rng, fake=None, cond=None):
    """One descent update of the generator through a live discriminator pass.

    A (fake, cond) pair from a preceding discriminator step is reused when
    given; the generator's parameters have not changed since that forward
    pass, so the values are identical and one full forward is saved.
    """
    if fake is None:
        g_in, cond = _generator_inputs(cfg.kind, batch, cfg, rng)
        fake = generate(gen, g_in, attrs=cond, train=True)
    d_fake = discriminate(disc, fake, attrs=cond, train=True)
    d_real = Tensor(np.full(d_fake.shape, 0.5))  # placeholder: loss_g ignores it
    y = Tensor(batch.attributes)
    _, loss_g = _losses(cfg.kind, d_real, d_fake, y, cfg.saturating, cfg.loss_eps)
    opt_g.zero_grad()
    loss_g.backward()
    opt_g.step()
    return float(loss_g.item())


def train_step(gen, disc, batch, cfg, opt_d, opt_g, rng):
    """d_steps_per_g_step discriminator updates, then one generator update."""
    if len(batch.fine) < 2:
        raise ContractError("training batches need at least 2 examples")
    loss_d = accuracy = 0.0
    fake = cond = None
    for _ in range(cfg.d_steps_per_g_step):
        loss_d, accuracy, (fake, cond) = discriminator_step(gen, disc, batch, cfg, opt_d, rng)
    loss_g = generator_step(gen, disc, batch, cfg, opt_g, rng, fake=fake, cond=cond)
    if not (np.isfinite(loss_d) and np.isfinite(loss_g)):
        raise TrainingDiverged(-1)
    return StepMetrics(loss_d, loss_g, accuracy)


def build_models(cfg, dataset):
    """Generator/discriminator pair wired for the configured kind and dataset."""
    shape = dataset.image_shape
    if cfg.kind == "resgan":
        gen = build_generator("resgan", shape, dataset.d, cfg.seed, cfg.residual_mode)
        disc = build_discriminator("resgan", shape, dataset.d, cfg.seed)
    elif cfg.kind == "cgan":
        gen = build_generator("cgan", shape, 1, cfg.seed, latent_dim=cfg.latent_dim,
                              cond_d=dataset.d)
        disc = build_discriminator("cgan", shape, 1, cfg.seed, cond_d=dataset.d)
    else:
        gen = build_generator(cfg.kind, shape, 1, cfg.seed, latent_dim=cfg.latent_dim)
        disc = build_discriminator(cfg.kind, shape, 1, cfg.seed)
    return gen, disc


def train(cfg, dataset, checkpoint_dir=None, eval_hook=None, record_hook=None):
    """Run the adversarial loop; returns ((generator, discriminator), TrainingLog).

    Deterministic given (cfg, dataset): batch order, latent noise and
    degradation all derive from cfg.seed. record_hook(record) fires after each
    completed epoch (metrics writers flush per epoch); eval_hook(epoch, gen,
    disc) runs last, for sweep-mode evaluation windows. Raises
    TrainingDiverged with the partial log attached if any loss goes
    non-finite; no checkpoint is written for a diverged epoch.
    """
    gen, disc = build_models(cfg, dataset)
    opt_d = _make_optimizer(cfg, disc.parameters())
    opt_g = _make_optimizer(cfg, gen.parameters())
    rng = np.random.default_rng([cfg.seed, 2])

    coarse_all = degrade(dataset.images, cfg.degrade)
    log = TrainingLog(seed=cfg.seed)
    n = len(dataset)
    bs = cfg.batch_size
    if n < bs:
        bs = max(2, n)

    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        order = rng.permutation(n)
        sums = np.zeros(3)
        steps = 0
        for lo in range(0, n - bs + 1, bs):
            idx = order[lo : lo + bs]
            batch = Batch(coarse_all[idx], dataset.images[idx], dataset.attributes[idx])
            try:
                metrics = train_step(gen, disc, batch, cfg, opt_d, opt_g, rng)
            except TrainingDiverged:
                raise TrainingDiverged(epoch, log) from None
            sums += (metrics.loss_d, metrics.loss_g, metrics.accuracy)
            steps += 1
        loss_d, loss_g, accuracy = (sums / max(steps, 1)).tolist()
        if not (np.isfinite(loss_d) and np.isfinite(loss_g)):
            raise TrainingDiverged(epoch, log)
        record = EpochRecord(epoch, loss_g, loss_d, accuracy,
                             time.perf_counter() - started)
        log.records.append(record)
        if record_hook is not None:
            record_hook(record)
        if checkpoint_dir is not None:
            last = epoch == cfg.epochs - 1
            cadence = cfg.checkpoint_every
            if last or (cadence > 0 and (epoch + 1) % cadence == 0):
                for net in (gen, disc):
                    if any(not np.isfinite(p.data).all() for _, p in net.parameters()):
                        raise TrainingDiverged(epoch, log)
                save_checkpoint(f"{checkpoint_dir}/gen_{epoch:04d}.rgan", gen, "generator")
                save_checkpoint(f"{checkpoint_dir}/disc_{epoch:04d}.rgan", disc, "discriminator")
        if eval_hook is not None:
            eval_hook(epoch, gen, disc)
    return (gen, disc), log


# --- balance detection -----------------------------------------------------


def detect_balance(log):
    """First epoch whose sign of (loss_g - loss_d) differs from the previous one.

    Accepts a TrainingLog or any pair-yielding object with loss_g()/loss_d().
    Returns None when the curves never cross. Training does not stop at the
    crossing; this is a post-hoc diagnostic.
    """
    lg, ld = np.asarray(log.loss_g(), dtype=float), np.asarray(log.loss_d(), dtype=float)
    if len(lg) < 2:
        return None
    signs = np.sign(lg - ld)
    for epoch in range(1, len(signs)):
        if signs[epoch] != signs[epoch - 1]:
            return epoch
    return None


# --- evaluation --------------------------------------------------------------


def attribute_accuracy(scores, labels):
    """Fraction of rows whose response argmax matches the label argmax."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    return float(np.mean(np.argmax(scores, axis=1) == np.argmax(labels, axis=1)))


def _generate_eval_images(gen, cfg, dataset, batch=128):
    rng = np.random.default_rng([cfg.seed, 3])
    coarse_all = degrade(dataset.images, cfg.degrade) if cfg.kind == "resgan" else None
    out = []
    for lo in range(0, len(dataset), batch):
        hi = min(lo + batch, len(dataset))
        if cfg.kind == "resgan":
            inp, cond = Tensor(coarse_all[lo:hi]), None
        else:
            inp = Tensor(rng.uniform(-1.0, 1.0, size=(hi - lo, cfg.latent_dim)))
            cond = Tensor(dataset.attributes[lo:hi]) if cfg.kind == "cgan" else None
        out.append(generate(gen, inp, attrs=cond, train=False).data)
    return np.concatenate(out)


def evaluate(models, dataset, cfg, probe=None):
    """Generator objective plus attribute accuracy on a held-out split.

    The embedded d-headed discriminator scores the generated images when the
    model has one; attribute-blind kinds need the external probe. A supplied
    probe always wins, which is what makes cross-kind tables comparable.
    """
    if len(dataset) == 0:
        raise ContractError("evaluation needs a non-empty split")
    gen, disc = models
    images = _generate_eval_images(gen, cfg, dataset)

    losses = []
    batch = 128
    for lo in range(0, len(dataset), batch):
        hi = min(lo + batch, len(dataset))
        cond = Tensor(dataset.attributes[lo:hi]) if cfg.kind == "cgan" else None
        d_fake = discriminate(disc, Tensor(images[lo:hi]), attrs=cond, train=False)
        d_real = Tensor(np.full(d_fake.shape, 0.5))
        y = Tensor(dataset.attributes[lo:hi])
        _, loss_g = _losses(cfg.kind, d_real, d_fake, y, cfg.saturating, cfg.loss_eps)
        losses.append(loss_g.item() * (hi - lo))
    loss = float(np.sum(losses) / len(dataset))

    if probe is not None:
        scores = probe(images)
    elif cfg.kind == "resgan" and disc.d == dataset.d:
        scores = discriminate(disc, Tensor(images), train=False).data
    else:
        raise ContractError(f"{cfg.kind} has no attribute heads; pass an external probe")
    return EvalReport(loss, attribute_accuracy(scores, dataset.attributes),
                      cfg.kind, dataset.name)


def train_external_probe(dataset, seed=0, epochs=8, batch_size=64, lr=1e-3):
    """Small independent conv classifier trained on real images only.

    Returns probe(images) -> (N,d) scores. Used to score restorations and
    generations without trusting the adversarially trained discriminator.
    """
    net = build_discriminator("resgan", dataset.image_shape, dataset.d, seed)
    opt = Adam(net.parameters(), lr, 0.9, 0.999)
    rng = np.random.default_rng([seed, 4])
    n = len(dataset)
    bs = min(batch_size, n)
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n - bs + 1, bs):
            idx = order[lo : lo + bs]
            scores = discriminate(net, Tensor(dataset.images[idx]), train=True)
            y = Tensor(dataset.attributes[idx])
            p = guard_probability(scores)
            loss = -(y * p.log() + (1.0 - y) * (1.0 - p).log()).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()

    def probe(images, batch=256):
        outs = []
        for lo in range(0, len(images), batch):
            outs.append(discriminate(net, Tensor(images[lo : lo + batch]), train=False).data)
        return np.concatenate(outs)

    return probe
