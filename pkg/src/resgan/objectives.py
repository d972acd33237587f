"""Adversarial objectives and their closed-form gradient oracles.

Five losses share one convention: each returns a pair of scalar tensors
(loss_d, loss_g), both to be *minimized* by their respective optimizers.
Probabilistic scores are guarded by clamping into [eps, 1-eps] before any
log, so every logistic loss stays finite; out-of-range inputs fail loudly
instead of being silently clipped.

The attribute-vector loss scores a d-headed discriminator against the label
vector for real images and against its complement for generated ones. Its
discriminator branch maximizes

    J = mean( y * (log d_real + log(1 - d_fake))
            + (1 - y) * (log(1 - d_real) + log d_fake) )

and the generator, by default, maximizes the response at its own target
labels (the non-saturating form); the literal minimax form is available via
``saturating=True``.

For a single logistic unit per branch the value J has exact closed-form
parameter gradients. They are exact when the real-branch score is
sigmoid(theta*x) and both parameters enter the fake-branch pre-activation
additively, weighted by the label: sigmoid((theta+phi)*y). That pairing is
what makes the generator's gradient literally equal the second term of the
discriminator's -- the asymmetry that keeps the adversarial iteration off
balance. `ReferenceLogisticModel` packages that pair so the closed forms can
be checked against reverse-mode gradients.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError
from .tensor import Tensor

__all__ = [
    "LOG_GUARD_EPS",
    "guard_probability",
    "gan_loss",
    "wgan_loss",
    "cgan_loss",
    "resgan_loss",
    "discriminator_closed_form_grad",
    "generator_closed_form_grad",
    "ReferenceLogisticModel",
]

LOG_GUARD_EPS = 1e-7


def guard_probability(t, eps=LOG_GUARD_EPS):
    """Clamp probabilities into [eps, 1-eps]; reject values outside [0, 1]."""
    if np.any(t.data < 0.0) or np.any(t.data > 1.0):
        bad = float(t.data[(t.data < 0.0) | (t.data > 1.0)].flat[0])
        raise DomainError(f"probability outside [0, 1]: {bad}")
    return t.clamp(eps, 1.0 - eps)


def gan_loss(d_real, d_fake, eps=LOG_GUARD_EPS):
    """Binary real/fake cross-entropy pair (non-saturating generator form)."""
    dr = guard_probability(d_real, eps)
    df = guard_probability(d_fake, eps)
    loss_d = -(dr.log() + (1.0 - df).log()).mean()
    loss_g = -df.log().mean()
    return loss_d, loss_g


def wgan_loss(d_real, d_fake):
    """Critic score difference; scores are unconstrained reals."""
    loss_d = -(d_real.mean() - d_fake.mean())
    loss_g = -d_fake.mean()
    return loss_d, loss_g


def cgan_loss(d_real_given_y, d_fake_given_y, eps=LOG_GUARD_EPS):
    """Conditional variant: same functional form applied to conditioned scores.

    Conditioning happens upstream (labels joined to both networks' inputs),
    so the loss itself reduces to the unconditional form.
    """
    return gan_loss(d_real_given_y, d_fake_given_y, eps)


def resgan_loss(d_real, d_fake, y, eps=LOG_GUARD_EPS, saturating=False):
    """Attribute-vector objective for the d-headed discriminator.

    d_real, d_fake and y all have shape (N, d). loss_d is -J (ascent on J);
    loss_g drives the discriminator's response at generated images toward y.
    """
    if not (d_real.shape == d_fake.shape == y.shape):
        raise ShapeError(
            f"score/label shapes disagree: {d_real.shape}, {d_fake.shape}, {y.shape}"
        )
    dr = guard_probability(d_real, eps)
    df = guard_probability(d_fake, eps)
    value = y * (dr.log() + (1.0 - df).log()) + (1.0 - y) * ((1.0 - dr).log() + df.log())
    loss_d = -value.mean()
    if saturating:
        loss_g = (y * (1.0 - df).log() + (1.0 - y) * df.log()).mean()
    else:
        loss_g = -(y * df.log() + (1.0 - y) * (1.0 - df).log()).mean()
    return loss_d, loss_g


def _fake_branch_term(y, f_theta_gy):
    """(1 - y - f(g(y))) * y: shared by both closed-form gradients."""
    return (1.0 - y - f_theta_gy) * y


def discriminator_closed_form_grad(x, y, f_theta_x, f_theta_gy):
    """Closed-form ascent direction for the discriminator parameter.

    (y - f(x)) * x + (1 - y - f(g(y))) * y, evaluated elementwise on arrays.
    Exact for the reference logistic pair; an oracle, not a training path.
    """
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    f_theta_x = np.asarray(f_theta_x, dtype=np.float64)
    f_theta_gy = np.asarray(f_theta_gy, dtype=np.float64)
    return (y - f_theta_x) * x + _fake_branch_term(y, f_theta_gy)


def generator_closed_form_grad(y, f_theta_gy):
    """Closed-form descent direction for the generator parameter.

    Identical to the fake-branch term of the discriminator gradient; the
    one-term-vs-two-term mismatch is what makes the game non-stationary.
    """
    y = np.asarray(y, dtype=np.float64)
    f_theta_gy = np.asarray(f_theta_gy, dtype=np.float64)
    return _fake_branch_term(y, f_theta_gy)


class ReferenceLogisticModel:
    """Single-logistic-unit pair for which the closed-form gradients are exact.

    score_real = sigmoid(theta * x); score_fake = sigmoid((theta + phi) * y).
    `value` builds J with tape-recorded tensors so reverse-mode gradients of
    theta and phi can be compared against the closed forms.
    """

    def __init__(self, theta, phi):
        self.theta = Tensor(np.asarray(theta, dtype=np.float64), requires_grad=True)
        self.phi = Tensor(np.asarray(phi, dtype=np.float64), requires_grad=True)

    def score_real(self, x):
        return (self.theta * Tensor(x)).sigmoid()

    def score_fake(self, y):
        return ((self.theta + self.phi) * Tensor(y)).sigmoid()

    def value(self, x, y):
        """J for one (x, y) draw, without any epsilon guard (scores are interior)."""
        yt = Tensor(y)
        dr = self.score_real(x)
        df = self.score_fake(y)
        term = yt * (dr.log() + (1.0 - df).log()) + (1.0 - yt) * ((1.0 - dr).log() + df.log())
        return term.mean()

    def reverse_mode_grads(self, x, y):
        """(dJ/dtheta, dJ/dphi) by replaying the tape."""
        self.theta.zero_grad()
        self.phi.zero_grad()
        self.value(x, y).backward()
        return self.theta.grad.copy(), self.phi.grad.copy()
