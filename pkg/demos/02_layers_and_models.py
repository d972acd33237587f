#!/usr/bin/env python3
"""Layers and networks: convolution adjointness, batchnorm statistics,
the residual pass-through generator and the d-headed discriminator."""

import numpy as np

from resgan.layers import BatchNorm2d, conv2d, deconv2d
from resgan.models import build_discriminator, build_generator, discriminate, generate
from resgan.tensor import Tensor

rng = np.random.default_rng(1)

# --- conv / transposed conv are exact adjoints --------------------------------
x = rng.normal(size=(2, 3, 8, 8))
w = rng.normal(size=(5, 3, 3, 3))
cx = conv2d(Tensor(x), Tensor(w), stride=1, pad=1).data
y = rng.normal(size=cx.shape)
dy = deconv2d(Tensor(y), Tensor(w), stride=1, pad=1).data
print("adjointness <conv(x),y> vs <x,deconv(y)>:",
      float((cx * y).sum()), "vs", float((x * dy).sum()))

# --- batchnorm normalizes per channel ------------------------------------------
bn = BatchNorm2d(3)
out = bn.forward(Tensor(rng.normal(2.0, 3.0, size=(16, 3, 6, 6))), train=True)
print("per-channel means after batchnorm:", out.data.mean(axis=(0, 2, 3)).round(8))

# --- the restoration generator keeps its input in the concat block -------------
gen = build_generator("resgan", (1, 28, 28), d=10, seed=42)
coarse = Tensor(rng.uniform(0, 1, size=(4, 1, 28, 28)))
block = gen.residual_join(coarse)
print("pass-through block intact:", bool((block.data[:, :1] == coarse.data).all()))

restored = generate(gen, coarse)
print("restored shape:", restored.shape, "range:",
      float(restored.data.min()), float(restored.data.max()))

# --- in add mode with a zeroed branch the head sees the input directly ---------
gen_add = build_generator("resgan", (1, 28, 28), d=10, seed=42, residual_mode="add")
for _, p in gen_add.parameters():
    p.data = np.zeros_like(p.data)
half = Tensor(np.full((1, 1, 28, 28), 0.5))
print("f(0.5) with zeroed branch:", float(generate(gen_add, half).data[0, 0, 0, 0]),
      "(= sigmoid(0.5))")

# --- discriminator emits one response per attribute -----------------------------
disc = build_discriminator("resgan", (1, 28, 28), d=10, seed=42)
scores = discriminate(disc, coarse)
print("attribute responses:", scores.shape, "all in (0,1):",
      bool((scores.data > 0).all() and (scores.data < 1).all()))
