#!/usr/bin/env python3
"""A small end-to-end restoration experiment: train the residual generator
against the classifier-embedded discriminator, watch the loss curves for the
balance crossing, and score restorations with an independent probe.

Desk scale for this demo is deliberately tiny (a few minutes); scale
train_count/epochs up for the real protocol.
"""

import numpy as np

from resgan.data import DegradeConfig, degrade, split_dataset, synth_digits
from resgan.imaging import write_image_grid
from resgan.models import generate
from resgan.tensor import Tensor
from resgan.training import (
    TrainConfig,
    attribute_accuracy,
    detect_balance,
    evaluate,
    train,
    train_external_probe,
)

ds = synth_digits(800, seed=0)
train_ds, eval_ds = split_dataset(ds, 600, 200, seed=0)
cfg = TrainConfig(kind="resgan", epochs=8, batch_size=64, seed=1,
                  degrade=DegradeConfig(factor=4))

(gen, disc), log = train(cfg, train_ds)
for r in log.records:
    print(f"epoch {r.epoch:2d}: loss_g={r.loss_g:.3f} loss_d={r.loss_d:.3f} "
          f"classifier acc={r.accuracy:.3f}")
crossing = detect_balance(log)
print("balance crossing:", "none yet" if crossing is None else f"epoch {crossing}")

probe = train_external_probe(train_ds, seed=0, epochs=8)
coarse = degrade(eval_ds.images, cfg.degrade)
restored = generate(gen, Tensor(coarse), train=False).data

print(f"probe accuracy fine    : {attribute_accuracy(probe(eval_ds.images), eval_ds.attributes):.3f}")
print(f"probe accuracy coarse  : {attribute_accuracy(probe(coarse), eval_ds.attributes):.3f}")
print(f"probe accuracy restored: {attribute_accuracy(probe(restored), eval_ds.attributes):.3f}")

report = evaluate((gen, disc), eval_ds, cfg)
print(f"embedded eval: loss={report.loss:.3f} accuracy={report.accuracy:.3f}")

write_image_grid(np.stack([coarse[0], restored[0], eval_ds.images[0]]), 1, 3,
                 "demo_restore_triplet.pgm")
print("wrote demo_restore_triplet.pgm (coarse | restored | real)")
