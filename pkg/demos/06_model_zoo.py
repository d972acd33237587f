#!/usr/bin/env python3
"""All five adversarial families side by side at toy scale, scored with one
shared external probe and printed in loss/accuracy cell format."""

import numpy as np

from resgan.cli import format_cell
from resgan.data import DegradeConfig, split_dataset, synth_digits
from resgan.training import TrainConfig, evaluate, train, train_external_probe

ds = synth_digits(700, seed=0)
train_ds, eval_ds = split_dataset(ds, 500, 200, seed=0)
probe = train_external_probe(train_ds, seed=0, epochs=8)

print(f"{'model':8s} {'loss/acc':>12s}")
for kind in ("gan", "dcgan", "wgan", "cgan", "resgan"):
    cfg = TrainConfig(kind=kind, epochs=4, batch_size=64, seed=1,
                      degrade=DegradeConfig(factor=4))
    try:
        models, _ = train(cfg, train_ds)
        report = evaluate(models, eval_ds, cfg, probe=probe)
        cell = format_cell(report.loss, report.accuracy)
    except Exception as exc:  # a diverged cell still gets reported
        cell = "diverged"
    print(f"{kind:8s} {cell:>12s}")
