#!/usr/bin/env python3
"""Tour of the tensor core: forward ops, reverse-mode gradients, grad_check."""

import numpy as np

from resgan.tensor import Tensor, concat, grad_check, matmul

rng = np.random.default_rng(0)

# --- forward ops -------------------------------------------------------------
x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
y = (x.sigmoid() * x.tanh()).mean()
print("scalar loss:", y.item())

# --- reverse mode ------------------------------------------------------------
y.backward()
print("grad shape:", x.grad.shape)
print("grad:\n", x.grad)

# gradients accumulate until zero_grad
y2 = (x * x).sum()
y2.backward()
print("after second backward, grad includes 2x:\n", x.grad)
x.zero_grad()

# --- matrix product and concat -----------------------------------------------
a = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
b = Tensor(rng.normal(size=(5, 2)))
print("matmul:", matmul(a, b).shape)

joined = concat([Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 2)))], axis=1)
print("concat gives", joined.shape, "and slices back:", joined[:, 3:].shape)

# --- the verification harness ------------------------------------------------
err = grad_check(lambda t: (t.leaky_relu(0.2).tanh() + t.sigmoid()).mean(),
                 Tensor(rng.uniform(0.1, 1.0, size=(3, 4))))
print(f"grad_check max relative error: {err:.2e} (tolerance 1e-4)")
