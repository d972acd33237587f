"""Adversarial training lab: residual conditional restoration plus GAN baselines."""

from .tensor import Tensor, concat, elementwise, grad_check, matmul, reduce

__version__ = "0.1.0"

__all__ = ["Tensor", "concat", "elementwise", "grad_check", "matmul", "reduce", "__version__"]
