#!/usr/bin/env python3
"""The dense-tensor reverse-mode engine and its finite-difference oracle.

Everything learned in this library runs through the small Tensor class:
forward ops record their parents, backward() walks the graph in reverse
topological order, and gradcheck() compares every analytic gradient entry
against central differences.
"""

import numpy as np

from stedge.autodiff import Tensor, backward, gradcheck, softmax
from stedge.model import ModelConfig, TrajectoryForecaster
from stedge.synth import gradcheck_window

# a scalar chain: y = sum(softmax(W x)^2)
rng = np.random.default_rng(3)
w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
x = Tensor(rng.normal(size=(3, 2)))
prob = softmax((w @ x).transpose())
y = (prob * prob).sum()
backward(y)
print(f"y = {y.item():.6f}; dL/dW has shape {w.grad.shape}, "
      f"|grad| in [{np.abs(w.grad).min():.2e}, {np.abs(w.grad).max():.2e}]")

# softmax rows always sum to one, so a plain sum has zero gradient
w.grad = None
backward(softmax((w @ x).transpose()).sum())
print(f"sum(softmax) gradient is identically zero: "
      f"max |grad| = {np.abs(w.grad).max():.2e}")

# the oracle: central differences over every parameter entry
w.grad = None
err = gradcheck(lambda: ((w @ x) ** 2).mean(), [w], eps=1e-5)
print(f"gradcheck on a quadratic map: max relative error {err:.2e}")

# and over the entire forecasting pipeline
cfg = ModelConfig(model_dim=8, encoder_dim=16, encoder_heads=2,
                  encoder_layers=1)
model = TrajectoryForecaster(cfg, seed=0)
window = gradcheck_window()
print(f"\nfull pipeline: {model.params.n_values()} parameters, "
      f"loss {model.loss(window).item():.4f}")
print("running the full-model gradcheck (a few seconds)...")
err = gradcheck(lambda: model.loss(window), model.params.tensors(), eps=1e-5)
print(f"max relative error across all parameters: {err:.2e}  "
      f"({'OK' if err < 1e-4 else 'FAILED'} at the 1e-4 gate)")
