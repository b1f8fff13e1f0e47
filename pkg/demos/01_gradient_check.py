"""Finite-difference check of every layer type used by the matcher."""
import numpy as np

from maskstereo.tensor import (
    conv2d_backward, conv2d_forward,
    fully_connected_backward, fully_connected_forward,
    gradient_check, relu_backward, relu_forward,
)

rng = np.random.default_rng(0)

# 5x5 and 4x4 kernels, as in the two trunks
for k in (5, 4):
    x = rng.standard_normal((9, 9, 3))
    w = rng.standard_normal((k, k, 3, 4))
    b = rng.standard_normal(4)
    print(gradient_check(conv2d_forward, conv2d_backward, [x, w, b], rng=rng, name=f"conv{k}x{k}"))

# fully connected head layer
x, w, b = rng.standard_normal((1, 16)), rng.standard_normal((16, 8)), rng.standard_normal(8)
print(gradient_check(fully_connected_forward, fully_connected_backward, [x, w, b], rng=rng, name="fc"))

# relu, kept away from the kink at zero
x = rng.standard_normal((5, 5))
x[np.abs(x) < 1e-2] = 0.5
print(gradient_check(relu_forward, lambda g, m: [relu_backward(g, m)], [x], rng=rng, name="relu"))

# a deliberately wrong gradient must be caught
print(gradient_check(fully_connected_forward, fully_connected_backward,
                     [rng.standard_normal((1, 16)), w, b], rng=rng, name="fc (corrupted)", corrupt=0.1))
