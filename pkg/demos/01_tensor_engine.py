#!/usr/bin/env python3
# Tour of the built-in tensor engine: forward ops, reverse-mode gradients,
# and a quick finite-difference cross-check.

import numpy as np

import jepamatch.autodiff as ad

# --- forward ops on constants -------------------------------------------
a = ad.constant([[1.0, 2.0], [3.0, 4.0]])
b = ad.constant([[0.5, 0.0], [0.0, 0.5]])
print("matmul:\n", ad.matmul(a, b).data)
print("gelu(0, 1, -1):", ad.gelu(ad.constant([0.0, 1.0, -1.0])).data)

# --- gradients via the tape ----------------------------------------------
# loss = 0.5 * ||W x||^2 has gradient W^T W x with respect to x
tape = ad.Tape()
x = tape.leaf(np.array([[1.0], [2.0], [-1.0]]))
w = ad.constant(np.random.default_rng(0).standard_normal((3, 3)))
loss = ad.mul(ad.tsum(ad.square(ad.matmul(w, x))), 0.5)
grads = ad.backward(loss)
print("analytic dloss/dx:", grads[x].ravel())
print("expected        :", (w.data.T @ w.data @ x.data).ravel())

# --- central differences agree ------------------------------------------
def value(vec):
    return ad.mul(ad.tsum(ad.square(ad.matmul(w, ad.constant(vec)))), 0.5).item()

h = 1e-5
fd = np.zeros(3)
base = x.data.copy()
for i in range(3):
    up, dn = base.copy(), base.copy()
    up[i, 0] += h
    dn[i, 0] -= h
    fd[i] = (value(up) - value(dn)) / (2 * h)
print("finite diff     :", fd)
print("max abs diff    :", np.abs(fd - grads[x].ravel()).max())
