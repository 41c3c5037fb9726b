"""Tour of the autodiff core: build a tensor graph, differentiate it,
and verify the analytic gradients against finite differences.

Run: python3 demos/01_autodiff_basics.py
"""

import numpy as np

from noclab import autodiff as ad

rng = np.random.default_rng(0)

# --- a small expression graph ----------------------------------------------
# loss = sum(relu(x @ w + b) * s)
x = ad.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
w = ad.Tensor(rng.normal(size=(3, 2)), requires_grad=True)
b = ad.Tensor(np.zeros(2), requires_grad=True)

hidden = ad.relu(ad.add(ad.matmul(x, w), b))
loss = ad.tensor_sum(ad.mul(hidden, ad.Tensor(rng.normal(size=(4, 2)))))
grads = ad.backward(loss)
print(f"loss = {loss.item():.4f}")
print(f"dloss/dw row 0 = {np.round(w.grad[0], 4)}")
print(f"{len(grads)} leaf tensors received gradients")

# --- gradient checking ------------------------------------------------------
# grad_check compares the analytic gradient with central differences and
# returns the worst relative error.
probe = ad.Tensor(rng.normal(size=(4, 3)))
err = ad.grad_check(
    lambda t: ad.tensor_sum(ad.relu(ad.add(ad.matmul(t, w), b))), probe)
print(f"matmul/relu chain grad check: {err:.2e}")

# convolution + pooling, the building blocks of the conv heads
kern = ad.Tensor(rng.normal(size=(2, 1, 3, 3)), requires_grad=True)
bias = ad.Tensor(np.zeros(2), requires_grad=True)
img = ad.Tensor(rng.normal(size=(1, 1, 8, 8)))
err = ad.grad_check(
    lambda t: ad.tensor_sum(ad.maxpool2d(ad.conv2d(t, kern, bias, 1, 1), 2, 2)),
    img)
print(f"conv/maxpool chain grad check: {err:.2e}")

# cross-entropy sanity: uniform logits over k classes give loss ln(k)
logits = ad.Tensor(np.zeros((6, 5)), requires_grad=True)
ce = ad.softmax_cross_entropy(logits, np.zeros(6, dtype=int))
print(f"uniform-logit cross-entropy = {ce.item():.4f} (ln 5 = {np.log(5):.4f})")
