"""Tour of the numeric core: graphs, backward passes, gradient checking.

Builds a two-layer network by hand, differentiates a scalar loss, and
verifies every gradient against central finite differences.
"""

import numpy as np

from fpmt import numcore as nc

rng = np.random.default_rng(0)

# -- a tiny computation graph ------------------------------------------------

params = nc.ParameterSet()
w1 = params.add("w1", rng.uniform(-0.5, 0.5, (3, 4)))
b1 = params.add("b1", np.zeros((1, 4)))
w2 = params.add("w2", rng.uniform(-0.5, 0.5, (4, 2)))

x = nc.constant(rng.normal(size=(5, 3)))
targets = nc.softmax_stable(rng.normal(size=(5, 2)))


def loss_fn():
    hidden = nc.tanh(nc.add(nc.matmul(x, w1), b1))
    probs = nc.softmax(nc.matmul(hidden, w2))
    log_p = nc.log(nc.clamp_min(probs, nc.EPS))
    return nc.scale(nc.sum_all(nc.mul(nc.constant(targets), log_p)), -1.0 / 5)


loss = loss_fn()
print(f"cross-entropy of the random net: {loss.item():.6f}")

params.zero_grad()
nc.backward(loss)
print("gradient norms per parameter:")
for name, node in params.items():
    print(f"  {name}: {np.linalg.norm(node.grad):.6f}")

# -- the finite-difference referee -------------------------------------------

report = nc.grad_check(params, loss_fn, epsilon=1e-5, tol=1e-6)
print(report)

# gradients accumulate until zeroed; a second backward doubles them
params.zero_grad()
nc.backward(loss_fn())
single = np.linalg.norm(w1.grad)
nc.backward(loss_fn())
print(f"two backward passes without zeroing: w1 grad norm "
      f"{np.linalg.norm(w1.grad):.6f} = 2 x {single:.6f}")

# a deliberately wrong backward rule is caught and named
bad = nc.ParameterSet()
w = bad.add("broken", [[0.5, 1.5]])


def wrong_square(a):
    out = nc.Node(a.value * a.value, parents=(a,))

    def backward(g):
        a.grad += g * 3.0 * a.value  # wrong on purpose: the true rule is 2a

    out._backward_fn = backward
    return out


report = nc.grad_check(bad, lambda: nc.sum_all(wrong_square(w)))
print(f"negative control: {report}")
