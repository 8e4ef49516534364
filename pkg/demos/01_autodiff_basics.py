"""A walk through the reverse-mode engine on paper-sized examples.

The whole library runs on one global tape: every op appends a node, and
``backward`` sweeps the tape in reverse.  This script builds a few tiny
graphs, prints analytic gradients next to hand-derived ones, and finishes
with a finite-difference check on a composite expression.
"""

import numpy as np

from ldrpmnet import tensor as T
from ldrpmnet.gradcheck import gradcheck
from ldrpmnet.tensor import Tensor

# ---------------------------------------------------------------------------
# 1. d/dx of a quadratic: y = sum(x * x), dy/dx = 2x
# ---------------------------------------------------------------------------
x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
y = T.tsum(x * x)
y.backward()
print("x          ", x.data)
print("grad of sum(x^2):", x.grad, " (expect 2x =", 2 * x.data, ")")

# ---------------------------------------------------------------------------
# 2. broadcasting is handled by summing gradients back to the leaf shape
# ---------------------------------------------------------------------------
w = Tensor(np.array([0.5]), requires_grad=True)
v = Tensor(np.arange(4.0), requires_grad=True)
out = T.tsum(w * v)                    # w broadcasts over the 4 entries
out.backward()
print("\nbroadcast scalar: grad(w) =", w.grad, " (expect sum(v) =",
      v.data.sum(), ")")

# ---------------------------------------------------------------------------
# 3. the tape is consumed by backward; a second call is an error
# ---------------------------------------------------------------------------
z = Tensor(np.ones(2), requires_grad=True)
loss = T.mean(z * z)
loss.backward()
try:
    loss.backward()
except T.TapeError as exc:
    print("\nsecond backward correctly refused:", exc)

# ---------------------------------------------------------------------------
# 4. finite differences agree with the tape on a composite chain
# ---------------------------------------------------------------------------
rng = np.random.Generator(np.random.Philox(key=0))
a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)


def fn(a, b):
    return T.mean(T.gelu(a @ b))


err = gradcheck(fn, [a, b])
print(f"\ngradcheck on mean(gelu(a @ b)): max relative error {err:.3e}")
