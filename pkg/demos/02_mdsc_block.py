"""Multi-scale depthwise separable convolution, taken apart.

A standard multi-scale block runs a full C_in x C_out convolution at each
kernel size.  The MDSC block replaces each branch with a depthwise pass
(one filter per channel) and defers all cross-channel mixing to a single
kernel-size-1 pointwise convolution.  This script shows the parameter
arithmetic and runs both blocks on the same input.
"""

import numpy as np

from ldrpmnet.mdsc import MdscBlock, MdscConfig, mdsc_param_count
from ldrpmnet.model import StandardMultiScaleBlock, standard_multiscale_param_count
from ldrpmnet.tensor import Tensor

C1, C2, KERNELS = 16, 32, (3, 5, 7)
cfg = MdscConfig(C1, C2, KERNELS)

# ---------------------------------------------------------------------------
# parameter accounting, term by term
# ---------------------------------------------------------------------------
depthwise = sum(C1 * k for k in KERNELS)          # one k-tap filter per channel
pointwise = len(KERNELS) * C1 * C2 + C2           # 1x1 fuse + bias
bn = 2 * C2
print(f"depthwise taps : {depthwise}")
print(f"pointwise fuse : {pointwise}")
print(f"batchnorm      : {bn}")
print(f"total          : {depthwise + pointwise + bn} "
      f"(mdsc_param_count -> {mdsc_param_count(cfg)})")

standard = standard_multiscale_param_count(cfg)
print(f"\nstandard multi-scale block with the same widths: {standard} params")
print(f"separable saving: {1 - mdsc_param_count(cfg) / standard:.1%}")

# ---------------------------------------------------------------------------
# both blocks map [B, C1, N] -> [B, C2, N]
# ---------------------------------------------------------------------------
rng = np.random.Generator(np.random.Philox(key=1))
x = Tensor(rng.standard_normal((2, C1, 64)))
for block in (MdscBlock(cfg, seed=0), StandardMultiScaleBlock(cfg, seed=0)):
    out = block.forward(x, mode="train")
    print(f"\n{type(block).__name__}: {x.shape} -> {out.shape}, "
          f"{block.param_count()} params")
