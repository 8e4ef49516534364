"""Broadcast self-attention next to standard multi-head attention.

MHSA builds an N x N score matrix per head, so its cost grows quadratically
with the token count.  The broadcast form scores each token with a single
scalar, pools one global context vector, and modulates the values with it —
every intermediate stays O(N * d).  This script compares parameter counts,
flop growth, and shows the broadcast attention weights on a toy sequence.
"""

import numpy as np

from ldrpmnet.attention import BsaBlock, MhsaBlock, attention_flops
from ldrpmnet.tensor import Tensor

D = 64

print(f"model_dim = {D}")
print(f"  MHSA params: {MhsaBlock(D, heads=4).param_count()}")
print(f"  BSA  params: {BsaBlock(D).param_count()}")

# ---------------------------------------------------------------------------
# flop growth as the sequence doubles
# ---------------------------------------------------------------------------
print("\ntokens    mhsa flops      bsa flops")
for n in (32, 64, 128, 256, 512):
    print(f"{n:>6} {attention_flops('mhsa', n, D, 4):>13,} "
          f"{attention_flops('bsa', n, D):>13,}")
mh = attention_flops("mhsa", 512, D, 4) / attention_flops("mhsa", 256, D, 4)
bs = attention_flops("bsa", 512, D) / attention_flops("bsa", 256, D)
print(f"doubling 256 -> 512 tokens: mhsa x{mh:.2f}, bsa x{bs:.2f}")

# ---------------------------------------------------------------------------
# the broadcast weights form a distribution over tokens
# ---------------------------------------------------------------------------
rng = np.random.Generator(np.random.Philox(key=2))
block = BsaBlock(8, seed=0)
x = Tensor(rng.standard_normal((1, 6, 8)))
weights = block.attention_weights(x)[0]
print("\nbroadcast attention weights over 6 tokens:")
print(np.array2string(weights, precision=4))
print("sum:", weights.sum())
