"""Central finite-difference gradient verification for ops and blocks."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor, no_grad


def gradcheck(fn, tensors, h: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between analytic and numeric gradients.

    ``fn(*tensors)`` must return a Tensor; a fixed random projection reduces
    it to a scalar so cancellation cannot hide errors.  Every entry of every
    tensor with requires_grad is perturbed by +-h (central differences).
    Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    for t in tensors:
        t.zero_grad()

    out = fn(*tensors)
    # small projection keeps f64 cancellation noise in the central differences
    # below tolerance even for parameters whose true gradient is exactly zero
    proj = 1e-3 * rng.standard_normal(out.shape)
    loss = T.tsum(T.mul(out, Tensor(proj)))
    if not np.isfinite(loss.item()):
        raise FloatingPointError("non-finite loss in gradcheck forward")
    loss.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros(t.shape)
                for t in tensors if t.requires_grad]

    def scalar():
        with no_grad():
            return float((fn(*tensors).data * proj).sum())

    worst = 0.0
    ai = 0
    for t in tensors:
        if not t.requires_grad:
            continue
        a = analytic[ai]
        ai += 1
        flat = t.data.reshape(-1)
        aflat = a.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = scalar()
            flat[j] = orig - h
            fm = scalar()
            flat[j] = orig
            num = (fp - fm) / (2.0 * h)
            if not np.isfinite(num):
                raise FloatingPointError(
                    f"non-finite finite-difference value at parameter entry {j}")
            err = abs(aflat[j] - num) / max(abs(aflat[j]), abs(num), 1e-8)
            worst = max(worst, err)
    for t in tensors:
        t.zero_grad()
    return worst


def _rand(rng, shape, requires_grad=True):
    return Tensor(rng.standard_normal(shape), requires_grad=requires_grad)


def standard_suite(seed: int = 0) -> dict[str, float]:
    """Named finite-difference checks over every primitive and block.

    Returns {check name: max relative error}.  Block-level entries are added
    lazily to avoid an import cycle at module load.
    """
    from .mdsc import MdscBlock, MdscConfig
    from .attention import BsaBlock, MhsaBlock
    from .model import ModelConfig, build

    rng = np.random.Generator(np.random.Philox(key=seed))
    results: dict[str, float] = {}

    results["add"] = gradcheck(T.add, [_rand(rng, (3, 4)), _rand(rng, (3, 4))])
    results["mul"] = gradcheck(T.mul, [_rand(rng, (3, 4)), _rand(rng, (1, 4))])
    results["matmul"] = gradcheck(T.matmul, [_rand(rng, (3, 4)), _rand(rng, (4, 2))])
    results["concat"] = gradcheck(
        lambda a, b: T.concat([a, b], axis=0), [_rand(rng, (2, 3)), _rand(rng, (4, 3))])
    results["mean"] = gradcheck(lambda a: T.mean(a, axis=1), [_rand(rng, (3, 5))])
    results["softmax"] = gradcheck(lambda a: T.softmax(a, axis=-1), [_rand(rng, (4, 6))])
    results["gelu"] = gradcheck(T.gelu, [_rand(rng, (4, 5))])
    results["layer_norm"] = gradcheck(
        T.layer_norm,
        [_rand(rng, (3, 8)), _rand(rng, (8,)), _rand(rng, (8,))])
    results["linear"] = gradcheck(
        T.linear, [_rand(rng, (5, 4)), _rand(rng, (3, 4)), _rand(rng, (3,))])
    results["max_pool1d"] = gradcheck(
        lambda a: T.max_pool1d(a, 3), [_rand(rng, (2, 3, 9))])
    results["conv1d"] = gradcheck(
        lambda x, w, b: T.conv1d(x, w, b, stride=2, padding=2),
        [_rand(rng, (2, 3, 12)), _rand(rng, (4, 3, 5)), _rand(rng, (4,))])
    results["conv1d_depthwise"] = gradcheck(
        lambda x, w: T.conv1d(x, w, stride=1, padding=2, groups=3),
        [_rand(rng, (2, 3, 10)), _rand(rng, (3, 1, 5))])

    def bn_train(x, g, b):
        return T.batchnorm1d(x, g, b, T.BnState(3), mode="train")

    results["batchnorm1d"] = gradcheck(
        bn_train, [_rand(rng, (2, 3, 6)), _rand(rng, (3,)), _rand(rng, (3,))])

    def ce(logits):
        return T.cross_entropy(logits, np.array([1, 3, 2]))

    results["cross_entropy"] = gradcheck(ce, [_rand(rng, (3, 4))])

    mdsc = MdscBlock(MdscConfig(in_channels=3, out_channels=4,
                                kernel_sizes=(3, 5, 7), stride=1), seed=seed)
    results["mdsc_block"] = gradcheck(
        lambda x, *ps: mdsc.forward(x, mode="train"),
        [_rand(rng, (2, 3, 16))] + [p for _, p in mdsc.parameters()])

    from .model import StandardMultiScaleBlock
    std = StandardMultiScaleBlock(MdscConfig(in_channels=3, out_channels=4,
                                             kernel_sizes=(3, 5), stride=1), seed=seed)
    results["standard_block"] = gradcheck(
        lambda x, *ps: std.forward(x, mode="train"),
        [_rand(rng, (2, 3, 12))] + [p for _, p in std.parameters()])

    bsa = BsaBlock(model_dim=8, seed=seed)
    results["bsa_block"] = gradcheck(
        lambda x, *ps: bsa.forward(x),
        [_rand(rng, (2, 6, 8))] + [p for _, p in bsa.parameters()])

    mhsa = MhsaBlock(model_dim=8, heads=2, seed=seed)
    results["mhsa_block"] = gradcheck(
        lambda x, *ps: mhsa.forward(x),
        [_rand(rng, (2, 5, 8))] + [p for _, p in mhsa.parameters()])

    cfg = ModelConfig(conv_kind="mdsc", attn_kind="bsa", input_length=64,
                      stem=(4, 7, 2), stages=((8, (3, 5), 2),),
                      encoder=(1, 8, 2, 2), num_classes=10)
    net = build(cfg, seed=seed)
    results["full_network"] = gradcheck(
        lambda x, *ps: net.forward(x, mode="train"),
        [_rand(rng, (2, 1, 64))] + [p for _, p in net.parameters()])

    return results
