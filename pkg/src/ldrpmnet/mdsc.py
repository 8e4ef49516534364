"""Multi-scale depthwise separable convolution block.

Parallel depthwise convolutions at several odd kernel sizes, channel
concatenation, 1x1 pointwise fusion, BatchNorm, GELU.  "Same" padding keeps
all branch outputs at the same time extent so the concatenation is
well-formed; stride (if any) is applied in the depthwise stage only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import tensor as T
from .layers import BatchNorm1d, Conv1d, ParamInitializer
from .tensor import ConfigurationError, Tensor


@dataclass(frozen=True)
class MdscConfig:
    in_channels: int
    out_channels: int
    kernel_sizes: tuple = (3, 5, 7)
    stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kernel_sizes", tuple(self.kernel_sizes))
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError("channel counts must be >= 1")
        if len(self.kernel_sizes) < 1:
            raise ConfigurationError("at least one kernel size required")
        if len(set(self.kernel_sizes)) != len(self.kernel_sizes):
            raise ConfigurationError(f"kernel sizes must be distinct: {self.kernel_sizes}")
        if any(k < 1 or k % 2 == 0 for k in self.kernel_sizes):
            raise ConfigurationError(f"kernel sizes must be odd and positive: {self.kernel_sizes}")
        if self.stride < 1:
            raise ConfigurationError("stride must be >= 1")


def mdsc_param_count(config: MdscConfig) -> int:
    """Closed-form learnable-scalar count of one block.

    depthwise (sum C1*k_l) + pointwise (L*C1*C2) + pointwise bias (C2)
    + BatchNorm affine (2*C2).
    """
    c1, c2 = config.in_channels, config.out_channels
    ks = config.kernel_sizes
    return sum(c1 * k for k in ks) + len(ks) * c1 * c2 + c2 + 2 * c2


class MdscBlock:
    """Depthwise branches -> concat -> pointwise -> BatchNorm -> GELU."""

    def __init__(self, config: MdscConfig, seed: int = 0,
                 init: ParamInitializer | None = None):
        self.config = config
        init = init or ParamInitializer(seed)
        c1, c2 = config.in_channels, config.out_channels
        # no depthwise bias: it would be absorbed by the BatchNorm shift
        self.depthwise = [
            Conv1d(c1, c1, k, stride=config.stride, padding=(k - 1) // 2,
                   groups=c1, bias=False, init=init)
            for k in config.kernel_sizes
        ]
        self.pointwise = Conv1d(len(config.kernel_sizes) * c1, c2, 1,
                                bias=True, init=init)
        self.bn = BatchNorm1d(c2, init=init)

    def forward(self, x: Tensor, mode: str = "train") -> Tensor:
        if x.shape[-2] != self.config.in_channels:
            raise T.DimensionError(
                f"input channel axis is {x.shape[-2]}, block expects "
                f"{self.config.in_channels}")
        branches = [dw.forward(x) for dw in self.depthwise]
        z = T.concat(branches, axis=-2)
        y = self.pointwise.forward(z)
        y = self.bn.forward(y, mode)
        return T.gelu(y)

    def parameters(self):
        ps = []
        for k, dw in zip(self.config.kernel_sizes, self.depthwise):
            ps += [(f"depthwise_k{k}.{n}", p) for n, p in dw.parameters()]
        ps += [(f"pointwise.{n}", p) for n, p in self.pointwise.parameters()]
        ps += [(f"bn.{n}", p) for n, p in self.bn.parameters()]
        return ps

    def buffers(self):
        return [(f"bn.{n}", b) for n, b in self.bn.buffers()]

    def param_count(self) -> int:
        return sum(p.size for _, p in self.parameters())
