"""Parameter-holding layers built on the autodiff primitives.

Initialization is fan-in uniform (bound = sqrt(1/fan_in)) drawn from a
counter-based Philox stream, so a given seed always produces bit-identical
parameters regardless of construction order elsewhere.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import BnState, Tensor


class ParamInitializer:
    """Deterministic parameter source: (seed, counter) -> Philox stream."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.counter = 0

    def _stream(self):
        key = np.array([self.seed, self.counter], dtype=np.uint64)
        self.counter += 1
        return np.random.Generator(np.random.Philox(key=key))

    def uniform(self, shape, bound: float) -> Tensor:
        g = self._stream()
        return Tensor(g.uniform(-bound, bound, size=shape), requires_grad=True)

    def zeros(self, shape) -> Tensor:
        return Tensor(np.zeros(shape), requires_grad=True)

    def ones(self, shape) -> Tensor:
        return Tensor(np.ones(shape), requires_grad=True)


class Conv1d:
    def __init__(self, in_channels: int, out_channels: int, kernel: int, *,
                 stride: int = 1, padding: int = 0, groups: int = 1,
                 bias: bool = True, init: ParamInitializer | None = None):
        init = init or ParamInitializer(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.groups = groups
        fan_in = (in_channels // groups) * kernel
        bound = float(np.sqrt(1.0 / fan_in))
        self.weight = init.uniform((out_channels, in_channels // groups, kernel), bound)
        self.bias = init.uniform((out_channels,), bound) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.conv1d(x, self.weight, self.bias, stride=self.stride,
                        padding=self.padding, groups=self.groups)

    def parameters(self):
        ps = [("weight", self.weight)]
        if self.bias is not None:
            ps.append(("bias", self.bias))
        return ps

    def param_count(self) -> int:
        return sum(p.size for _, p in self.parameters())


class Linear:
    def __init__(self, in_features: int, out_features: int, *,
                 bias: bool = True, init: ParamInitializer | None = None):
        init = init or ParamInitializer(0)
        self.in_features = in_features
        self.out_features = out_features
        bound = float(np.sqrt(1.0 / in_features))
        self.weight = init.uniform((out_features, in_features), bound)
        self.bias = init.uniform((out_features,), bound) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)

    def parameters(self):
        ps = [("weight", self.weight)]
        if self.bias is not None:
            ps.append(("bias", self.bias))
        return ps

    def param_count(self) -> int:
        return sum(p.size for _, p in self.parameters())


class BatchNorm1d:
    def __init__(self, channels: int, *, momentum: float = 0.1, eps: float = 1e-5,
                 init: ParamInitializer | None = None):
        init = init or ParamInitializer(0)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = init.ones((channels,))
        self.beta = init.zeros((channels,))
        self.state = BnState(channels)

    def forward(self, x: Tensor, mode: str) -> Tensor:
        return T.batchnorm1d(x, self.gamma, self.beta, self.state, mode=mode,
                             momentum=self.momentum, eps=self.eps)

    def parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.state.mean), ("running_var", self.state.var)]

    def param_count(self) -> int:
        return 2 * self.channels


class LayerNorm:
    def __init__(self, dim: int, *, eps: float = 1e-5,
                 init: ParamInitializer | None = None):
        init = init or ParamInitializer(0)
        self.dim = dim
        self.eps = eps
        self.gamma = init.ones((dim,))
        self.beta = init.zeros((dim,))

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, eps=self.eps)

    def parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def param_count(self) -> int:
        return 2 * self.dim
