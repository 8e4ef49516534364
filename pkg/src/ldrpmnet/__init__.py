"""Lightweight 1-D fault-diagnosis network (multi-scale depthwise separable
convolution + broadcast self-attention) on a minimal numpy autodiff engine,
with exact parameter/FLOPs accounting, a synthetic labeled-waveform corpus,
and a training/ablation harness."""

__version__ = "0.1.0"

from .tensor import Tensor, no_grad  # noqa: F401
from .model import ModelConfig, build, build_preset  # noqa: F401
