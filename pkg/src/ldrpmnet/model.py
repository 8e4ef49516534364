"""Network assembly: one skeleton, two toggles (conv kind, attention kind).

The four variants used in the ablation are:

    cnt        standard multi-scale conv  + multi-head attention
    cnt-mdsc   depthwise separable conv   + multi-head attention
    cnt-bsa    standard multi-scale conv  + broadcast attention
    ld-rpmnet  depthwise separable conv   + broadcast attention

Layout: stem conv -> conv stages (block + max pool) -> channels become the
embedding axis, time steps become tokens -> learned positional embedding ->
transformer encoder blocks -> mean over tokens -> linear classifier head.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import BsaBlock, MhsaBlock
from .layers import BatchNorm1d, Conv1d, LayerNorm, Linear, ParamInitializer
from .mdsc import MdscBlock, MdscConfig
from .tensor import ConfigurationError, Tensor

CHECKPOINT_MAGIC = b"LDRPM1"


@dataclass(frozen=True)
class ModelConfig:
    conv_kind: str = "mdsc"                     # standard | mdsc
    attn_kind: str = "bsa"                      # mhsa | bsa
    input_length: int = 8192
    stem: tuple = (16, 7, 2)                    # (channels, kernel, stride)
    stages: tuple = ((32, (3, 5, 7), 4),
                     (64, (3, 5, 7), 4),
                     (64, (3, 5, 7), 4))        # (out_channels, kernel_set, pool)
    encoder: tuple = (2, 64, 2, 4)              # (depth, model_dim, ffn_expansion, heads)
    num_classes: int = 10

    def __post_init__(self):
        object.__setattr__(self, "stem", tuple(self.stem))
        object.__setattr__(
            self, "stages",
            tuple((c, tuple(ks), p) for c, ks, p in self.stages))
        object.__setattr__(self, "encoder", tuple(self.encoder))
        if self.conv_kind not in ("standard", "mdsc"):
            raise ConfigurationError(f"conv_kind must be standard|mdsc, got {self.conv_kind!r}")
        if self.attn_kind not in ("mhsa", "bsa"):
            raise ConfigurationError(f"attn_kind must be mhsa|bsa, got {self.attn_kind!r}")
        if self.stages[-1][0] != self.encoder[1]:
            raise ConfigurationError(
                f"last stage width {self.stages[-1][0]} must equal encoder "
                f"model_dim {self.encoder[1]}")
        if self.num_classes < 2:
            raise ConfigurationError("need at least two classes")

    @property
    def token_count(self) -> int:
        n = self.input_length
        _, k, s = self.stem
        n = (n + 2 * ((k - 1) // 2) - k) // s + 1
        for _, _, pool in self.stages:
            n //= pool
        if n < 1:
            raise ConfigurationError(
                f"input_length {self.input_length} too short for the stage strides")
        return n


# CI-scale variant: input and widths halved relative to the default config.
REDUCED_CONFIG = ModelConfig(
    input_length=2048,
    stem=(8, 7, 2),
    stages=((16, (3, 5, 7), 4), (32, (3, 5, 7), 4), (32, (3, 5, 7), 4)),
    encoder=(2, 32, 2, 4),
)

MODEL_PRESETS = {
    "cnt": ("standard", "mhsa"),
    "cnt-mdsc": ("mdsc", "mhsa"),
    "cnt-bsa": ("standard", "bsa"),
    "ld-rpmnet": ("mdsc", "bsa"),
}


def standard_multiscale_param_count(config: MdscConfig) -> int:
    """Learnable scalars of the full cross-channel counterpart block."""
    c1, c2 = config.in_channels, config.out_channels
    ks = config.kernel_sizes
    return sum(c1 * c1 * k for k in ks) + len(ks) * c1 * c2 + c2 + 2 * c2


class StandardMultiScaleBlock:
    """Cross-channel multi-scale conv with the same topology as MdscBlock:
    parallel full convs C1->C1 per kernel size, concat, pointwise, BN, GELU."""

    def __init__(self, config: MdscConfig, seed: int = 0,
                 init: ParamInitializer | None = None):
        self.config = config
        init = init or ParamInitializer(seed)
        c1, c2 = config.in_channels, config.out_channels
        self.branches = [
            Conv1d(c1, c1, k, stride=config.stride, padding=(k - 1) // 2,
                   bias=False, init=init)
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
        z = T.concat([br.forward(x) for br in self.branches], axis=-2)
        y = self.pointwise.forward(z)
        y = self.bn.forward(y, mode)
        return T.gelu(y)

    def parameters(self):
        ps = []
        for k, br in zip(self.config.kernel_sizes, self.branches):
            ps += [(f"branch_k{k}.{n}", p) for n, p in br.parameters()]
        ps += [(f"pointwise.{n}", p) for n, p in self.pointwise.parameters()]
        ps += [(f"bn.{n}", p) for n, p in self.bn.parameters()]
        return ps

    def buffers(self):
        return [(f"bn.{n}", b) for n, b in self.bn.buffers()]

    def param_count(self) -> int:
        return sum(p.size for _, p in self.parameters())


class EncoderBlock:
    """Post-norm transformer encoder block: attention + residual + LayerNorm,
    feed-forward (d -> e*d -> d, GELU) + residual + LayerNorm."""

    def __init__(self, attn_kind: str, model_dim: int, ffn_expansion: int,
                 heads: int, init: ParamInitializer):
        if attn_kind == "mhsa":
            self.attn = MhsaBlock(model_dim, heads=heads, init=init)
        else:
            self.attn = BsaBlock(model_dim, init=init)
        self.norm1 = LayerNorm(model_dim, init=init)
        self.ffn1 = Linear(model_dim, ffn_expansion * model_dim, init=init)
        self.ffn2 = Linear(ffn_expansion * model_dim, model_dim, init=init)
        self.norm2 = LayerNorm(model_dim, init=init)

    def forward(self, x: Tensor) -> Tensor:
        y = self.norm1.forward(T.add(x, self.attn.forward(x)))
        f = self.ffn2.forward(T.gelu(self.ffn1.forward(y)))
        return self.norm2.forward(T.add(y, f))

    def parameters(self):
        ps = [(f"attn.{n}", p) for n, p in self.attn.parameters()]
        ps += [(f"norm1.{n}", p) for n, p in self.norm1.parameters()]
        ps += [(f"ffn1.{n}", p) for n, p in self.ffn1.parameters()]
        ps += [(f"ffn2.{n}", p) for n, p in self.ffn2.parameters()]
        ps += [(f"norm2.{n}", p) for n, p in self.norm2.parameters()]
        return ps


class Network:
    """Assembled classifier; construct via build()."""

    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        self.seed = seed
        init = ParamInitializer(seed)
        stem_c, stem_k, stem_s = config.stem
        self.stem = Conv1d(1, stem_c, stem_k, stride=stem_s,
                           padding=(stem_k - 1) // 2, bias=True, init=init)
        self.stem_bn = BatchNorm1d(stem_c, init=init)

        block_cls = MdscBlock if config.conv_kind == "mdsc" else StandardMultiScaleBlock
        self.stages = []
        c_in = stem_c
        for c_out, kernel_set, pool in config.stages:
            blk = block_cls(MdscConfig(c_in, c_out, kernel_set, 1), init=init)
            self.stages.append((blk, pool))
            c_in = c_out

        depth, d, ffn_e, heads = config.encoder
        tokens = config.token_count
        bound = float(np.sqrt(1.0 / d))
        self.pos_emb = init.uniform((tokens, d), bound)
        self.encoder = [EncoderBlock(config.attn_kind, d, ffn_e, heads, init)
                        for _ in range(depth)]
        self.head = Linear(d, config.num_classes, init=init)

    # -- forward ----------------------------------------------------------
    def forward(self, x: Tensor, mode: str = "eval") -> Tensor:
        if x.ndim != 3 or x.shape[1] != 1:
            raise T.DimensionError(f"expected input [B, 1, N], got {x.shape}")
        if x.shape[2] != self.config.input_length:
            raise T.DimensionError(
                f"input length {x.shape[2]} != configured "
                f"{self.config.input_length}")
        y = T.gelu(self.stem_bn.forward(self.stem.forward(x), mode))
        for blk, pool in self.stages:
            y = blk.forward(y, mode)
            y = T.max_pool1d(y, pool)
        y = T.transpose(y, (0, 2, 1))                  # [B, tokens, d]
        y = T.add(y, self.pos_emb)
        for enc in self.encoder:
            y = enc.forward(y)
        pooled = T.mean(y, axis=1)                     # [B, d]
        return self.head.forward(pooled)

    # -- parameter plumbing ----------------------------------------------
    def parameters(self):
        ps = [(f"stem.{n}", p) for n, p in self.stem.parameters()]
        ps += [(f"stem_bn.{n}", p) for n, p in self.stem_bn.parameters()]
        for i, (blk, _) in enumerate(self.stages):
            ps += [(f"stage{i}.{n}", p) for n, p in blk.parameters()]
        ps.append(("pos_emb", self.pos_emb))
        for i, enc in enumerate(self.encoder):
            ps += [(f"encoder{i}.{n}", p) for n, p in enc.parameters()]
        ps += [(f"head.{n}", p) for n, p in self.head.parameters()]
        return ps

    def buffers(self):
        bs = [(f"stem_bn.{n}", b) for n, b in self.stem_bn.buffers()]
        for i, (blk, _) in enumerate(self.stages):
            bs += [(f"stage{i}.{n}", b) for n, b in blk.buffers()]
        return bs

    def param_count(self) -> int:
        return sum(p.size for _, p in self.parameters())

    def state_arrays(self):
        """Named (name, ndarray) pairs: parameters then buffers, fixed order."""
        return ([(n, p.data) for n, p in self.parameters()]
                + [(f"buffer.{n}", b) for n, b in self.buffers()])

    def load_state_arrays(self, arrays: dict) -> None:
        for name, dst in self.state_arrays():
            src = arrays[name]
            if src.shape != dst.shape:
                raise T.DimensionError(
                    f"checkpoint tensor {name} has shape {src.shape}, "
                    f"expected {dst.shape}")
            dst[...] = src

    def snapshot(self) -> dict:
        return {n: a.copy() for n, a in self.state_arrays()}

    def restore(self, snap: dict) -> None:
        self.load_state_arrays(snap)


def build(config: ModelConfig, seed: int = 0) -> Network:
    return Network(config, seed)


def build_preset(name: str, base: ModelConfig | None = None,
                 seed: int = 0) -> Network:
    """Build one of the four ablation variants on shared widths."""
    if name not in MODEL_PRESETS:
        raise ConfigurationError(
            f"unknown model {name!r}; choose from {sorted(MODEL_PRESETS)}")
    conv_kind, attn_kind = MODEL_PRESETS[name]
    base = base or ModelConfig()
    cfg = ModelConfig(conv_kind=conv_kind, attn_kind=attn_kind,
                      input_length=base.input_length, stem=base.stem,
                      stages=base.stages, encoder=base.encoder,
                      num_classes=base.num_classes)
    return build(cfg, seed)


# --------------------------------------------------------------------------
# checkpoint container
# --------------------------------------------------------------------------

def save_checkpoint(net: Network, path) -> None:
    """Binary container: magic, canonical config text, named f64 tensors."""
    from .config import model_config_to_text

    cfg_text = model_config_to_text(net.config).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(cfg_text)))
        f.write(cfg_text)
        arrays = net.state_arrays()
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays:
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            for ext in arr.shape:
                f.write(struct.pack("<I", ext))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Network:
    from .config import model_config_from_text

    with open(path, "rb") as f:
        blob = f.read()
    if blob[:6] != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {blob[:6]!r}")
    off = 6

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise ValueError("truncated checkpoint file")
        chunk = blob[off:off + n]
        off += n
        return chunk

    cfg_len, = struct.unpack("<I", take(4))
    cfg = model_config_from_text(take(cfg_len).decode())
    count, = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        nlen, = struct.unpack("<H", take(2))
        name = take(nlen).decode()
        rank, = struct.unpack("<B", take(1))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(rank))
        size = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape).copy()
    net = build(cfg, seed=0)
    net.load_state_arrays(arrays)
    return net
