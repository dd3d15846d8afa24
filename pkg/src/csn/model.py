"""Channel-splitting super-resolution network.

Topology: a feature extractor (two 3x3 convs around a 1x1), a chain of
channel-splitting blocks, global fusion of all block outputs with a global
skip back to the extractor output, and a pixel-shuffle reconstruction head
with an interpolated external skip from the input.

Each channel-splitting block halves the trunk along the channel axis into a
residual-style branch and a dense-style branch, runs m merge-and-run stage
mappings, concatenates the halves back, fuses with a 1x1 conv and adds the
block input (local residual learning).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from . import ops
from .autodiff import Node, ParamStore, Tape

# variant -> ((top kind, top kernel), (bottom kind, bottom kernel))
# "SP" shares the R3D3 layout but drops the cross-branch averaging;
# "BASELINE" replaces each split stage by one full-width conv3x3 + relu.
_BRANCHES = {
    "SP":   (("res", 3), ("dense", 3)),
    "R3D3": (("res", 3), ("dense", 3)),
    "R3R3": (("res", 3), ("res", 3)),
    "D3D3": (("dense", 3), ("dense", 3)),
    "R3D5": (("res", 3), ("dense", 5)),
    "R5D3": (("res", 5), ("dense", 3)),
    "R3R5": (("res", 3), ("res", 5)),
    "D3D5": (("dense", 3), ("dense", 5)),
}

VARIANTS = ("BASELINE",) + tuple(_BRANCHES)
ESC_MODES = ("none", "nearest", "bilinear", "bicubic")


@dataclass
class ModelConfig:
    n: int = 4                  # channel-splitting blocks
    m: int = 4                  # stage mappings per block
    variant: str = "R3D3"
    channels: int = 256         # trunk width, split into two halves
    growth: int = 64            # dense-branch bottleneck width
    scale: int = 2
    in_channels: int = 1        # 1 for single slices, 96 for slice-stack mode
    esc_mode: str = "bicubic"
    residual_scale: float = 1.0

    def validate(self) -> "ModelConfig":
        if self.n < 1 or self.m < 1:
            raise ValueError(f"n and m must be >= 1, got n={self.n}, m={self.m}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.channels < 2 or self.channels % 2:
            raise ValueError(f"channels must be even and >= 2, got {self.channels}")
        if self.growth < 1:
            raise ValueError(f"growth must be >= 1, got {self.growth}")
        if self.scale not in (2, 3, 4):
            raise ValueError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.in_channels not in (1, 96):
            raise ValueError(f"in_channels must be 1 or 96, got {self.in_channels}")
        if self.esc_mode not in ESC_MODES:
            raise ValueError(f"unknown esc_mode {self.esc_mode!r}, expected one of {ESC_MODES}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d).validate()


def _branch_names(cfg: ModelConfig):
    (top_kind, _), (bot_kind, _) = _BRANCHES[cfg.variant]
    if top_kind == bot_kind:
        return f"{top_kind}1", f"{bot_kind}2"
    return top_kind, bot_kind


def _conv_spec(name, in_ch, out_ch, k):
    yield f"{name}.weight", (out_ch, in_ch, k, k)
    yield f"{name}.bias", (out_ch,)


def param_specs(cfg: ModelConfig):
    """Yield (name, shape) for every parameter, in build order."""
    cfg.validate()
    c, half, g = cfg.channels, cfg.channels // 2, cfg.growth
    yield from _conv_spec("fen.conv1", cfg.in_channels, c, 3)
    yield from _conv_spec("fen.conv2", c, c, 1)
    yield from _conv_spec("fen.conv3", c, c, 3)
    for i in range(cfg.n):
        for j in range(cfg.m):
            base = f"csb.{i}.stage.{j}"
            if cfg.variant == "BASELINE":
                yield from _conv_spec(f"{base}.conv", c, c, 3)
                continue
            (top_kind, top_k), (bot_kind, bot_k) = _BRANCHES[cfg.variant]
            top_name, bot_name = _branch_names(cfg)
            for bname, kind, k in ((top_name, top_kind, top_k), (bot_name, bot_kind, bot_k)):
                if kind == "res":
                    yield from _conv_spec(f"{base}.{bname}.conv1", half, half, k)
                    yield from _conv_spec(f"{base}.{bname}.conv2", half, half, k)
                else:
                    yield from _conv_spec(f"{base}.{bname}.conv1", half, g, k)
                    yield from _conv_spec(f"{base}.{bname}.conv2", half + g, half, k)
        yield from _conv_spec(f"csb.{i}.merge", c, c, 1)
    yield from _conv_spec("gff.conv1", (cfg.n + 1) * c, c, 1)
    yield from _conv_spec("gff.conv2", c, c, 3)
    if cfg.scale == 4:
        yield from _conv_spec("upscale.conv1", c, c * 4, 3)
        yield from _conv_spec("upscale.conv2", c, c * 4, 3)
    else:
        yield from _conv_spec("upscale.conv1", c, c * cfg.scale ** 2, 3)
    yield from _conv_spec("recover", c, cfg.in_channels, 3)


def param_count(cfg: ModelConfig) -> int:
    """Exact number of learnable scalars, computed from the topology."""
    return sum(math.prod(shape) for _, shape in param_specs(cfg))


def depth(cfg: ModelConfig) -> int:
    """Longest conv path from input to output."""
    cfg.validate()
    s = 2 if cfg.scale == 4 else 1
    per_stage = 1 if cfg.variant == "BASELINE" else 2
    return cfg.n * (per_stage * cfg.m + 1) + s + 6


def build(cfg: ModelConfig, seed: int, dtype=np.float32) -> "CsnModel":
    """Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out)) over the
    receptive field), zero biases; bit-deterministic for a fixed seed."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    store = ParamStore()
    for name, shape in param_specs(cfg):
        if name.endswith(".weight"):
            fan_in = shape[1] * shape[2] * shape[3]
            fan_out = shape[0] * shape[2] * shape[3]
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            value = rng.uniform(-bound, bound, size=shape)
        else:
            value = np.zeros(shape)
        store.add(name, value.astype(dtype))
    return CsnModel(cfg, store)


def mar_mix(top, bot):
    """Cross-branch averaging; idempotent as a map on stacked branch pairs."""
    m = ops.scale(ops.add(top, bot), 0.5)
    return m, m


def _conv(leafs, x: Node, name: str) -> Node:
    return ad.conv2d(x, leafs[f"{name}.weight"], leafs[f"{name}.bias"])


def _branch(leafs, x: Node, name: str, kind: str) -> Node:
    h = ad.relu(_conv(leafs, x, f"{name}.conv1"))
    if kind == "dense":
        h = ad.concat_channels([x, h])
    return _conv(leafs, h, f"{name}.conv2")


def stage_mapping(leafs, cfg: ModelConfig, top: Node, bot: Node, i: int, j: int):
    """One merge-and-run unit: branch transitions plus averaged cross skip."""
    base = f"csb.{i}.stage.{j}"
    (top_kind, _), (bot_kind, _) = _BRANCHES[cfg.variant]
    top_name, bot_name = _branch_names(cfg)
    ht = _branch(leafs, top, f"{base}.{top_name}", top_kind)
    hb = _branch(leafs, bot, f"{base}.{bot_name}", bot_kind)
    if cfg.residual_scale != 1.0:
        ht = ad.scale(ht, cfg.residual_scale)
        hb = ad.scale(hb, cfg.residual_scale)
    if cfg.variant == "SP":
        return ht, hb
    mix = ad.scale(ad.add(top, bot), 0.5)
    return ad.add(ht, mix), ad.add(hb, mix)


def csb_forward(leafs, cfg: ModelConfig, x: Node, i: int) -> Node:
    """Split, run m stage mappings, merge, 1x1 fuse, local residual add."""
    half = cfg.channels // 2
    if cfg.variant == "BASELINE":
        cur = x
        for j in range(cfg.m):
            cur = ad.relu(_conv(leafs, cur, f"csb.{i}.stage.{j}.conv"))
        merged = cur
    else:
        top, bot = ad.split_channels(x, [half, half])
        for j in range(cfg.m):
            top, bot = stage_mapping(leafs, cfg, top, bot, i, j)
        merged = ad.concat_channels([top, bot])
    return ad.add(_conv(leafs, merged, f"csb.{i}.merge"), x)


def model_forward(tape: Tape, leafs, cfg: ModelConfig, x: np.ndarray) -> Node:
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ValueError(
            f"input shape {getattr(x, 'shape', None)} does not match "
            f"{cfg.in_channels} input channels")
    xin = tape.leaf(x)

    # shallow feature extraction
    x0 = _conv(leafs, _conv(leafs, _conv(leafs, xin, "fen.conv1"), "fen.conv2"), "fen.conv3")

    # nonlinear mapping: chained channel-splitting blocks
    feats = [x0]
    cur = x0
    for i in range(cfg.n):
        cur = csb_forward(leafs, cfg, cur, i)
        feats.append(cur)

    # global feature fusion + global skip
    xr = ad.add(_conv(leafs, _conv(leafs, ad.concat_channels(feats), "gff.conv1"), "gff.conv2"), x0)

    # reconstruction head
    if cfg.scale == 4:
        up = ad.pixel_shuffle(_conv(leafs, xr, "upscale.conv1"), 2)
        up = ad.pixel_shuffle(_conv(leafs, up, "upscale.conv2"), 2)
    else:
        up = ad.pixel_shuffle(_conv(leafs, xr, "upscale.conv1"), cfg.scale)
    y = _conv(leafs, up, "recover")

    if cfg.esc_mode != "none":
        esc = ops.resize(x, x.shape[2] * cfg.scale, x.shape[3] * cfg.scale, cfg.esc_mode)
        y = ad.add(y, tape.leaf(esc))
    return y


class CsnModel:
    """A built network: config plus its parameter store."""

    def __init__(self, config: ModelConfig, params: ParamStore):
        self.config = config
        self.params = params

    @property
    def dtype(self):
        return self.params["fen.conv1.weight"].value.dtype

    def leaf_nodes(self, tape: Tape) -> dict:
        return {name: tape.leaf(p.value, param=p) for name, p in self.params.items()}

    def forward_on(self, tape: Tape, x: np.ndarray) -> Node:
        x = np.asarray(x, dtype=self.dtype)
        return model_forward(tape, self.leaf_nodes(tape), self.config, x)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Inference pass; builds no graph."""
        return self.forward_on(Tape(recording=False), x).value
