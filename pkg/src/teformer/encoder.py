"""Hierarchical four-stage encoder emitting a stride-4/8/16/32 feature pyramid.

Stages 1-2 use texture-aware blocks, stages 3-4 the plain dual-attention
variant (stripe attention + channel gate + FFN).  A two-conv stem downsamples
x4 into stage 1; a strided conv merges patches x2 between stages.  Parameter
names follow the ``stage{i}.block{j}.<branch>.<param>`` schema used by the
checkpoint format.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .config import ModelConfig
from .core import FeatureMap, LayerNorm2d
from .errors import ConfigurationError
from .tam import TextureBlock

STAGE_STRIDES = (4, 8, 16, 32)


@dataclass
class PyramidFeatures:
    """Encoder outputs E1..E4 at strides 4, 8, 16, 32."""

    e1: FeatureMap
    e2: FeatureMap
    e3: FeatureMap
    e4: FeatureMap

    def __post_init__(self):
        for fm, stride in zip(self.maps, STAGE_STRIDES):
            if fm.stride != stride:
                raise ConfigurationError(f"pyramid level expected stride {stride}, got {fm.stride}")

    @property
    def maps(self) -> tuple[FeatureMap, ...]:
        return (self.e1, self.e2, self.e3, self.e4)


class PatchStem(nn.Module):
    """x4 downsampling stem: two strided 3x3 convs with channel norms."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=2, padding=1)
        self.norm1 = LayerNorm2d(out_channels)
        self.act = nn.GELU()
        self.conv2 = nn.Conv2d(out_channels, out_channels, kernel_size=3, stride=2, padding=1)
        self.norm2 = LayerNorm2d(out_channels)

    def forward(self, x):
        x = self.act(self.norm1(self.conv1(x)))
        return self.norm2(self.conv2(x))


class PatchMerge(nn.Module):
    """x2 downsampling between stages."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=2, padding=1)
        self.norm = LayerNorm2d(out_channels)

    def forward(self, x):
        return self.norm(self.conv(x))


class EncoderStage(nn.Module):
    def __init__(self, down: nn.Module, blocks: list[nn.Module]):
        super().__init__()
        self.down = down
        self.blocks = nn.ModuleDict({f"block{j}": blk for j, blk in enumerate(blocks)})

    def forward(self, x):
        x = self.down(x)
        for j in range(len(self.blocks)):
            x = self.blocks[f"block{j}"](x)
        return x


def _make_block(cfg: ModelConfig, channels: int, textured: bool) -> TextureBlock:
    tam_mode = cfg.tam_mode if textured else "off"
    return TextureBlock(
        channels,
        head_dim=cfg.head_dim,
        stripe_width=cfg.stripe_width,
        ffn_ratio=cfg.ffn_ratio,
        tam_mode=tam_mode,
        num_levels=cfg.qco_levels,
        qco_channels=cfg.qco_channels,
        reproject_channels=cfg.tam_reproject_channels,
        branch_channels=cfg.tam_branch_channels,
        branch_levels=cfg.tam_branch_levels,
        upsampler=cfg.upsampler,
    )


class Encoder(nn.Module):
    """Four feature-extraction stages; texture blocks in stages 1-2 only."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        chans = cfg.stage_channels
        stages = {}
        prev = cfg.in_channels
        for i, (c, depth) in enumerate(zip(chans, cfg.stage_depths), start=1):
            down = PatchStem(prev, c) if i == 1 else PatchMerge(prev, c)
            blocks = [_make_block(cfg, c, textured=i <= 2) for _ in range(depth)]
            stages[f"stage{i}"] = EncoderStage(down, blocks)
            prev = c
        self.stages = nn.ModuleDict(stages)

    def forward(self, image: torch.Tensor | FeatureMap) -> PyramidFeatures:
        if isinstance(image, FeatureMap):
            if image.stride != 1:
                raise ConfigurationError("encoder expects a stride-1 input")
            image = image.data
        h, w = image.shape[-2:]
        if h % 32 or w % 32:
            raise ConfigurationError(f"input size {h}x{w} must be divisible by 32 (pad tiles first)")
        feats = []
        x = image
        for i, stride in enumerate(STAGE_STRIDES, start=1):
            x = self.stages[f"stage{i}"](x)
            feats.append(FeatureMap(x, stride))
        return PyramidFeatures(*feats)
