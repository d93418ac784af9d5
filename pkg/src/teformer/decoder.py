"""Edge-guided tri-branch decoder: edge sum, gated detail stream, pooled/dilated context.

The edge branch folds the pyramid into a stride-16 map by projecting each
level, downsampling the running sum x2 between additions, and lifting the
deepest level x2 into the final sum.  The detail branch refines the shallow
stream with deeper semantics through a per-pixel sigmoid gate.  The context
branch aggregates pooled long-range statistics and dilated large-receptive-
field responses over the deepest level, with a residual shortcut.

All convolutions zero-pad; pooling excludes padded cells, so constant inputs
stay constant away from borders (the basis of the interior-constancy oracle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .config import ModelConfig
from .core import Downsample, DynamicUpsampler, FeatureMap
from .encoder import PyramidFeatures
from .errors import ConfigurationError


@dataclass
class DecoderBundle:
    """Branch outputs: edge at stride 16, detail pair at stride 8, context at stride 32."""

    p_e: FeatureMap
    p_d1: FeatureMap
    p_d2: FeatureMap
    p_c: FeatureMap

    def __post_init__(self):
        expected = {"p_e": 16, "p_d1": 8, "p_d2": 8, "p_c": 32}
        for name, stride in expected.items():
            fm = getattr(self, name)
            if fm.stride != stride:
                raise ConfigurationError(f"{name} expected stride {stride}, got {fm.stride}")
        channels = {fm.channels for fm in (self.p_e, self.p_d1, self.p_d2, self.p_c)}
        if len(channels) != 1:
            raise ConfigurationError(f"bundle channels differ: {sorted(channels)}")


class EdgeBranch(nn.Module):
    """Downsample-and-sum pyramid folding, terminating at stride 16."""

    def __init__(self, stage_channels, out_channels: int, upsampler: str = "dynamic"):
        super().__init__()
        self.projs = nn.ModuleList(nn.Conv2d(c, out_channels, kernel_size=1) for c in stage_channels)
        self.pool = Downsample(2)
        self.up4 = DynamicUpsampler(out_channels, 2, mode=upsampler)

    def forward(self, pyr: PyramidFeatures) -> FeatureMap:
        e1, e2, e3, e4 = (fm.data for fm in pyr.maps)
        r = self.pool.pool(self.projs[0](e1))  # stride 8
        r = r + self.projs[1](e2)
        r = self.pool.pool(r)  # stride 16
        r = r + self.projs[2](e3)
        r = r + self.up4(self.projs[3](e4))
        return FeatureMap(r, 16)


class DetailGate(nn.Module):
    """Per-pixel convex blend of two streams, gated by their embedded agreement.

    gate = sigmoid(<theta(x), phi(y)> / sqrt(c)); output = gate*y + (1-gate)*x,
    so equal inputs pass through unchanged for any gate value.
    """

    def __init__(self, channels: int, embed_channels: int):
        super().__init__()
        self.theta = nn.Conv2d(channels, embed_channels, kernel_size=1)
        self.phi = nn.Conv2d(channels, embed_channels, kernel_size=1)
        self.scale = 1.0 / math.sqrt(embed_channels)

    def gate_logits(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        return (self.theta(x) * self.phi(y)).sum(dim=1, keepdim=True) * self.scale

    def forward(self, x: torch.Tensor, y: torch.Tensor, gate_logit_override: float | None = None):
        if x.shape != y.shape:
            raise ConfigurationError(f"gate operands differ in shape: {tuple(x.shape)} vs {tuple(y.shape)}")
        if gate_logit_override is None:
            logits = self.gate_logits(x, y)
        else:
            logits = torch.full_like(x[:, :1], gate_logit_override)
        gate = torch.sigmoid(logits)
        return gate * y + (1.0 - gate) * x


class DetailBranch(nn.Module):
    """Shallow detail stream refined by deeper semantics at stride 8."""

    def __init__(self, stage_channels, out_channels: int, embed_channels: int,
                 use_gate: bool = True, upsampler: str = "dynamic"):
        super().__init__()
        c1, c2, c3 = stage_channels[:3]
        self.proj1 = nn.Conv2d(c1, out_channels, kernel_size=1)
        self.pool = Downsample(2)
        self.proj2 = nn.Conv2d(c2, out_channels, kernel_size=1)
        self.proj3 = nn.Conv2d(c3, out_channels, kernel_size=1)
        self.up3 = DynamicUpsampler(out_channels, 2, mode=upsampler)
        self.use_gate = use_gate
        if use_gate:
            self.gate = DetailGate(out_channels, embed_channels)
        else:
            # ablation stand-in: plain conv of the summed streams, same width
            self.merge = nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1)
        self.out_conv = nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1)

    def forward(self, pyr: PyramidFeatures, gate_logit_override: float | None = None):
        e1, e2, e3 = (fm.data for fm in pyr.maps[:3])
        shallow = self.pool.pool(self.proj1(e1)) + self.proj2(e2)  # stride 8
        deep = self.up3(self.proj3(e3))  # stride 16 -> 8
        if self.use_gate:
            p_d1 = self.gate(shallow, deep, gate_logit_override=gate_logit_override)
        else:
            p_d1 = self.merge(shallow + deep)
        p_d2 = self.out_conv(p_d1)
        return FeatureMap(p_d1, 8), FeatureMap(p_d2, 8)


class ContextAggregator(nn.Module):
    """Parallel pooled/dilated context over the deepest level, residual shortcut.

    Branches ordered fine to coarse (identity, pool5, dilated-2, pool9,
    dilated-4, global); each is aggregated with its coarser neighbor by a 3x3
    conv, and the concatenated aggregates are compressed and added to a
    pointwise shortcut.
    """

    def __init__(self, in_channels: int, branch_channels: int, out_channels: int,
                 pool_sizes=(5, 9), dilations=(2, 4)):
        super().__init__()
        b = branch_channels
        k5, k9 = pool_sizes
        d2, d4 = dilations
        self.identity = nn.Conv2d(in_channels, b, kernel_size=1)
        self.pool5 = nn.Sequential(
            nn.AvgPool2d(k5, stride=1, padding=k5 // 2, count_include_pad=False),
            nn.Conv2d(in_channels, b, kernel_size=1),
        )
        self.dil2 = nn.Sequential(
            nn.Conv2d(in_channels, b, kernel_size=3, padding=d2, dilation=d2), nn.GELU()
        )
        self.pool9 = nn.Sequential(
            nn.AvgPool2d(k9, stride=1, padding=k9 // 2, count_include_pad=False),
            nn.Conv2d(in_channels, b, kernel_size=1),
        )
        self.dil4 = nn.Sequential(
            nn.Conv2d(in_channels, b, kernel_size=3, padding=d4, dilation=d4), nn.GELU()
        )
        self.global_proj = nn.Conv2d(in_channels, b, kernel_size=1)
        self.aggregate = nn.ModuleList(
            nn.Conv2d(b, b, kernel_size=3, padding=1) for _ in range(5)
        )
        self.compress = nn.Conv2d(5 * b, out_channels, kernel_size=1)
        self.shortcut = nn.Conv2d(in_channels, out_channels, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        global_branch = self.global_proj(x.mean(dim=(2, 3), keepdim=True)).expand(-1, -1, h, w)
        branches = [
            self.identity(x),
            self.pool5(x),
            self.dil2(x),
            self.pool9(x),
            self.dil4(x),
            global_branch,
        ]
        aggregated = [conv(branches[i] + branches[i + 1]) for i, conv in enumerate(self.aggregate)]
        return self.compress(torch.cat(aggregated, dim=1)) + self.shortcut(x)


class TriBranchDecoder(nn.Module):
    """Assemble P_e, P_d1, P_d2, P_c from the encoder pyramid."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.decoder_channels
        self.edge = EdgeBranch(cfg.stage_channels, d, upsampler=cfg.upsampler)
        self.detail = DetailBranch(
            cfg.stage_channels, d, cfg.dam_embed_channels,
            use_gate=cfg.use_dam, upsampler=cfg.upsampler,
        )
        if cfg.use_pasppm:
            self.context = ContextAggregator(
                cfg.stage_channels[3], cfg.pasppm_branch_channels, d,
                pool_sizes=cfg.pasppm_pool_sizes, dilations=cfg.pasppm_dilations,
            )
        else:
            self.context = nn.Conv2d(cfg.stage_channels[3], d, kernel_size=3, padding=1)

    def forward(self, pyr: PyramidFeatures, gate_logit_override: float | None = None) -> DecoderBundle:
        p_e = self.edge(pyr)
        p_d1, p_d2 = self.detail(pyr, gate_logit_override=gate_logit_override)
        p_c = FeatureMap(self.context(pyr.e4.data), 32)
        return DecoderBundle(p_e, p_d1, p_d2, p_c)
