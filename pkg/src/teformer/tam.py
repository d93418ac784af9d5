"""Texture-aware module: enhancement, multi-scale texture branches, parallel block.

The enhancement step reprojects attention-updated level features back onto
the grid and concatenates them with the input.  Four branches then re-run the
quantization operator on the enhanced feature (fresh level statistics per
branch), convolve, and pool to relative scales 1/8..1, before dynamic
upsampling and a pointwise fusion bring everything back to the stage width.

The texture block combines this module with stripe attention and the channel
gate as three parallel residual branches, each pre-normalized and weighted by
a learnable scaler (initialized at 1 so ablations can zero a branch cleanly),
followed by a residual feed-forward tail.
"""

from __future__ import annotations

import logging

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import ChannelGateBlock, CrossStripeAttention, FeedForward
from .core import DynamicUpsampler, LayerNorm2d
from .errors import ConfigurationError
from .qco import QCOSpatial

logger = logging.getLogger(__name__)

TAM_SCALES = (8, 4, 2, 1)  # pooling factors of the four branches


class TextureEnhancer(nn.Module):
    """Concatenate the reprojected level features with the input: C -> C + extra."""

    def __init__(self, num_levels: int, qco_channels: int, extra_channels: int, use_attention: bool = True):
        super().__init__()
        self.qco = QCOSpatial(num_levels, qco_channels, extra_channels, use_attention=use_attention)
        self.extra_channels = extra_channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.cat((self.qco(x), x), dim=1)


class TextureBranch(nn.Module):
    """One scale branch: re-quantize, convolve, pool to the branch's relative scale."""

    def __init__(self, num_levels: int, qco_channels: int, out_channels: int, pool_factor: int):
        super().__init__()
        if pool_factor not in TAM_SCALES:
            raise ConfigurationError(f"branch pool factor must be in {TAM_SCALES}")
        self.pool_factor = pool_factor
        self.qco = QCOSpatial(num_levels, qco_channels, qco_channels)
        # replicate padding keeps constant fields constant through the conv
        self.conv = nn.Conv2d(qco_channels, out_channels, kernel_size=3, padding=1,
                              padding_mode="replicate")
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.act(self.conv(self.qco(x)))
        f = self.pool_factor
        if f == 1:
            return out
        h, w = out.shape[-2:]
        ph, pw = (-h) % f, (-w) % f
        if ph or pw:
            logger.warning("texture branch padding %dx%d map to pool by %d", h, w, f)
            out = F.pad(out, (0, pw, 0, ph), mode="replicate")
        return F.avg_pool2d(out, kernel_size=f, stride=f)


class TamFuse(nn.Module):
    """Upsample the coarse branches back to the base size, concatenate, project."""

    def __init__(self, branch_channels: int, out_channels: int, upsampler: str = "dynamic"):
        super().__init__()
        self.up = nn.ModuleDict(
            {f"x{f}": DynamicUpsampler(branch_channels, f, mode=upsampler) for f in TAM_SCALES if f > 1}
        )
        self.proj = nn.Conv2d(branch_channels * len(TAM_SCALES), out_channels, kernel_size=1)

    def forward(self, branches: list[torch.Tensor], base_hw: tuple[int, int]) -> torch.Tensor:
        h, w = base_hw
        restored = []
        for factor, branch in zip(TAM_SCALES, branches):
            up = self.up[f"x{factor}"](branch) if factor > 1 else branch
            if up.shape[-2] < h or up.shape[-1] < w or up.shape[-2] >= h + factor or up.shape[-1] >= w + factor:
                raise ConfigurationError(
                    f"branch at factor {factor} restores to {tuple(up.shape[-2:])}, base is {(h, w)}"
                )
            restored.append(up[..., :h, :w])
        return self.proj(torch.cat(restored, dim=1))


class TextureAwareModule(nn.Module):
    """Full texture pathway of one encoder block; ``mode`` selects the ablation variant.

    "full": enhancement + four multi-scale branches + fusion.
    "qco_only": bare quantization features (no level attention, no multi-scale),
    projected straight to the stage width.
    """

    def __init__(
        self,
        channels: int,
        num_levels: int,
        qco_channels: int,
        reproject_channels: int,
        branch_channels: int,
        mode: str = "full",
        branch_levels: tuple[int, ...] | None = None,
        upsampler: str = "dynamic",
    ):
        super().__init__()
        if mode not in ("full", "qco_only"):
            raise ConfigurationError(f"unsupported texture module mode '{mode}'")
        self.mode = mode
        if mode == "qco_only":
            self.qco = QCOSpatial(num_levels, qco_channels, qco_channels, use_attention=False)
            self.proj = nn.Conv2d(qco_channels, channels, kernel_size=1)
            return
        levels = branch_levels or (num_levels,) * len(TAM_SCALES)
        self.enhance = TextureEnhancer(num_levels, qco_channels, reproject_channels)
        self.branches = nn.ModuleList(
            TextureBranch(n, qco_channels, branch_channels, f) for f, n in zip(TAM_SCALES, levels)
        )
        self.fuse = TamFuse(branch_channels, channels, upsampler=upsampler)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.mode == "qco_only":
            return self.proj(self.qco(x))
        enhanced = self.enhance(x)
        branch_maps = [branch(enhanced) for branch in self.branches]
        return self.fuse(branch_maps, enhanced.shape[-2:])


class TextureBlock(nn.Module):
    """Parallel residual block: texture + stripe attention + channel gate, then FFN.

    With ``tam_mode="off"`` this is the plain dual-attention block used in the
    deeper stages; with all branch scalers zeroed it reduces exactly to the
    identity-plus-FFN path.
    """

    def __init__(
        self,
        channels: int,
        head_dim: int,
        stripe_width: int,
        ffn_ratio: float,
        tam_mode: str = "off",
        num_levels: int = 8,
        qco_channels: int = 24,
        reproject_channels: int = 16,
        branch_channels: int = 16,
        branch_levels: tuple[int, ...] | None = None,
        upsampler: str = "dynamic",
    ):
        super().__init__()
        self.tam_mode = tam_mode
        if tam_mode != "off":
            self.norm_tam = LayerNorm2d(channels)
            self.tam = TextureAwareModule(
                channels,
                num_levels,
                qco_channels,
                reproject_channels,
                branch_channels,
                mode=tam_mode,
                branch_levels=branch_levels,
                upsampler=upsampler,
            )
            self.scale_tam = nn.Parameter(torch.ones(1))
        self.norm_attn = LayerNorm2d(channels)
        self.attn = CrossStripeAttention(channels, head_dim=head_dim, stripe_width=stripe_width)
        self.scale_attn = nn.Parameter(torch.ones(1))
        self.norm_chan = LayerNorm2d(channels)
        self.chan = ChannelGateBlock(channels)
        self.scale_chan = nn.Parameter(torch.ones(1))
        self.norm_ffn = LayerNorm2d(channels)
        self.ffn = FeedForward(channels, ratio=ffn_ratio)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = x + self.scale_attn * self.attn(self.norm_attn(x))
        y = y + self.scale_chan * self.chan(self.norm_chan(x))
        if self.tam_mode != "off":
            y = y + self.scale_tam * self.tam(self.norm_tam(x))
        return y + self.ffn(self.norm_ffn(y))
