"""Shared tensor contracts: stride-tagged feature maps, the dynamic upsampler, alignment.

All pipeline-internal activations are (B, C, H, W) tensors tagged with a
stride (input-image pixels per feature cell).  Upsampling is content-aware
point sampling: a zero-initialized predictor emits per-output-pixel offsets,
bounded to +-0.25 source cells, applied to the bilinear sampling grid.  With
zero offsets the result is exactly bilinear interpolation, which is the
testable anchor for the whole operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError

VALID_STRIDES = (1, 4, 8, 16, 32)
UPSAMPLE_SCALES = (2, 4, 8)
OFFSET_RANGE = 0.25  # max offset magnitude, in source cells


@dataclass
class FeatureMap:
    """A (B, C, H, W) activation tensor at a known stride."""

    data: torch.Tensor
    stride: int

    def __post_init__(self):
        if self.data.dim() != 4:
            raise ConfigurationError(f"feature map must be 4-D, got {tuple(self.data.shape)}")
        if self.data.shape[-2] < 1 or self.data.shape[-1] < 1:
            raise ConfigurationError("feature map must have H, W >= 1")
        if self.stride not in VALID_STRIDES:
            raise ConfigurationError(f"stride must be one of {VALID_STRIDES}, got {self.stride}")

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def spatial(self) -> tuple[int, int]:
        return self.data.shape[-2], self.data.shape[-1]


class LayerNorm2d(nn.Module):
    """LayerNorm over the channel axis of (B, C, H, W) maps.

    Batch-size independent, so forward passes are deterministic regardless of
    how samples are grouped.
    """

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        mu = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, keepdim=True, unbiased=False)
        x = (x - mu) / torch.sqrt(var + self.eps)
        return x * self.weight[:, None, None] + self.bias[:, None, None]


def _base_grid(h_out: int, w_out: int, scale: int, dtype, device):
    """Source-pixel coordinates of output centers under half-pixel bilinear mapping."""
    ys = (torch.arange(h_out, dtype=dtype, device=device) + 0.5) / scale - 0.5
    xs = (torch.arange(w_out, dtype=dtype, device=device) + 0.5) / scale - 0.5
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return gy, gx


class DynamicUpsampler(nn.Module):
    """Content-aware x2/x4/x8 upsampler by offset-predicting point sampling.

    The offset head is zero-initialized, so a freshly built module reproduces
    plain bilinear interpolation exactly; ``mode="bilinear"`` drops the head
    entirely.  Offsets are tanh-bounded to +-0.25 source cells, and sampling
    uses border clamping, so a globally constant map stays constant for any
    offsets.
    """

    def __init__(self, channels: int, scale: int, mode: str = "dynamic"):
        super().__init__()
        if scale not in UPSAMPLE_SCALES:
            raise ConfigurationError(f"upsample scale must be one of {UPSAMPLE_SCALES}")
        if mode not in ("dynamic", "bilinear"):
            raise ConfigurationError("upsampler mode must be 'dynamic' or 'bilinear'")
        self.scale = scale
        self.mode = mode
        if mode == "dynamic":
            self.offset_head = nn.Conv2d(channels, 2 * scale * scale, kernel_size=1)
            nn.init.zeros_(self.offset_head.weight)
            nn.init.zeros_(self.offset_head.bias)

    def offsets(self, x: torch.Tensor) -> torch.Tensor | None:
        """(B, 2, sH, sW) bounded offsets in source-cell units, or None in bilinear mode."""
        if self.mode == "bilinear":
            return None
        raw = F.pixel_shuffle(self.offset_head(x), self.scale)
        return torch.tanh(raw) * OFFSET_RANGE

    def forward(self, x):
        if isinstance(x, FeatureMap):
            if x.stride % self.scale:
                raise ConfigurationError(
                    f"stride {x.stride} not divisible by upsample scale {self.scale}"
                )
            return FeatureMap(self.forward(x.data), x.stride // self.scale)
        b, _, h, w = x.shape
        h_out, w_out = h * self.scale, w * self.scale
        gy, gx = _base_grid(h_out, w_out, self.scale, x.dtype, x.device)
        gy = gy.expand(b, -1, -1)
        gx = gx.expand(b, -1, -1)
        off = self.offsets(x)
        if off is not None:
            gy = gy + off[:, 0]
            gx = gx + off[:, 1]
        # normalize to grid_sample's [-1, 1] convention (align_corners=False)
        nx = (2.0 * gx + 1.0) / w - 1.0
        ny = (2.0 * gy + 1.0) / h - 1.0
        grid = torch.stack((nx, ny), dim=-1)
        return F.grid_sample(x, grid, mode="bilinear", padding_mode="border", align_corners=False)


class Downsample(nn.Module):
    """Average-pool by an integer power-of-two factor."""

    def __init__(self, factor: int):
        super().__init__()
        if factor not in (2, 4, 8):
            raise ConfigurationError(f"downsample factor must be 2, 4 or 8, got {factor}")
        self.factor = factor
        self.pool = nn.AvgPool2d(kernel_size=factor, stride=factor)

    def forward(self, x):
        if isinstance(x, FeatureMap):
            return FeatureMap(self.pool(x.data), x.stride * self.factor)
        return self.pool(x)


class Align(nn.Module):
    """Harmonize a feature map to a target stride and channel count.

    Pure composition of average pooling (down), the dynamic upsampler (up)
    and a 1x1 projection.  An identity request (same stride, same channels,
    projection disabled) returns the input unchanged.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        in_stride: int,
        out_stride: int,
        upsampler: str = "dynamic",
        project: bool = True,
    ):
        super().__init__()
        if in_stride not in VALID_STRIDES or out_stride not in VALID_STRIDES:
            raise ConfigurationError(f"strides must be in {VALID_STRIDES}")
        self.in_stride = in_stride
        self.out_stride = out_stride
        self.resample = None
        if out_stride > in_stride:
            factor = out_stride // in_stride
            if out_stride % in_stride or factor not in (2, 4, 8):
                raise ConfigurationError(f"stride {in_stride} -> {out_stride} unreachable by pooling")
            self.resample = Downsample(factor)
        elif out_stride < in_stride:
            factor = in_stride // out_stride
            if in_stride % out_stride or factor not in UPSAMPLE_SCALES:
                raise ConfigurationError(f"stride {in_stride} -> {out_stride} unreachable by upsampling")
            self.resample = DynamicUpsampler(in_channels, factor, mode=upsampler)
        self.proj = None
        if project and in_channels != out_channels:
            self.proj = nn.Conv2d(in_channels, out_channels, kernel_size=1)
        elif not project and in_channels != out_channels:
            raise ConfigurationError("channel change requested with projection disabled")

    def forward(self, x: FeatureMap) -> FeatureMap:
        if x.stride != self.in_stride:
            raise ConfigurationError(f"expected stride {self.in_stride}, got {x.stride}")
        if self.resample is None and self.proj is None:
            return x
        out = x
        if self.resample is not None:
            out = self.resample(out)
        if self.proj is not None:
            out = FeatureMap(self.proj(out.data), out.stride)
        return out
