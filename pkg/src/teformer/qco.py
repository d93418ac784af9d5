"""Quantization-and-counting operator: similarity statistics over soft texture levels.

Pipeline: per-pixel cosine similarity against the global mean feature, soft
triangular quantization onto N uniform levels in [-1, 1], per-level counting,
a shared MLP encoding of (level, count) pairs, attention over the level graph,
and reprojection of the updated level features back onto the pixel grid
through the soft-assignment matrix.

Shape conventions: similarity fields are (B, 1, H, W); the encoding matrix is
(B, H*W, N) with rows summing to 1; level features are (B, N, C).
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from .errors import ConfigurationError

_NORM_FLOOR = 1e-12


def similarity_map(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Cosine similarity of each pixel feature against the spatial mean feature.

    Zero-norm pixels map to similarity 0 (zero-padded borders must not poison
    the statistics).  Returns the (B, 1, H, W) field plus a per-sample flag
    marking degenerate (all-zero) inputs.
    """
    b, c, h, w = x.shape
    anchor = x.mean(dim=(2, 3), keepdim=True)  # (B, C, 1, 1)
    dot = (x * anchor).sum(dim=1, keepdim=True)
    norms = x.pow(2).sum(dim=1, keepdim=True).sqrt()
    anchor_norm = anchor.pow(2).sum(dim=1, keepdim=True).sqrt()
    denom = (norms * anchor_norm).clamp_min(_NORM_FLOOR)
    sim = dot / denom
    dead = (norms * anchor_norm) < _NORM_FLOOR
    sim = torch.where(dead, torch.zeros_like(sim), sim)
    degenerate = norms.flatten(1).amax(dim=1) <= _NORM_FLOOR
    return sim.clamp(-1.0, 1.0), degenerate


def quantization_levels(num_levels: int, *, dtype=None, device=None) -> torch.Tensor:
    """N levels uniformly spaced over [-1, 1]."""
    if num_levels < 2:
        raise ConfigurationError("need at least 2 quantization levels")
    return torch.linspace(-1.0, 1.0, num_levels, dtype=dtype, device=device)


def soft_quantize(sim: torch.Tensor, num_levels: int) -> torch.Tensor:
    """Triangular soft assignment of a similarity field onto N uniform levels.

    Kernel support equals one level spacing, so every row of the returned
    (B, H*W, N) encoding sums to exactly 1 for similarities in [-1, 1].
    """
    levels = quantization_levels(num_levels, dtype=sim.dtype, device=sim.device)
    spacing = 2.0 / (num_levels - 1)
    flat = sim.flatten(1)  # (B, H*W)
    dist = (flat.unsqueeze(-1) - levels).abs()
    return (1.0 - dist / spacing).clamp_min(0.0)


def count_levels(encoding: torch.Tensor) -> torch.Tensor:
    """Per-level occupancy, normalized by pixel count: (B, H*W, N) -> (B, N)."""
    return encoding.mean(dim=1)


def spatial_reproject(level_features: torch.Tensor, encoding: torch.Tensor, hw: tuple[int, int]) -> torch.Tensor:
    """Blend level features back onto the grid: each pixel is its encoding-weighted mix.

    level_features: (B, N, C); encoding: (B, H*W, N) -> (B, C, H, W).
    """
    if level_features.shape[1] != encoding.shape[2]:
        raise ConfigurationError(
            f"level axis mismatch: features have {level_features.shape[1]} levels, "
            f"encoding has {encoding.shape[2]}"
        )
    h, w = hw
    if encoding.shape[1] != h * w:
        raise ConfigurationError("encoding rows do not match the requested spatial size")
    mixed = torch.bmm(encoding, level_features)  # (B, H*W, C)
    return mixed.transpose(1, 2).reshape(encoding.shape[0], -1, h, w)


class CountingEncoder(nn.Module):
    """Shared two-layer MLP turning each (level, count) pair into a feature row."""

    def __init__(self, channels: int):
        super().__init__()
        self.fc1 = nn.Linear(2, channels)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(channels, channels)

    def forward(self, levels: torch.Tensor, counts: torch.Tensor) -> torch.Tensor:
        # levels: (N,), counts: (B, N) -> (B, N, C)
        pairs = torch.stack((levels.expand_as(counts), counts), dim=-1)
        return self.fc2(self.act(self.fc1(pairs)))


class LevelAttention(nn.Module):
    """Attention over the level graph: adjacency from projected level features.

    Projects the counting feature with a pointwise conv along the level axis,
    forms a row-stochastic adjacency D = softmax(A~ A~^T / sqrt(C')), and
    returns both D and the updated level features D A~.  ``apply_attention``
    is the switch used by the texture-module ablation: when off, the
    projection A~ passes through unmixed (parameters are identical either
    way, so comparisons isolate the mechanism, not capacity).
    """

    def __init__(self, channels: int, apply_attention: bool = True):
        super().__init__()
        self.proj = nn.Conv1d(channels, channels, kernel_size=1)
        self.apply_attention = apply_attention
        self.scale = 1.0 / math.sqrt(channels)

    def forward(self, features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        # features: (B, N, C) -> adjacency (B, N, N), updated (B, N, C)
        proj = self.proj(features.transpose(1, 2)).transpose(1, 2)
        logits = torch.bmm(proj, proj.transpose(1, 2)) * self.scale
        adjacency = torch.softmax(logits, dim=-1)
        if not self.apply_attention:
            return adjacency, proj
        return adjacency, torch.bmm(adjacency, proj)


class QCOSpatial(nn.Module):
    """Full operator: statistics -> level features -> spatial texture map.

    Input (B, C, H, W) -> output (B, out_channels, H, W) at the same
    resolution.  Parameters are independent of the input channel count; only
    the similarity statistics see the input features.
    """

    def __init__(self, num_levels: int, channels: int, out_channels: int, use_attention: bool = True):
        super().__init__()
        if num_levels < 2:
            raise ConfigurationError("need at least 2 quantization levels")
        self.num_levels = num_levels
        self.encoder = CountingEncoder(channels)
        self.attention = LevelAttention(channels, apply_attention=use_attention)
        self.level_proj = nn.Conv1d(channels, out_channels, kernel_size=1)
        self.last_degenerate: torch.Tensor | None = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, _, h, w = x.shape
        sim, degenerate = similarity_map(x)
        self.last_degenerate = degenerate
        encoding = soft_quantize(sim, self.num_levels)
        counts = count_levels(encoding)
        levels = quantization_levels(self.num_levels, dtype=x.dtype, device=x.device)
        counting_feature = self.encoder(levels, counts)
        _, updated = self.attention(counting_feature)
        projected = self.level_proj(updated.transpose(1, 2)).transpose(1, 2)
        return spatial_reproject(projected, encoding, (h, w))
