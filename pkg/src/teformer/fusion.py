"""Edge-gated fusion of detail and context streams, and the classification head.

A single-channel sigmoid score derived from the edge map arbitrates the two
streams: where the score is high the detail stream dominates, elsewhere the
context stream fills target interiors.  The fused stride-4 feature is merged
with the shallowest encoder level and classified per pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .config import ModelConfig
from .core import DynamicUpsampler, FeatureMap
from .decoder import DecoderBundle
from .errors import ConfigurationError


@dataclass
class SegmentationOutput:
    """Full-resolution logits plus derived per-pixel probabilities and labels."""

    logits: FeatureMap
    probabilities: torch.Tensor
    class_map: torch.Tensor


class EdgeGate(nn.Module):
    """Single-channel sigmoid score from the edge map, lifted to stride 8."""

    def __init__(self, channels: int, upsampler: str = "dynamic"):
        super().__init__()
        self.up = DynamicUpsampler(channels, 2, mode=upsampler)
        self.score = nn.Conv2d(channels, 1, kernel_size=1)

    def logits(self, p_e: FeatureMap) -> torch.Tensor:
        if p_e.stride != 16:
            raise ConfigurationError(f"edge gate expects a stride-16 map, got {p_e.stride}")
        return self.score(self.up(p_e.data))

    def forward(self, p_e: FeatureMap) -> torch.Tensor:
        return torch.sigmoid(self.logits(p_e))


class EdgeGatedFusion(nn.Module):
    """Blend gated detail and context streams into a stride-4 feature.

    ``literal_edge_operand`` swaps the low-gate slot from the context stream
    to the upsampled edge map (the alternative printed form); ``use_gate``
    off drops the arbitration entirely (ablation stand-in: plain sum of the
    two convolved streams).
    """

    def __init__(self, channels: int, use_gate: bool = True,
                 literal_edge_operand: bool = False, upsampler: str = "dynamic"):
        super().__init__()
        self.use_gate = use_gate
        self.literal_edge_operand = literal_edge_operand
        if use_gate:
            self.gate = EdgeGate(channels, upsampler=upsampler)
        self.conv_detail = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        self.conv_context = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        self.up_context = DynamicUpsampler(channels, 4, mode=upsampler)
        self.up_edge = DynamicUpsampler(channels, 2, mode=upsampler) if literal_edge_operand else None
        self.up_out = DynamicUpsampler(channels, 2, mode=upsampler)

    def forward(self, bundle: DecoderBundle, gate_logit_override: float | None = None) -> FeatureMap:
        detail = bundle.p_d2.data
        if self.literal_edge_operand:
            low_gate_stream = self.up_edge(bundle.p_e.data)
        else:
            low_gate_stream = self.up_context(bundle.p_c.data)  # stride 32 -> 8
        if low_gate_stream.shape[-2:] != detail.shape[-2:]:
            raise ConfigurationError(
                f"fusion operands disagree: {tuple(low_gate_stream.shape[-2:])} vs {tuple(detail.shape[-2:])}"
            )
        if self.use_gate:
            if gate_logit_override is None:
                score = self.gate(bundle.p_e)
            else:
                score = torch.sigmoid(torch.full_like(detail[:, :1], gate_logit_override))
            fused = self.conv_detail(score * detail) + self.conv_context((1.0 - score) * low_gate_stream)
        else:
            fused = self.conv_detail(detail) + self.conv_context(low_gate_stream)
        return FeatureMap(self.up_out(fused), 4)


class SegmentationHead(nn.Module):
    """Merge the fused feature with E1 and classify per pixel at full resolution."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.decoder_channels
        self.proj_e1 = nn.Conv2d(cfg.stage_channels[0], d, kernel_size=1)
        self.merge = nn.Conv2d(2 * d, d, kernel_size=1)
        self.mlp = nn.Sequential(
            nn.Conv2d(d, d, kernel_size=1),
            nn.GELU(),
            nn.Conv2d(d, cfg.num_classes, kernel_size=1),
        )
        self.up = DynamicUpsampler(cfg.num_classes, 4, mode=cfg.upsampler)

    def forward(self, fused: FeatureMap, e1: FeatureMap) -> SegmentationOutput:
        if fused.stride != 4 or e1.stride != 4:
            raise ConfigurationError("head expects stride-4 inputs")
        g = self.merge(torch.cat((fused.data, self.proj_e1(e1.data)), dim=1))
        logits = self.up(self.mlp(g))
        probabilities = torch.softmax(logits, dim=1)
        class_map = logits.argmax(dim=1)
        return SegmentationOutput(FeatureMap(logits, 1), probabilities, class_map)
