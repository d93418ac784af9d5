"""Full network assembly: encoder pyramid -> tri-branch decoder -> gated fusion -> head."""

from __future__ import annotations

import torch
import torch.nn as nn

from .config import ModelConfig
from .core import FeatureMap
from .decoder import DecoderBundle, TriBranchDecoder
from .encoder import Encoder, PyramidFeatures
from .fusion import EdgeGatedFusion, SegmentationHead, SegmentationOutput


class TEFormer(nn.Module):
    """Texture-aware encoder with an edge-guided decoder and gated fusion head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.decoder = TriBranchDecoder(cfg)
        self.fusion = EdgeGatedFusion(
            cfg.decoder_channels,
            use_gate=cfg.use_egffm,
            literal_edge_operand=cfg.literal_edge_operand,
            upsampler=cfg.upsampler,
        )
        self.head = SegmentationHead(cfg)

    def forward_features(self, images: torch.Tensor) -> tuple[PyramidFeatures, DecoderBundle, FeatureMap]:
        pyr = self.encoder(images)
        bundle = self.decoder(pyr)
        fused = self.fusion(bundle)
        return pyr, bundle, fused

    def forward(self, images: torch.Tensor) -> SegmentationOutput:
        pyr, _, fused = self.forward_features(images)
        return self.head(fused, pyr.e1)


def build_model(cfg: ModelConfig) -> TEFormer:
    """Construct a model with parameters drawn deterministically from cfg.seed."""
    torch.manual_seed(cfg.seed)
    return TEFormer(cfg)
