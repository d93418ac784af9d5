"""Stripe self-attention, convolutional channel gating, and the block feed-forward.

These are compact reconstructions kept behind small interfaces so they stay
swappable: attention mixes tokens inside horizontal/vertical stripes of a
fixed width, and the channel gate squeezes global statistics through a
bottleneck into a per-channel sigmoid weight.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def _pad_to_multiple(x: torch.Tensor, multiple: int) -> tuple[torch.Tensor, int, int]:
    h, w = x.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        x = F.pad(x, (0, pw, 0, ph), mode="replicate")
    return x, h, w


class CrossStripeAttention(nn.Module):
    """Self-attention restricted to horizontal and vertical stripes.

    Channels are split in half: the first half attends within row bands of
    height ``stripe_width`` spanning the full width, the second half within
    column bands of width ``stripe_width`` spanning the full height.  The two
    halves are concatenated and projected.  Sizes not divisible by the stripe
    width are replicate-padded and cropped back.
    """

    def __init__(self, channels: int, head_dim: int = 16, stripe_width: int = 2):
        super().__init__()
        if channels % 2:
            raise ValueError("stripe attention needs an even channel count")
        self.channels = channels
        self.stripe_width = stripe_width
        half = channels // 2
        self.num_heads = max(1, half // head_dim)
        if half % self.num_heads:
            raise ValueError(f"half width {half} not divisible into {self.num_heads} heads")
        self.qkv = nn.Conv2d(channels, 3 * channels, kernel_size=1)
        self.proj = nn.Conv2d(channels, channels, kernel_size=1)
        self.record_attention = False
        self.last_attention: list[torch.Tensor] = []
        self.last_geometry: list[tuple[int, int, int, int]] = []

    def _attend(self, q, k, v):
        # q, k, v: (S, heads, T, dh) with S = batch * stripes
        scale = 1.0 / math.sqrt(q.shape[-1])
        attn = torch.softmax(torch.matmul(q, k.transpose(-2, -1)) * scale, dim=-1)
        if self.record_attention:
            self.last_attention.append(attn)
        return torch.matmul(attn, v)

    def _stripe_tokens(self, t: torch.Tensor, horizontal: bool):
        # t: (B, c, H, W) -> (B * stripes, heads, tokens, dh)
        b, c, h, w = t.shape
        sw = self.stripe_width
        if horizontal:
            t = t.reshape(b, c, h // sw, sw, w)
            t = t.permute(0, 2, 1, 3, 4).reshape(b * (h // sw), c, sw * w)
        else:
            t = t.reshape(b, c, h, w // sw, sw)
            t = t.permute(0, 3, 1, 2, 4).reshape(b * (w // sw), c, h * sw)
        s, _, tokens = t.shape
        dh = c // self.num_heads
        return t.reshape(s, self.num_heads, dh, tokens).transpose(-2, -1)

    def _stripe_merge(self, t: torch.Tensor, b: int, h: int, w: int, horizontal: bool):
        sw = self.stripe_width
        s, heads, tokens, dh = t.shape
        c = heads * dh
        t = t.transpose(-2, -1).reshape(s, c, tokens)
        if horizontal:
            t = t.reshape(b, h // sw, c, sw, w).permute(0, 2, 1, 3, 4)
        else:
            t = t.reshape(b, w // sw, c, h, sw).permute(0, 2, 3, 1, 4)
        return t.reshape(b, c, h, w)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.record_attention:
            self.last_attention = []
        self.last_geometry = []
        x, h0, w0 = _pad_to_multiple(x, self.stripe_width)
        b, _, h, w = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=1)
        half = self.channels // 2
        outs = []
        for horizontal in (True, False):
            sl = slice(0, half) if horizontal else slice(half, None)
            qs = self._stripe_tokens(q[:, sl], horizontal)
            ks = self._stripe_tokens(k[:, sl], horizontal)
            vs = self._stripe_tokens(v[:, sl], horizontal)
            self.last_geometry.append((qs.shape[0], qs.shape[2], qs.shape[1], qs.shape[3]))
            mixed = self._attend(qs, ks, vs)
            outs.append(self._stripe_merge(mixed, b, h, w, horizontal))
        out = self.proj(torch.cat(outs, dim=1))
        return out[..., :h0, :w0]


class ChannelGateBlock(nn.Module):
    """Convolutional channel attention: bottlenecked global gate plus a depthwise residual.

    The sigmoid gate lies strictly in (0, 1), so the gated map is an
    elementwise contraction of the input before the residual conv.
    """

    def __init__(self, channels: int, reduction: int = 4):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.squeeze = nn.Conv2d(channels, hidden, kernel_size=1)
        self.act = nn.GELU()
        self.excite = nn.Conv2d(hidden, channels, kernel_size=1)
        self.refine = nn.Conv2d(channels, channels, kernel_size=3, padding=1, groups=channels)

    def gate(self, x: torch.Tensor) -> torch.Tensor:
        pooled = x.mean(dim=(2, 3), keepdim=True)
        return torch.sigmoid(self.excite(self.act(self.squeeze(pooled))))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        gated = x * self.gate(x)
        return gated + self.refine(gated)


class FeedForward(nn.Module):
    """Pointwise-conv MLP used as the residual tail of every encoder block."""

    def __init__(self, channels: int, ratio: float = 2.0):
        super().__init__()
        hidden = max(1, round(channels * ratio))
        self.fc1 = nn.Conv2d(channels, hidden, kernel_size=1)
        self.act = nn.GELU()
        self.fc2 = nn.Conv2d(hidden, channels, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))
