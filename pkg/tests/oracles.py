"""Independent oracles used by the test suite.

Everything here is deliberately written against the contracts, not the
implementation: scalar loops, hand arithmetic, and config-level counting that
never touches the package's tensor code paths.
"""

from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# scalar bilinear interpolation (half-pixel centers, edge clamped)
# ---------------------------------------------------------------------------


def bilinear_upsample_ref(x: np.ndarray, scale: int) -> np.ndarray:
    """Brute-force per-pixel bilinear upsampling of a (C, H, W) array."""
    c, h, w = x.shape
    out = np.zeros((c, h * scale, w * scale), dtype=np.float64)
    for oy in range(h * scale):
        sy = (oy + 0.5) / scale - 0.5
        y0 = math.floor(sy)
        wy = sy - y0
        y0c = min(max(y0, 0), h - 1)
        y1c = min(max(y0 + 1, 0), h - 1)
        for ox in range(w * scale):
            sx = (ox + 0.5) / scale - 0.5
            x0 = math.floor(sx)
            wx = sx - x0
            x0c = min(max(x0, 0), w - 1)
            x1c = min(max(x0 + 1, 0), w - 1)
            for ch in range(c):
                top = (1 - wx) * x[ch, y0c, x0c] + wx * x[ch, y0c, x1c]
                bot = (1 - wx) * x[ch, y1c, x0c] + wx * x[ch, y1c, x1c]
                out[ch, oy, ox] = (1 - wy) * top + wy * bot
    return out


# ---------------------------------------------------------------------------
# scalar triangular quantization kernel
# ---------------------------------------------------------------------------


def triangular_row(s: float, num_levels: int) -> list[float]:
    """Soft-assignment row for one similarity value."""
    spacing = 2.0 / (num_levels - 1)
    levels = [-1.0 + 2.0 * n / (num_levels - 1) for n in range(num_levels)]
    return [max(0.0, 1.0 - abs(s - level) / spacing) for level in levels]


def softmax_ref(row: list[float]) -> list[float]:
    m = max(row)
    exps = [math.exp(v - m) for v in row]
    z = sum(exps)
    return [e / z for e in exps]


# ---------------------------------------------------------------------------
# brute-force per-pixel segmentation scorer
# ---------------------------------------------------------------------------


def brute_metrics(pred: np.ndarray, gt: np.ndarray, num_classes: int, ignore_index: int = 255):
    """Score maps pixel by pixel with python loops; returns (iou, f1, miou, mf1, pa)."""
    tp = [0] * num_classes
    fp = [0] * num_classes
    fn = [0] * num_classes
    correct = 0
    total = 0
    for p, g in zip(pred.reshape(-1).tolist(), gt.reshape(-1).tolist()):
        if g == ignore_index:
            continue
        total += 1
        if p == g:
            tp[g] += 1
            correct += 1
        else:
            fp[p] += 1
            fn[g] += 1
    iou, f1 = {}, {}
    for c in range(num_classes):
        if tp[c] + fp[c] + fn[c] == 0:
            continue
        iou[c] = tp[c] / (tp[c] + fp[c] + fn[c])
        f1[c] = 2 * tp[c] / (2 * tp[c] + fp[c] + fn[c])
    miou = sum(iou.values()) / len(iou)
    mf1 = sum(f1.values()) / len(f1)
    return iou, f1, miou, mf1, correct / total


# ---------------------------------------------------------------------------
# analytic parameter counting from the configuration alone
# ---------------------------------------------------------------------------


def conv2d_p(cin, cout, k, groups=1, bias=True):
    return k * k * (cin // groups) * cout + (cout if bias else 0)


def conv1d_p(cin, cout, bias=True):
    return cin * cout + (cout if bias else 0)


def linear_p(i, o, bias=True):
    return i * o + (o if bias else 0)


def norm_p(c):
    return 2 * c


def dys_p(channels, scale, mode="dynamic"):
    if mode == "bilinear":
        return 0
    return conv2d_p(channels, 2 * scale * scale, 1)


def qco_spatial_p(ca, out_channels):
    encoder = linear_p(2, ca) + linear_p(ca, ca)
    attention = conv1d_p(ca, ca)
    proj = conv1d_p(ca, out_channels)
    return encoder + attention + proj


def texture_module_p(cfg, channels):
    ca = cfg.qco_channels
    if cfg.tam_mode == "qco_only":
        return qco_spatial_p(ca, ca) + conv2d_p(ca, channels, 1)
    b = cfg.tam_branch_channels
    enhancer = qco_spatial_p(ca, cfg.tam_reproject_channels)
    branches = 4 * (qco_spatial_p(ca, ca) + conv2d_p(ca, b, 3))
    fuse = sum(dys_p(b, s, cfg.upsampler) for s in (8, 4, 2)) + conv2d_p(4 * b, channels, 1)
    return enhancer + branches + fuse


def attention_p(channels):
    return conv2d_p(channels, 3 * channels, 1) + conv2d_p(channels, channels, 1)


def channel_gate_p(channels, reduction=4):
    hidden = max(1, channels // reduction)
    return (
        conv2d_p(channels, hidden, 1)
        + conv2d_p(hidden, channels, 1)
        + conv2d_p(channels, channels, 3, groups=channels)
    )


def ffn_p(channels, ratio):
    hidden = max(1, round(channels * ratio))
    return conv2d_p(channels, hidden, 1) + conv2d_p(hidden, channels, 1)


def block_p(cfg, channels, textured):
    total = attention_p(channels) + channel_gate_p(channels) + ffn_p(channels, cfg.ffn_ratio)
    total += 2 * norm_p(channels) + norm_p(channels)  # attn + chan + ffn norms
    total += 2  # branch scalers
    if textured and cfg.tam_mode != "off":
        total += texture_module_p(cfg, channels) + norm_p(channels) + 1
    return total


def stage_p(cfg, index):
    chans = cfg.stage_channels
    c = chans[index]
    prev = cfg.in_channels if index == 0 else chans[index - 1]
    if index == 0:
        down = conv2d_p(prev, c, 3) + norm_p(c) + conv2d_p(c, c, 3) + norm_p(c)
    else:
        down = conv2d_p(prev, c, 3) + norm_p(c)
    blocks = cfg.stage_depths[index] * block_p(cfg, c, textured=index < 2)
    return down + blocks


def encoder_p(cfg):
    return sum(stage_p(cfg, i) for i in range(4))


def edge_branch_p(cfg):
    d = cfg.decoder_channels
    return sum(conv2d_p(c, d, 1) for c in cfg.stage_channels) + dys_p(d, 2, cfg.upsampler)


def detail_branch_p(cfg):
    d = cfg.decoder_channels
    total = sum(conv2d_p(c, d, 1) for c in cfg.stage_channels[:3]) + dys_p(d, 2, cfg.upsampler)
    if cfg.use_dam:
        total += 2 * conv2d_p(d, cfg.dam_embed_channels, 1)
    else:
        total += conv2d_p(d, d, 3)
    total += conv2d_p(d, d, 3)  # detail refinement to the second output
    return total


def context_branch_p(cfg):
    c4 = cfg.stage_channels[3]
    d = cfg.decoder_channels
    if not cfg.use_pasppm:
        return conv2d_p(c4, d, 3)
    b = cfg.pasppm_branch_channels
    branches = 4 * conv2d_p(c4, b, 1) + 2 * conv2d_p(c4, b, 3)
    aggregate = 5 * conv2d_p(b, b, 3)
    return branches + aggregate + conv2d_p(5 * b, d, 1) + conv2d_p(c4, d, 1)


def fusion_p(cfg):
    d = cfg.decoder_channels
    total = 2 * conv2d_p(d, d, 3) + dys_p(d, 4, cfg.upsampler) + dys_p(d, 2, cfg.upsampler)
    if cfg.use_egffm:
        total += dys_p(d, 2, cfg.upsampler) + conv2d_p(d, 1, 1)
    if cfg.literal_edge_operand:
        total += dys_p(d, 2, cfg.upsampler)
    return total


def head_p(cfg):
    d = cfg.decoder_channels
    k = cfg.num_classes
    return (
        conv2d_p(cfg.stage_channels[0], d, 1)
        + conv2d_p(2 * d, d, 1)
        + conv2d_p(d, d, 1)
        + conv2d_p(d, k, 1)
        + dys_p(k, 4, cfg.upsampler)
    )


def model_params_ref(cfg) -> int:
    """Layer-by-layer parameter total computed from the config arithmetic alone."""
    return (
        encoder_p(cfg)
        + edge_branch_p(cfg)
        + detail_branch_p(cfg)
        + context_branch_p(cfg)
        + fusion_p(cfg)
        + head_p(cfg)
    )


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def central_difference(f, x0: float, step: float = 1e-4) -> float:
    return (f(x0 + step) - f(x0 - step)) / (2.0 * step)


def rel_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)
