"""Complexity accounting: exact parameter totals and analytic multiply-accumulate counts.

Parameters are the exact tensor-size sum.  Mult-accs are derived from
per-layer formulas during a single dummy forward pass: convolutions count
k*k*(Cin/groups)*Cout*Hout*Wout, linear layers in*out*tokens, and attention
contributes its score and mixing matmuls from the recorded token geometry.
Elementwise work (norms, activations, sampling) is excluded, which is the
usual convention these totals are compared under.
"""

from __future__ import annotations

from collections import defaultdict

import torch
import torch.nn as nn

from .attention import CrossStripeAttention
from .decoder import DetailGate
from .qco import LevelAttention, QCOSpatial


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def _conv2d_macs(m: nn.Conv2d, inputs, output) -> int:
    kh, kw = m.kernel_size
    cin = m.in_channels // m.groups
    b, cout, h, w = output.shape
    return kh * kw * cin * cout * h * w * b


def _conv1d_macs(m: nn.Conv1d, inputs, output) -> int:
    (k,) = m.kernel_size
    cin = m.in_channels // m.groups
    b, cout, length = output.shape
    return k * cin * cout * length * b


def _linear_macs(m: nn.Linear, inputs, output) -> int:
    tokens = output.numel() // output.shape[-1]
    return m.in_features * m.out_features * tokens


def _stripe_attention_macs(m: CrossStripeAttention, inputs, output) -> int:
    total = 0
    for stripes, tokens, heads, head_dim in m.last_geometry:
        total += 2 * stripes * heads * tokens * tokens * head_dim  # scores + value mix
    return total


def _level_attention_macs(m: LevelAttention, inputs, output) -> int:
    b, n, c = inputs[0].shape
    per = b * n * n * c
    return 2 * per if m.apply_attention else per


def _qco_macs(m: QCOSpatial, inputs, output) -> int:
    b, cout, h, w = output.shape
    return b * h * w * m.num_levels * cout  # encoding-weighted level blend


def _gate_macs(m: DetailGate, inputs, output) -> int:
    x = inputs[0]
    return x.shape[0] * m.theta.out_channels * x.shape[-2] * x.shape[-1]


_HANDLERS = {
    nn.Conv2d: _conv2d_macs,
    nn.Conv1d: _conv1d_macs,
    nn.Linear: _linear_macs,
    CrossStripeAttention: _stripe_attention_macs,
    LevelAttention: _level_attention_macs,
    QCOSpatial: _qco_macs,
    DetailGate: _gate_macs,
}


def count_mult_accs(model: nn.Module, input_hw: tuple[int, int], batch: int = 1,
                    in_channels: int = 3) -> tuple[int, dict[str, int]]:
    """Total mult-accs of one forward pass, plus a per-top-level-module breakdown."""
    names = {id(m): name for name, m in model.named_modules()}
    totals: dict[str, int] = defaultdict(int)
    hooks = []

    def make_hook(fn):
        def hook(module, inputs, output):
            macs = fn(module, inputs, output)
            name = names.get(id(module), "")
            top = name.split(".")[0] if name else "model"
            totals[top] += macs

        return hook

    for module in model.modules():
        fn = _HANDLERS.get(type(module))
        if fn is not None:
            hooks.append(module.register_forward_hook(make_hook(fn)))
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            dummy = torch.zeros(batch, in_channels, *input_hw)
            model(dummy)
    finally:
        for h in hooks:
            h.remove()
        model.train(was_training)
    return sum(totals.values()), dict(totals)


def count_params_flops(model: nn.Module, input_hw: tuple[int, int]) -> tuple[int, int]:
    """(exact parameter count, analytic mult-accs for one image at input_hw)."""
    in_channels = getattr(getattr(model, "cfg", None), "in_channels", 3)
    macs, _ = count_mult_accs(model, input_hw, batch=1, in_channels=in_channels)
    return count_params(model), macs
