import numpy as np
import torch

from teformer.attention import ChannelGateBlock, CrossStripeAttention, FeedForward


class TestCrossStripeAttention:
    def test_rows_sum_to_one(self):
        attn = CrossStripeAttention(16, head_dim=8, stripe_width=2)
        attn.record_attention = True
        attn(torch.randn(2, 16, 6, 8))
        assert attn.last_attention
        for a in attn.last_attention:
            assert (a.sum(-1) - 1.0).abs().max() < 1e-5

    def test_shape_preserved(self):
        attn = CrossStripeAttention(24, head_dim=8, stripe_width=2)
        out = attn(torch.randn(1, 24, 10, 14))
        assert out.shape == (1, 24, 10, 14)

    def test_odd_sizes_padded_and_cropped(self):
        attn = CrossStripeAttention(8, head_dim=4, stripe_width=2)
        out = attn(torch.randn(1, 8, 5, 7))
        assert out.shape == (1, 8, 5, 7)

    def test_single_token_equals_value_projection(self):
        # on a 1x1 map every (replicated) token is identical, so attention is
        # an identity mix and the block reduces to proj(value(x))
        torch.manual_seed(2)
        attn = CrossStripeAttention(8, head_dim=4, stripe_width=2).double()
        x = torch.randn(1, 8, 1, 1, dtype=torch.float64)
        out = attn(x)[0, :, 0, 0].numpy()

        w_qkv = attn.qkv.weight.detach().numpy()[:, :, 0, 0]
        b_qkv = attn.qkv.bias.detach().numpy()
        v = w_qkv[16:24] @ x[0, :, 0, 0].numpy() + b_qkv[16:24]
        w_o = attn.proj.weight.detach().numpy()[:, :, 0, 0]
        expected = w_o @ v + attn.proj.bias.detach().numpy()
        assert np.abs(out - expected).max() < 1e-10

    def test_geometry_recorded_for_complexity(self):
        attn = CrossStripeAttention(16, head_dim=8, stripe_width=2)
        attn(torch.randn(1, 16, 4, 6))
        assert len(attn.last_geometry) == 2
        (h_stripes, h_tokens, _, _), (v_stripes, v_tokens, _, _) = attn.last_geometry
        assert h_stripes == 2 and h_tokens == 12  # two row bands of 2x6
        assert v_stripes == 3 and v_tokens == 8  # three column bands of 4x2


class TestChannelGateBlock:
    def test_gate_strictly_inside_unit_interval(self):
        block = ChannelGateBlock(12)
        gate = block.gate(torch.randn(3, 12, 5, 5))
        assert gate.min() > 0 and gate.max() < 1

    def test_gated_part_is_a_contraction(self):
        block = ChannelGateBlock(8)
        x = torch.randn(2, 8, 6, 6)
        gated = x * block.gate(x)
        assert (gated.abs() <= x.abs() + 1e-7).all()

    def test_constant_channels_match_scalar_bottleneck(self):
        torch.manual_seed(4)
        block = ChannelGateBlock(8).double()
        means = torch.tensor([0.5, -1.0, 2.0, 0.0, 1.5, -0.25, 3.0, -2.0], dtype=torch.float64)
        x = means.reshape(1, 8, 1, 1).expand(1, 8, 6, 6).contiguous()
        gate = block.gate(x)[0, :, 0, 0].numpy()

        w1 = block.squeeze.weight.detach().numpy()[:, :, 0, 0]
        b1 = block.squeeze.bias.detach().numpy()
        w2 = block.excite.weight.detach().numpy()[:, :, 0, 0]
        b2 = block.excite.bias.detach().numpy()
        hidden = w1 @ means.numpy() + b1
        from scipy.special import erf

        hidden = hidden * 0.5 * (1.0 + erf(hidden / np.sqrt(2.0)))  # exact GELU
        logits = w2 @ hidden + b2
        expected = 1.0 / (1.0 + np.exp(-logits))
        assert np.abs(gate - expected).max() < 1e-10

    def test_shape_preserved(self):
        block = ChannelGateBlock(6)
        assert block(torch.randn(1, 6, 7, 9)).shape == (1, 6, 7, 9)


def test_feedforward_shape_and_hidden_width():
    ffn = FeedForward(10, ratio=2.0)
    assert ffn.fc1.out_channels == 20
    assert ffn(torch.randn(2, 10, 3, 3)).shape == (2, 10, 3, 3)
