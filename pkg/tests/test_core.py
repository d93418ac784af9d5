import numpy as np
import pytest
import torch

from oracles import bilinear_upsample_ref
from teformer.core import Align, DynamicUpsampler, FeatureMap
from teformer.errors import ConfigurationError


def test_feature_map_validation():
    fm = FeatureMap(torch.zeros(1, 3, 4, 4), 4)
    assert fm.channels == 3 and fm.spatial == (4, 4)
    with pytest.raises(ConfigurationError):
        FeatureMap(torch.zeros(3, 4, 4), 4)
    with pytest.raises(ConfigurationError):
        FeatureMap(torch.zeros(1, 3, 4, 4), 3)


def test_dys_constant_map_stays_constant():
    up = DynamicUpsampler(2, 2)
    x = torch.full((1, 2, 5, 5), 3.0)
    out = up(x)
    assert out.shape == (1, 2, 10, 10)
    assert (out - 3.0).abs().max() < 1e-6


def test_dys_constant_under_arbitrary_offsets():
    # constancy must survive any learned offsets, not just the zero init
    up = DynamicUpsampler(3, 2)
    torch.nn.init.normal_(up.offset_head.weight, std=2.0)
    torch.nn.init.normal_(up.offset_head.bias, std=2.0)
    x = torch.full((2, 3, 6, 6), -1.25)
    assert (up(x) + 1.25).abs().max() < 1e-6


def test_dys_zero_offsets_match_scalar_bilinear_oracle():
    up = DynamicUpsampler(1, 2).double()
    x = torch.tensor([[1.0, 2.0], [3.0, 4.0]], dtype=torch.float64).reshape(1, 1, 2, 2)
    ref = bilinear_upsample_ref(x[0].numpy(), 2)
    out = up(x)[0].detach().numpy()
    assert np.abs(out - ref).max() < 1e-6


@pytest.mark.parametrize("scale", [2, 4, 8])
def test_dys_zero_offsets_random_inputs(scale):
    up = DynamicUpsampler(3, scale).double()
    x = torch.randn(1, 3, 5, 7, dtype=torch.float64)
    ref = bilinear_upsample_ref(x[0].numpy(), scale)
    out = up(x)[0].detach().numpy()
    assert np.abs(out - ref).max() < 1e-6


def test_dys_bilinear_mode_has_no_parameters():
    up = DynamicUpsampler(4, 2, mode="bilinear")
    assert sum(p.numel() for p in up.parameters()) == 0
    x = torch.randn(1, 4, 3, 3, dtype=torch.float64)
    ref = bilinear_upsample_ref(x[0].numpy(), 2)
    assert np.abs(up(x.double())[0].numpy() - ref).max() < 1e-6


def test_dys_shapes_and_stride_arithmetic():
    up = DynamicUpsampler(6, 4)
    fm = FeatureMap(torch.randn(1, 6, 8, 8), 16)
    out = up(fm)
    assert out.data.shape == (1, 6, 32, 32)
    assert out.stride == 4
    with pytest.raises(ConfigurationError):
        up(FeatureMap(torch.randn(1, 6, 8, 8), 1))  # stride 1/4 is not an integer


def test_dys_rejects_bad_scale():
    with pytest.raises(ConfigurationError):
        DynamicUpsampler(4, 3)


def test_align_down_then_project():
    align = Align(8, 16, in_stride=4, out_stride=8)
    fm = FeatureMap(torch.randn(1, 8, 16, 16), 4)
    out = align(fm)
    assert out.stride == 8 and out.data.shape == (1, 16, 8, 8)


def test_align_up_by_four():
    align = Align(8, 4, in_stride=32, out_stride=8)
    fm = FeatureMap(torch.randn(1, 8, 2, 2), 32)
    out = align(fm)
    assert out.stride == 8 and out.data.shape == (1, 4, 8, 8)


def test_align_identity_returns_same_object():
    align = Align(8, 8, in_stride=8, out_stride=8, project=False)
    fm = FeatureMap(torch.randn(1, 8, 4, 4), 8)
    assert align(fm) is fm


def test_align_unreachable_stride():
    with pytest.raises(ConfigurationError):
        Align(8, 8, in_stride=32, out_stride=1)


def test_core_determinism():
    x = torch.randn(1, 4, 6, 6)
    torch.manual_seed(7)
    a = DynamicUpsampler(4, 2)
    torch.manual_seed(7)
    b = DynamicUpsampler(4, 2)
    torch.nn.init.normal_(a.offset_head.weight, std=0.1)
    with torch.no_grad():
        b.offset_head.weight.copy_(a.offset_head.weight)
    assert torch.equal(a(x), b(x))
