import math

import numpy as np
import pytest
import torch

from oracles import rel_error, softmax_ref, triangular_row
from teformer.errors import ConfigurationError
from teformer.qco import (
    CountingEncoder,
    LevelAttention,
    QCOSpatial,
    count_levels,
    quantization_levels,
    similarity_map,
    soft_quantize,
    spatial_reproject,
)


class TestSimilarity:
    def test_constant_map_is_self_similar(self):
        x = torch.full((1, 4, 3, 3), 2.5)
        s, degenerate = similarity_map(x)
        assert (s - 1.0).abs().max() < 1e-6
        assert not degenerate.any()

    def test_orthogonal_pixel_scores_zero(self):
        # mean feature is (1, 0); the first pixel (0, 1) is orthogonal to it
        x = torch.tensor([[[[0.0, 2.0]], [[1.0, -1.0]]]])  # (1, 2, 1, 2)
        s, _ = similarity_map(x)
        assert abs(s[0, 0, 0, 0]) < 1e-6

    def test_antiparallel_pixel_scores_minus_one(self):
        x = torch.tensor([[[[-1.0, 2.0, 2.0]], [[0.0, 0.0, 0.0]]]])  # mean (1, 0)
        s, _ = similarity_map(x)
        assert abs(s[0, 0, 0, 0] + 1.0) < 1e-6

    def test_all_zero_input_flags_degenerate(self):
        s, degenerate = similarity_map(torch.zeros(2, 3, 4, 4))
        assert s.abs().max() == 0
        assert degenerate.all()


class TestSoftQuantize:
    def test_on_level_row(self):
        s = torch.zeros(1, 1, 1, 1)
        b = soft_quantize(s, 3)[0, 0]
        assert torch.allclose(b, torch.tensor([0.0, 1.0, 0.0]))

    def test_half_level_matches_scalar_kernel(self):
        s = torch.full((1, 1, 1, 1), 0.5)
        b = soft_quantize(s, 3)[0, 0].tolist()
        assert b == pytest.approx(triangular_row(0.5, 3), abs=1e-7)
        assert b == pytest.approx([0.0, 0.5, 0.5], abs=1e-7)

    def test_boundary_level(self):
        s = torch.full((1, 1, 1, 1), -1.0)
        b = soft_quantize(s, 3)[0, 0]
        assert torch.allclose(b, torch.tensor([1.0, 0.0, 0.0]))

    def test_rejects_single_level(self):
        with pytest.raises(ConfigurationError):
            soft_quantize(torch.zeros(1, 1, 1, 1), 1)

    @pytest.mark.parametrize("n", [2, 3, 5, 8])
    def test_rows_sum_to_one(self, n):
        s = torch.rand(4, 1, 6, 6) * 2 - 1
        b = soft_quantize(s, n)
        assert (b.sum(-1) - 1.0).abs().max() < 1e-5

    def test_random_rows_match_scalar_kernel(self):
        rng = np.random.default_rng(3)
        values = rng.uniform(-1, 1, size=16)
        s = torch.tensor(values, dtype=torch.float64).reshape(1, 1, 4, 4)
        b = soft_quantize(s, 5)[0]
        for i, v in enumerate(values):
            assert b[i].tolist() == pytest.approx(triangular_row(float(v), 5), abs=1e-9)


class TestCounts:
    def test_hand_summed_counts(self):
        s = torch.full((1, 1, 2, 2), 0.5)
        counts = count_levels(soft_quantize(s, 3))
        assert counts[0].tolist() == pytest.approx([0.0, 0.5, 0.5], abs=1e-7)

    def test_counts_conserved(self):
        s = torch.rand(3, 1, 5, 5) * 2 - 1
        counts = count_levels(soft_quantize(s, 6))
        assert (counts.sum(-1) - 1.0).abs().max() < 1e-5

    def test_counts_permutation_invariant(self):
        s = torch.rand(1, 1, 4, 4) * 2 - 1
        perm = torch.randperm(16)
        s_perm = s.flatten()[perm].reshape(1, 1, 4, 4)
        a = count_levels(soft_quantize(s, 5))
        b = count_levels(soft_quantize(s_perm, 5))
        assert (a - b).abs().max() < 1e-6


class TestCountingEncoder:
    def test_output_shape(self):
        enc = CountingEncoder(12)
        out = enc(quantization_levels(7), torch.rand(2, 7))
        assert out.shape == (2, 7, 12)

    def test_identical_pairs_share_rows(self):
        enc = CountingEncoder(8)
        levels = torch.tensor([0.25, 0.25, -0.5])
        counts = torch.tensor([[0.1, 0.1, 0.8]])
        out = enc(levels, counts)
        assert torch.equal(out[0, 0], out[0, 1])

    def test_deterministic_under_seed(self):
        torch.manual_seed(5)
        a = CountingEncoder(8)(quantization_levels(4), torch.full((1, 4), 0.25))
        torch.manual_seed(5)
        b = CountingEncoder(8)(quantization_levels(4), torch.full((1, 4), 0.25))
        assert torch.equal(a, b)


class TestLevelAttention:
    def test_single_level_passes_through(self):
        att = LevelAttention(4)
        features = torch.randn(2, 1, 4)
        adjacency, updated = att(features)
        proj = att.proj(features.transpose(1, 2)).transpose(1, 2)
        assert torch.allclose(adjacency, torch.ones(2, 1, 1))
        assert torch.allclose(updated, proj, atol=1e-6)

    def test_identity_projection_hand_case(self):
        att = LevelAttention(2)
        with torch.no_grad():
            att.proj.weight.copy_(torch.eye(2).unsqueeze(-1))
            att.proj.bias.zero_()
        features = torch.eye(2).unsqueeze(0)
        adjacency, updated = att(features)
        expected_row = softmax_ref([1.0 / math.sqrt(2.0), 0.0])
        assert adjacency[0, 0].tolist() == pytest.approx(expected_row, abs=1e-4)
        assert adjacency[0, 0].tolist() == pytest.approx([0.6698, 0.3302], abs=1e-4)
        assert updated[0, 0].tolist() == pytest.approx([0.6698, 0.3302], abs=1e-4)

    def test_rows_sum_to_one(self):
        att = LevelAttention(6)
        adjacency, _ = att(torch.randn(3, 5, 6))
        assert (adjacency.sum(-1) - 1.0).abs().max() < 1e-5


class TestSpatialReproject:
    def test_one_hot_rows_select_levels(self):
        levels = torch.tensor([[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]])
        encoding = torch.tensor([[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]])
        out = spatial_reproject(levels, encoding, (2, 2))
        assert out[0, :, 0, 0].tolist() == [3.0, 4.0]
        assert out[0, :, 1, 0].tolist() == [1.0, 2.0]

    def test_identical_level_rows_give_constant_map(self):
        v = torch.tensor([2.0, -1.0, 0.5])
        levels = v.repeat(4, 1).unsqueeze(0)
        s = torch.rand(1, 1, 3, 3) * 2 - 1
        encoding = soft_quantize(s, 4)
        out = spatial_reproject(levels, encoding, (3, 3))
        assert (out - v.reshape(1, 3, 1, 1)).abs().max() < 1e-6

    def test_two_pixel_two_level_hand_case(self):
        levels = torch.tensor([[[1.0, 10.0], [2.0, 20.0]]])  # (1, 2, 2)
        encoding = torch.tensor([[[0.25, 0.75], [0.6, 0.4]]])  # (1, 2, 2)
        out = spatial_reproject(levels, encoding, (1, 2))
        # scalar dot products per pixel
        assert out[0, :, 0, 0].tolist() == pytest.approx([0.25 * 1 + 0.75 * 2, 0.25 * 10 + 0.75 * 20])
        assert out[0, :, 0, 1].tolist() == pytest.approx([0.6 * 1 + 0.4 * 2, 0.6 * 10 + 0.4 * 20])

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ConfigurationError):
            spatial_reproject(torch.zeros(1, 3, 2), torch.zeros(1, 4, 2), (2, 2))


def _kink_margin(x: torch.Tensor, num_levels: int) -> float:
    s, _ = similarity_map(x)
    levels = quantization_levels(num_levels, dtype=x.dtype)
    return float((s.flatten().unsqueeze(-1) - levels).abs().min())


def _off_kink_input(num_levels: int, margin: float) -> torch.Tensor:
    for seed in range(200):
        torch.manual_seed(seed)
        x = torch.randn(1, 8, 4, 4, dtype=torch.float64)
        if _kink_margin(x, num_levels) > margin:
            return x
    raise AssertionError("no off-kink input found")


class TestQCOSpatial:
    def test_output_spatial_shape(self):
        qco = QCOSpatial(5, 8, 6)
        out = qco(torch.randn(2, 10, 7, 9))
        assert out.shape == (2, 6, 7, 9)

    def test_permutation_equivariance(self):
        torch.manual_seed(1)
        qco = QCOSpatial(4, 8, 5).double()
        x = torch.randn(1, 6, 4, 4, dtype=torch.float64)
        perm = torch.randperm(16)
        x_perm = x.flatten(2)[:, :, perm].reshape(1, 6, 4, 4)
        out = qco(x).flatten(2)[:, :, perm]
        out_perm = qco(x_perm).flatten(2)
        assert (out - out_perm).abs().max() < 1e-5

    def test_degenerate_flag_propagates(self):
        qco = QCOSpatial(4, 8, 5)
        qco(torch.zeros(1, 6, 4, 4))
        assert qco.last_degenerate.all()

    def test_gradient_matches_central_differences(self):
        num_levels = 4
        spacing = 2.0 / (num_levels - 1)
        x = _off_kink_input(num_levels, margin=5e-3 * spacing)
        torch.manual_seed(11)
        qco = QCOSpatial(num_levels, 8, 6).double()

        x_req = x.clone().requires_grad_(True)
        qco(x_req).sum().backward()
        grad = x_req.grad

        rng = np.random.default_rng(0)
        flat = x.flatten()
        step = 1e-4
        probes = rng.choice(flat.numel(), size=12, replace=False)
        with torch.no_grad():
            for idx in probes:
                for sign, store in ((1, "plus"), (-1, "minus")):
                    bumped = flat.clone()
                    bumped[idx] += sign * step
                    val = qco(bumped.reshape_as(x)).sum().item()
                    if sign == 1:
                        plus = val
                    else:
                        minus = val
                fd = (plus - minus) / (2 * step)
                assert rel_error(fd, float(grad.flatten()[idx])) < 1e-3
