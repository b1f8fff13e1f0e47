import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskstereo.disparity import (
    DisparityDistribution,
    Estimate,
    estimate,
    estimate_branch_only,
    pick_best,
    read_inference_csv,
    score_candidates,
    select_mode,
    write_inference_csv,
)
from maskstereo.model import ModelParams, forward_pair
from maskstereo.patches import PaddedPlanes, SpectralFrame
from maskstereo.tensor import ShapeError


@pytest.fixture(scope="module")
def params():
    return ModelParams.initialise(seed=3)


@pytest.fixture(scope="module")
def planes():
    rng = np.random.default_rng(5)
    f = SpectralFrame(rng.integers(0, 256, (48, 80, 3), dtype=np.uint8), rng.integers(0, 256, (48, 80), dtype=np.uint8),
                      rng.integers(0, 2, (48, 80)), rng.integers(0, 2, (48, 80)))
    return PaddedPlanes.from_frame(f, 16)


class TestPickBest:
    def test_tie_prefers_small_magnitude(self):
        offs = np.arange(-3, 4)
        assert offs[pick_best(np.zeros(7), offs)] == 0
        s = np.array([5, 0, 0, 0, 0, 0, 5.0])
        assert offs[pick_best(s, offs)] == -3

    def test_minimise(self):
        offs = np.arange(-2, 3)
        assert offs[pick_best(np.array([3, 1, 2, 1, 3.0]), offs, maximize=False)] == -1

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(-20, 20), min_size=5, max_size=5))
    def test_monotone_transform_invariance(self, z):
        # integer logits keep the sigmoid free of rounding-induced ties
        z = np.asarray(z, dtype=np.float64)
        offs = np.arange(-2, 3)
        assert pick_best(z, offs) == pick_best(1 / (1 + np.exp(-z)), offs)


class TestScoreCandidates:
    def test_candidate_count_64(self, params):
        dist = score_candidates(np.zeros((36, 36, 4)), np.zeros((36, 100, 4)), params)
        assert len(dist.candidates) == 65
        assert dist.candidates[0] == -32 and dist.candidates[-1] == 32
        assert np.all((dist.p_corr >= 0) & (dist.p_corr <= 1))

    @pytest.mark.parametrize("d", [2, 8])
    def test_matches_per_candidate_forward(self, params, planes, d):
        x, y = 40, 24
        p_rgb = planes.patch("rgb", x, y)
        wide = planes.patch("lwir", x, y, 36 + d)
        dist = score_candidates(p_rgb, wide, params)
        for k, off in enumerate(dist.candidates):
            out = forward_pair(p_rgb, planes.patch("lwir", x - off, y), params)
            np.testing.assert_allclose(dist.margin_corr[k], out.y_corr[1] - out.y_corr[0], atol=1e-5)
            np.testing.assert_allclose(dist.margin_concat[k], out.y_concat[1] - out.y_concat[0], atol=1e-5)

    @pytest.mark.parametrize("width", [36, 37, 41])
    def test_bad_width(self, params, width):
        with pytest.raises(ShapeError):
            score_candidates(np.zeros((36, 36, 4)), np.zeros((36, width, 4)), params)


class TestEstimate:
    def test_combined_is_mean(self, params, planes):
        est = estimate(planes, 40, 24, params, 8)
        assert est.d_hat == (est.d_hat_corr + est.d_hat_concat) / 2
        assert -4 <= est.d_hat <= 4
        assert estimate_branch_only(planes, 40, 24, params, 8, "corr") == est.d_hat_corr
        assert estimate_branch_only(planes, 40, 24, params, 8, "concat") == est.d_hat_concat

    def test_anchor_shifts_range(self, params, planes):
        est = estimate(planes, 40, 24, params, 8, anchor=3)
        assert -1 <= est.d_hat_corr <= 7

    def test_arithmetic(self):
        est = Estimate(11.5, 10, 13)
        assert select_mode(est, "combined") == 11.5
        with pytest.raises(ValueError):
            select_mode(est, "sum")

    def test_distribution_agree(self):
        offs = np.arange(-2, 3)
        m = np.array([0, 0, 0, 5.0, 0])
        dist = DisparityDistribution(offs, m, m, m, m)
        assert dist.d_hat == 1


def test_inference_csv_round_trip(tmp_path):
    path = tmp_path / "out.csv"
    write_inference_csv(path, [(0, 5, 7, 11.5, 10, 13), (1, 2, 3, -4, None, -4)])
    rows = read_inference_csv(path)
    assert rows[0] == {"frame": "0", "y": "5", "x_rgb": "7", "d_hat": "11.5", "d_hat_corr": "10", "d_hat_concat": "13"}
    assert rows[1]["d_hat_corr"] == ""
