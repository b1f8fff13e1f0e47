import numpy as np
import pytest

from maskstereo.baseline import planes_for_window, ssd_disparity
from maskstereo.patches import SpectralFrame
from maskstereo.tensor import ShapeError


def frame_with_shift(shift, h=64, w=120, seed=0):
    """LWIR is the RGB grey image moved ``shift`` columns left, so d = +shift."""
    rng = np.random.default_rng(seed)
    grey = rng.integers(0, 256, (h, w + abs(shift) * 2)).astype(np.uint8)
    s = abs(shift)
    rgb_grey = grey[:, s:s + w]
    lwir = grey[:, s + shift:s + shift + w]
    rgb = np.repeat(rgb_grey[..., None], 3, axis=2)
    zeros = np.zeros((h, w), np.uint8)
    return SpectralFrame(rgb, lwir, zeros, zeros)


@pytest.mark.parametrize("shift", [5, -7, 0])
def test_exact_copy_recovers_shift(shift):
    f = frame_with_shift(shift)
    planes = planes_for_window(f, (36, 36), 64)
    assert ssd_disparity(planes, 60, 30, (36, 36), 64) == shift


def test_constant_images_tie_to_zero():
    f = SpectralFrame(np.full((50, 80, 3), 100, np.uint8), np.full((50, 80), 40, np.uint8),
                      np.zeros((50, 80)), np.zeros((50, 80)))
    planes = planes_for_window(f, (36, 36), 16)
    assert ssd_disparity(planes, 40, 25, (36, 36), 16) == 0


def test_range():
    rng = np.random.default_rng(1)
    f = SpectralFrame(rng.integers(0, 256, (50, 90, 3), dtype=np.uint8), rng.integers(0, 256, (50, 90), dtype=np.uint8),
                      np.zeros((50, 90)), np.zeros((50, 90)))
    planes = planes_for_window(f, (20, 40), 8)
    for x in (0, 45, 89):
        assert -4 <= ssd_disparity(planes, x, 10, (20, 40), 8) <= 4


def test_bruteforce_cost():
    f = frame_with_shift(3, seed=4)
    rng = np.random.default_rng(2)
    f.lwir[:] = np.clip(f.lwir + rng.integers(-30, 31, f.lwir.shape), 0, 255)
    planes = planes_for_window(f, (10, 12), 10)
    m = planes.margin
    x, y = 55, 20
    grey = planes.rgb4[y + m - 5:y + m + 5, x + m - 6:x + m + 6, :3].astype(np.float64).mean(axis=2)
    costs = {}
    for d in range(-5, 6):
        lw = planes.lwir4[y + m - 5:y + m + 5, x - d + m - 6:x - d + m + 6, 0]
        costs[d] = ((grey - lw) ** 2).sum()
    best = min(costs, key=lambda d: (costs[d], abs(d), d))
    assert ssd_disparity(planes, x, y, (10, 12), 10) == best


def test_odd_dmax():
    planes = planes_for_window(frame_with_shift(0), (36, 36), 64)
    with pytest.raises(ShapeError):
        ssd_disparity(planes, 10, 10, (36, 36), 7)
