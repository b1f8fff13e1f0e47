"""Window sum-of-squared-differences matcher between RGB luminance and LWIR."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .disparity import pick_best
from .patches import DEFAULT_DMAX, PaddedPlanes, SpectralFrame, pad_margin
from .tensor import ShapeError, UsageError


def planes_for_window(frame: SpectralFrame, window: tuple[int, int], d_max: int = DEFAULT_DMAX) -> PaddedPlanes:
    """Padded planes with enough margin for ``window`` at every candidate offset."""
    h, w = window
    m = max(pad_margin(d_max), w // 2 + d_max // 2 + 1, h // 2 + 1)
    return PaddedPlanes.from_frame(frame, margin=m)


def ssd_disparity(planes: PaddedPlanes, x: int, y: int, window: tuple[int, int] = (36, 36),
                  d_max: int = DEFAULT_DMAX) -> int:
    """Disparity in ``-d_max/2 .. d_max/2`` minimising the windowed SSD.

    RGB luminance is the mean of the three colour channels; masks are ignored.
    Windows span rows ``y - h//2 .. y - h//2 + h - 1`` (columns likewise).
    """
    h, w = window
    if d_max < 2 or d_max % 2:
        raise ShapeError(f"d_max must be even and >= 2, got {d_max}")
    half = d_max // 2
    m = planes.margin
    r0, c0 = y + m - h // 2, x + m - w // 2
    lo = c0 - half  # leftmost LWIR window start (offset +half)
    hp, wp = planes.rgb4.shape[:2]
    if r0 < 0 or r0 + h > hp or c0 < 0 or c0 + w > wp or lo < 0 or c0 + half + w > wp:
        raise UsageError(f"window {window} at ({x}, {y}) with d_max {d_max} exceeds the padding")
    gray = planes.rgb4[r0:r0 + h, c0:c0 + w, :3].astype(np.float64).mean(axis=2)
    strip = planes.lwir4[r0:r0 + h, lo:c0 + half + w, 0].astype(np.float64)
    wins = sliding_window_view(strip, (h, w))[0]  # (d_max + 1, h, w); index j starts at lo + j
    cost = ((wins - gray) ** 2).sum(axis=(1, 2))
    # window j is centred d_max/2 - j columns left of x, i.e. disparity half - j
    offsets = half - np.arange(d_max + 1)
    return int(offsets[pick_best(cost, offsets, maximize=False)])
