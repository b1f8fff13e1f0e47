"""Four-channel frames, patch extraction and augmentation.

A frame holds an 8-bit RGB image, a single-plane 8-bit LWIR image and one
binary person mask per modality. ``compose_4ch`` turns it into two
``H x W x 4`` float images (mask in channel 3, LWIR replicated into 0-2).

Patch columns for a 36-wide patch centred at ``x`` are ``x-18 .. x+17``; rows
likewise. A widened patch of width ``36 + D`` spans ``x-18-D/2 .. x+17+D/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import PATCH_SIZE
from .tensor import ShapeError, UsageError

HALF = PATCH_SIZE // 2
DEFAULT_DMAX = 64


@dataclass(frozen=True)
class GroundTruthPoint:
    """One annotated correspondence; disparity is ``x_rgb - x_lwir``."""

    frame: int
    y: int
    x_rgb: int
    x_lwir: int

    @property
    def disparity(self) -> int:
        return self.x_rgb - self.x_lwir


@dataclass
class SpectralFrame:
    rgb: np.ndarray  # H x W x 3 uint8
    lwir: np.ndarray  # H x W uint8
    rgb_mask: np.ndarray  # H x W, {0, 1}
    lwir_mask: np.ndarray  # H x W, {0, 1}
    frame_id: int = 0

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb)
        self.lwir = np.asarray(self.lwir)
        if self.lwir.ndim == 3 and self.lwir.shape[2] == 1:
            self.lwir = self.lwir[:, :, 0]
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ShapeError(f"rgb plane must be H x W x 3, got {self.rgb.shape}")
        hw = self.rgb.shape[:2]
        for name in ("lwir", "rgb_mask", "lwir_mask"):
            plane = np.asarray(getattr(self, name))
            if plane.shape != hw:
                raise ShapeError(f"{name} plane is {plane.shape}, expected {hw} to match rgb")
        self.rgb_mask = (np.asarray(self.rgb_mask) != 0).astype(np.uint8)
        self.lwir_mask = (np.asarray(self.lwir_mask) != 0).astype(np.uint8)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rgb.shape[:2]


@dataclass
class TrainingSample:
    p_rgb: np.ndarray  # 36 x 36 x 4
    p_lwir: np.ndarray  # 36 x 36 x 4
    label: int  # 1 = same, 0 = not same


def compose_4ch(frame: SpectralFrame) -> tuple[np.ndarray, np.ndarray]:
    """Scale to [0, 1] and append the mask as a fourth channel.

    Returns float32 ``(rgb4, lwir4)``, both ``H x W x 4``; the LWIR plane is
    copied into channels 0-2.
    """
    rgb = frame.rgb.astype(np.float32) / 255.0
    lwir = frame.lwir.astype(np.float32) / 255.0
    rgb4 = np.concatenate([rgb, frame.rgb_mask[..., None].astype(np.float32)], axis=2)
    lwir4 = np.stack([lwir, lwir, lwir, frame.lwir_mask.astype(np.float32)], axis=2)
    return rgb4, lwir4


def pad_margin(d_max: int = DEFAULT_DMAX) -> int:
    return HALF + math.ceil(d_max / 2)


@dataclass
class PaddedPlanes:
    """Reflect-padded 4-channel images of one frame, addressed in frame coordinates."""

    rgb4: np.ndarray
    lwir4: np.ndarray
    margin: int
    frame_id: int = 0

    @classmethod
    def from_frame(cls, frame: SpectralFrame, d_max: int = DEFAULT_DMAX, margin: int | None = None) -> "PaddedPlanes":
        m = pad_margin(d_max) if margin is None else margin
        rgb4, lwir4 = compose_4ch(frame)
        pad = ((m, m), (m, m), (0, 0))
        return cls(np.pad(rgb4, pad, mode="reflect"), np.pad(lwir4, pad, mode="reflect"), m, frame.frame_id)

    @property
    def shape(self) -> tuple[int, int]:
        h, w = self.rgb4.shape[:2]
        return h - 2 * self.margin, w - 2 * self.margin

    def patch(self, which: str, x: int, y: int, width: int = PATCH_SIZE) -> np.ndarray:
        img = self.rgb4 if which == "rgb" else self.lwir4
        return extract_patch(img, (x, y), width, margin=self.margin)


def extract_patch(img4: np.ndarray, center: tuple[int, int], width: int = PATCH_SIZE,
                  margin: int = 0) -> np.ndarray:
    """Cut a ``36 x width x 4`` patch centred at ``center = (x, y)``.

    ``img4`` may be padded by ``margin`` pixels on every side; ``center`` is in
    unpadded coordinates. ``width - 36`` must be even.
    """
    x, y = center
    if int(x) != x or int(y) != y:
        raise UsageError(f"patch center must be integral, got {center}")
    extra = width - PATCH_SIZE
    if extra < 0 or extra % 2:
        raise ShapeError(f"patch width must be 36 + even D, got {width}")
    x0 = int(x) + margin - HALF - extra // 2
    y0 = int(y) + margin - HALF
    h, w = img4.shape[:2]
    if x0 < 0 or y0 < 0 or x0 + width > w or y0 + PATCH_SIZE > h:
        raise UsageError(f"patch at {center} (width {width}) leaves the padded frame")
    return img4[y0:y0 + PATCH_SIZE, x0:x0 + width]


# -- augmentation -------------------------------------------------------------

def cross_duplicate(gt: GroundTruthPoint) -> list[GroundTruthPoint]:
    """The point and its four Manhattan-distance-1 neighbours, all with the same disparity."""
    return [
        gt,
        replace(gt, x_rgb=gt.x_rgb - 1, x_lwir=gt.x_lwir - 1),
        replace(gt, x_rgb=gt.x_rgb + 1, x_lwir=gt.x_lwir + 1),
        replace(gt, y=gt.y - 1),
        replace(gt, y=gt.y + 1),
    ]


def mirror(frame: SpectralFrame, gts: list[GroundTruthPoint]) -> tuple[SpectralFrame, list[GroundTruthPoint]]:
    """Flip every plane left-right; columns map to ``W - 1 - x`` so disparities negate."""
    w = frame.shape[1]
    flipped = SpectralFrame(
        frame.rgb[:, ::-1].copy(),
        frame.lwir[:, ::-1].copy(),
        frame.rgb_mask[:, ::-1].copy(),
        frame.lwir_mask[:, ::-1].copy(),
        frame.frame_id,
    )
    return flipped, [replace(g, x_rgb=w - 1 - g.x_rgb, x_lwir=w - 1 - g.x_lwir) for g in gts]


def augment(frame: SpectralFrame, gts: list[GroundTruthPoint]) -> list[tuple[SpectralFrame, list[GroundTruthPoint]]]:
    """Cross-duplicate, then add the mirrored frame: 10 points per input point."""
    dup = [d for g in gts for d in cross_duplicate(g)]
    return [(frame, dup), mirror(frame, dup)]


def make_training_pairs(
    planes: PaddedPlanes,
    gts: list[GroundTruthPoint],
    rng: np.random.Generator,
    negative_margin: int = 4,
    d_max: int = DEFAULT_DMAX,
) -> list[TrainingSample]:
    """One positive and one negative sample per point.

    The negative LWIR patch sits ``delta`` columns from the true match on the
    same row, with ``negative_margin <= |delta| <= d_max / 2`` drawn uniformly.
    """
    if negative_margin < 1:
        raise ValueError("negative_margin must be >= 1")
    half = d_max // 2
    if negative_margin > half:
        raise ValueError(f"negative_margin {negative_margin} exceeds d_max / 2 = {half}")
    offsets = np.concatenate([np.arange(-half, -negative_margin + 1), np.arange(negative_margin, half + 1)])
    lo, hi = HALF - planes.margin, planes.shape[1] - 1 + planes.margin - (HALF - 1)
    samples = []
    for g in gts:
        p_rgb = planes.patch("rgb", g.x_rgb, g.y)
        # keep the negative patch inside the padded frame for points near a border
        ok = offsets[(g.x_lwir + offsets >= lo) & (g.x_lwir + offsets <= hi)]
        delta = int(rng.choice(ok))
        samples.append(TrainingSample(p_rgb, planes.patch("lwir", g.x_lwir, g.y), 1))
        samples.append(TrainingSample(p_rgb, planes.patch("lwir", g.x_lwir + delta, g.y), 0))
    return samples
