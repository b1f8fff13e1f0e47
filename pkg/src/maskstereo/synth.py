"""Synthetic RGB/LWIR scenes with person-like silhouettes and exact disparities.

Each figure is a union of ellipses (torso and head). The RGB rendering gives it
random clothing colours and a printed "logo"; the LWIR rendering makes it a
warm body with a smooth heat gradient and sensor noise. Silhouettes therefore
agree across spectra while interior appearance does not, which is the regime
where masks help.

Figures occupy separate horizontal slots, so they never overlap and every
silhouette pixel is visible in both images.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .patches import GroundTruthPoint, SpectralFrame


@dataclass
class SceneSpec:
    height: int = 96
    width: int = 160
    n_figures: int = 2
    disparity_range: tuple[int, int] = (-16, 16)
    seed: int = 0
    points_per_figure: int = 6
    rgb_texture: float = 1.0
    lwir_gradient: float = 1.0
    noise_std: float = 4.0
    d_max: int = 64
    n_frames: int = 30
    n_folds: int = 3

    def __post_init__(self):
        self.disparity_range = tuple(int(v) for v in self.disparity_range)
        lo, hi = self.disparity_range
        if lo > hi:
            raise ValueError(f"disparity_range {self.disparity_range} is empty")
        if max(abs(lo), abs(hi)) > self.d_max // 2:
            raise ValueError(f"disparity_range {self.disparity_range} exceeds +/- d_max/2 = {self.d_max // 2}")
        if self.n_figures < 1 or self.height < 48 or self.width < 48:
            raise ValueError("scene needs at least one figure and a 48 x 48 frame")
        if self.n_frames < self.n_folds:
            raise ValueError(f"{self.n_frames} frames cannot fill {self.n_folds} folds")
        if self.noise_std < 0 or self.rgb_texture < 0 or self.lwir_gradient < 0:
            raise ValueError("texture, gradient and noise strengths must be non-negative")

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        raw = json.loads(text)
        if not isinstance(raw, dict):
            raise ValueError("scene spec must be a JSON object")
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scene spec fields: {sorted(unknown)}")
        return cls(**raw)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass
class Figure:
    cx: int  # torso centre column in the RGB image
    cy: int
    torso: tuple[int, int]  # semi-axes (x, y)
    head_r: int
    head_dx: int
    disparity: int
    extras: dict = field(default_factory=dict)

    @property
    def half_width(self) -> int:
        return max(self.torso[0], abs(self.head_dx) + self.head_r)

    def mask(self, h: int, w: int, shift: int = 0) -> np.ndarray:
        """Silhouette with its centre moved ``shift`` columns left."""
        yy, xx = np.mgrid[0:h, 0:w]
        cx = self.cx - shift
        a, b = self.torso
        torso = ((xx - cx) / a) ** 2 + ((yy - self.cy) / b) ** 2 <= 1.0
        hy = self.cy - b - self.head_r + 2
        head = (xx - cx - self.head_dx) ** 2 + (yy - hy) ** 2 <= self.head_r ** 2
        return torso | head

    def head_mask(self, h: int, w: int, shift: int = 0) -> np.ndarray:
        yy, xx = np.mgrid[0:h, 0:w]
        hy = self.cy - self.torso[1] - self.head_r + 2
        return (xx - self.cx + shift - self.head_dx) ** 2 + (yy - hy) ** 2 <= self.head_r ** 2


def _smooth_field(rng, h, w, scale=24.0) -> np.ndarray:
    """Low-frequency field in roughly [-1, 1] from a few random cosines."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.zeros((h, w))
    for _ in range(3):
        fx, fy = rng.uniform(0.3, 1.0, 2) / scale
        ph = rng.uniform(0, 2 * np.pi)
        out += np.cos(2 * np.pi * (fx * xx + fy * yy) + ph)
    return out / 3.0


def _place_figures(spec: SceneSpec, rng) -> list[Figure]:
    h, w = spec.height, spec.width
    slot = w // spec.n_figures
    figs = []
    for i in range(spec.n_figures):
        d = int(rng.integers(spec.disparity_range[0], spec.disparity_range[1] + 1))
        a = int(rng.integers(7, 12))
        b = int(rng.integers(max(8, h // 6), max(9, h // 4)))
        r = int(rng.integers(5, 8))
        hdx = int(rng.integers(-2, 3))
        half = max(a, abs(hdx) + r)
        # RGB footprint [cx-half, cx+half], LWIR footprint shifted left by d
        lo = i * slot + 2 + half + max(d, 0)
        hi = (i + 1) * slot - 3 - half + min(d, 0)
        top = 2 + 2 * r - 2 + b
        bottom = h - 3 - b
        if lo > hi or top > bottom:
            raise ValueError(
                f"figure {i} (disparity {d}) cannot be placed in a {h} x {w} frame with {spec.n_figures} figures"
            )
        cx = int(rng.integers(lo, hi + 1))
        cy = int(rng.integers(top, bottom + 1))
        figs.append(Figure(cx, cy, (a, b), r, hdx, d))
    return figs


def _render_rgb(spec: SceneSpec, figs: list[Figure], rng) -> np.ndarray:
    h, w = spec.height, spec.width
    t = spec.rgb_texture
    base = rng.uniform(60, 200, 3)
    img = np.broadcast_to(base, (h, w, 3)).astype(np.float64).copy()
    img += 40 * t * _smooth_field(rng, h, w)[..., None] * rng.uniform(0.5, 1.0, 3)
    # background clutter
    for _ in range(int(round(6 * t))):
        y0, x0 = rng.integers(0, h - 4), rng.integers(0, w - 4)
        rh, rw = rng.integers(4, h // 3), rng.integers(4, w // 4)
        img[y0:y0 + rh, x0:x0 + rw] = rng.uniform(0, 255, 3)
    yy, xx = np.mgrid[0:h, 0:w]
    for f in figs:
        body = f.mask(h, w)
        cloth = rng.uniform(0, 255, 3)
        img[body] = cloth
        if t > 0:
            # printed logo: a block and stripes in a second colour, torso-local
            logo = rng.uniform(0, 255, 3)
            lw, lh = rng.integers(3, f.torso[0] + 1), rng.integers(3, f.torso[1] // 2 + 2)
            oy = int(rng.integers(-f.torso[1] // 2, 1))
            blk = (np.abs(xx - f.cx) <= lw) & (np.abs(yy - f.cy - oy) <= lh) & body
            img[blk] = (1 - t) * cloth + t * logo
            period = int(rng.integers(3, 7))
            stripes = (((yy - f.cy) // period) % 2 == 0) & body & (yy > f.cy + f.torso[1] // 3)
            img[stripes] = (1 - t) * cloth + t * rng.uniform(0, 255, 3)
        img[f.head_mask(h, w)] = rng.uniform(90, 230) * np.array([1.0, 0.8, 0.65])
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _render_lwir(spec: SceneSpec, figs: list[Figure], rng) -> np.ndarray:
    h, w = spec.height, spec.width
    g = spec.lwir_gradient
    img = np.full((h, w), rng.uniform(40, 90))
    img += 15 * g * _smooth_field(rng, h, w, scale=60.0)
    yy, xx = np.mgrid[0:h, 0:w]
    for f in figs:
        body = f.mask(h, w, shift=f.disparity)
        cx = f.cx - f.disparity
        heat = np.full((h, w), rng.uniform(170, 215))
        # smooth heat gradient: vertical ramp plus a warm blob, body-local
        ramp = (yy - f.cy) / max(f.torso[1], 1)
        bx, by = rng.uniform(-0.6, 0.6) * f.torso[0], rng.uniform(-0.6, 0.6) * f.torso[1]
        blob = np.exp(-(((xx - cx - bx) / (f.torso[0] * 0.8)) ** 2 + ((yy - f.cy - by) / (f.torso[1] * 0.5)) ** 2))
        heat += g * (rng.uniform(-20, 20) * ramp + rng.uniform(10, 30) * blob)
        img[body] = heat[body]
        img[f.head_mask(h, w, shift=f.disparity)] += 12 * g
    if spec.noise_std > 0:
        img += rng.normal(0.0, spec.noise_std, (h, w))
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_frame(spec: SceneSpec, rng: np.random.Generator, frame_id: int = 0
                   ) -> tuple[SpectralFrame, list[GroundTruthPoint], list[Figure]]:
    """Render one frame and sample ground-truth points on each silhouette."""
    h, w = spec.height, spec.width
    figs = _place_figures(spec, rng)
    rgb = _render_rgb(spec, figs, rng)
    lwir = _render_lwir(spec, figs, rng)
    rgb_mask = np.zeros((h, w), np.uint8)
    lwir_mask = np.zeros((h, w), np.uint8)
    gts = []
    for f in figs:
        m = f.mask(h, w)
        rgb_mask[m] = 1
        lwir_mask[f.mask(h, w, shift=f.disparity)] = 1
        ys, xs = np.nonzero(m)
        pick = rng.choice(len(ys), size=min(spec.points_per_figure, len(ys)), replace=False)
        for k in sorted(pick):
            gts.append(GroundTruthPoint(frame_id, int(ys[k]), int(xs[k]), int(xs[k]) - f.disparity))
    frame = SpectralFrame(rgb, lwir, rgb_mask, lwir_mask, frame_id)
    return frame, gts, figs


def frame_rng(spec: SceneSpec, frame_id: int) -> np.random.Generator:
    """Independent per-frame stream, so frames can be generated in any order."""
    return np.random.default_rng(np.random.SeedSequence([spec.seed, frame_id]))


def generate_dataset(spec: SceneSpec, out_dir) -> Path:
    """Write ``spec.n_frames`` frames, ground truth and fold definitions under ``out_dir``."""
    from .dataset import make_folds, write_dataset

    frames, gts = [], []
    for i in range(spec.n_frames):
        frame, pts, _ = generate_frame(spec, frame_rng(spec, i), frame_id=i)
        frames.append(frame)
        gts.extend(pts)
    folds = make_folds(list(range(spec.n_frames)), spec.n_folds)
    out = Path(out_dir)
    write_dataset(out, frames, gts, folds)
    (out / "scene.json").write_text(spec.to_json() + "\n")
    return out
