"""Render one synthetic RGB/LWIR frame and look at what the matcher sees."""
import numpy as np

from maskstereo.patches import PaddedPlanes, augment
from maskstereo.synth import SceneSpec, frame_rng, generate_frame

spec = SceneSpec(seed=1)
frame, gts, figs = generate_frame(spec, frame_rng(spec, 0))

print("frame", frame.shape, "figures at disparities", [f.disparity for f in figs])
for g in gts[:4]:
    print(f"  point y={g.y} x_rgb={g.x_rgb} x_lwir={g.x_lwir} d={g.disparity}")

# interior appearance differs across spectra, silhouettes do not; single
# figures vary, the mean over many frames stays well below 0.5
grey = frame.rgb.astype(float).mean(axis=2)
h, w = frame.shape
for f in figs:
    a, b = grey[f.mask(h, w)], frame.lwir.astype(float)[f.mask(h, w, f.disparity)]
    print("figure d=%+d interior correlation RGB vs LWIR: %+.2f" % (f.disparity, np.corrcoef(a, b)[0, 1]))
print("mask pixels RGB / LWIR:", frame.rgb_mask.sum(), frame.lwir_mask.sum())

# 4-channel patches around the first point
planes = PaddedPlanes.from_frame(frame, spec.d_max)
g = gts[0]
p_rgb = planes.patch("rgb", g.x_rgb, g.y)
p_lwir = planes.patch("lwir", g.x_lwir, g.y)
print("patch shapes", p_rgb.shape, p_lwir.shape, "mask overlap",
      int((p_rgb[..., 3] * p_lwir[..., 3]).sum()), "of", int(p_rgb[..., 3].sum()))

# cross-duplication and mirroring: ten points per annotated point
variants = augment(frame, gts)
print("augmented points:", sum(len(p) for _, p in variants), "from", len(gts))
print("mirrored disparities:", sorted({p.disparity for p in variants[1][1]}))
