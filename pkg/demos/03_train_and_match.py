"""Train the two-head matcher briefly on synthetic frames, then estimate disparities.

A few minutes on one CPU core. Results after so little training are noisy;
the point is the workflow.
"""
import time

import numpy as np

from maskstereo.baseline import planes_for_window, ssd_disparity
from maskstereo.disparity import estimate
from maskstereo.evaluation import RecallReport
from maskstereo.patches import PaddedPlanes
from maskstereo.synth import SceneSpec, frame_rng, generate_frame
from maskstereo.training import TrainConfig, build_training_set, train

spec = SceneSpec(seed=3, points_per_figure=3)
train_frames = [generate_frame(spec, frame_rng(spec, i), i)[:2] for i in range(4)]
test_frames = [generate_frame(spec, frame_rng(spec, i), i)[:2] for i in range(100, 102)]

config = TrainConfig(epochs=2)
samples = build_training_set(train_frames, config)
print(len(samples), "training samples (augmented, one negative per positive)")

t = time.time()
result = train(samples, config, on_step=lambda r: r.step % 20 or print(f"step {r.step:4d}  loss {r.loss_total:.3f}"))
print(f"trained in {time.time() - t:.0f}s, final loss {result.final.loss_total:.3f}")

preds, ssd, gt = [], [], []
for frame, pts in test_frames:
    planes = PaddedPlanes.from_frame(frame, config.d_max)
    ssd_planes = planes_for_window(frame, (36, 36), config.d_max)
    for g in pts:
        est = estimate(planes, g.x_rgb, g.y, result.params, config.d_max)
        preds.append(est.d_hat)
        ssd.append(ssd_disparity(ssd_planes, g.x_rgb, g.y))
        gt.append(g.disparity)
        print(f"gt {g.disparity:+3d}  net {est.d_hat:+6.1f} (corr {est.d_hat_corr:+3d}, concat {est.d_hat_concat:+3d})"
              f"  ssd {ssd[-1]:+3d}")

for name, p in (("network", preds), ("ssd", ssd)):
    r = RecallReport.from_predictions("test", name, p, gt)
    print(name, {n: round(v, 2) for n, v in r.recalls.items()})
print("mean |error| network %.1f px, ssd %.1f px" % (np.mean(np.abs(np.subtract(preds, gt))),
                                                    np.mean(np.abs(np.subtract(ssd, gt)))))
