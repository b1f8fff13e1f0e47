"""Optimisation of the network with the summed two-head cross-entropy."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from .model import ModelParams, backward_batch, forward_batch, save_checkpoint
from .patches import (
    DEFAULT_DMAX,
    GroundTruthPoint,
    PaddedPlanes,
    SpectralFrame,
    TrainingSample,
    augment,
    make_training_pairs,
)
from .tensor import softmax_cross_entropy

log = logging.getLogger(__name__)

LOSS_CSV_HEADER = ["epoch", "step", "loss_corr", "loss_concat", "loss_total"]


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 10
    epochs: int = 40
    seed: int = 0
    negative_margin: int = 4
    d_max: int = DEFAULT_DMAX
    augment: bool = True

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.negative_margin < 1:
            raise ValueError("negative_margin must be >= 1")

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        raw = json.loads(text) if text.strip() else {}
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config fields: {sorted(unknown)}")
        return cls(**raw)


@dataclass
class LossRecord:
    loss_corr: float
    loss_concat: float
    epoch: int = 0
    step: int = 0
    loss_total: float = field(init=False)

    def __post_init__(self):
        self.loss_total = self.loss_corr + self.loss_concat


class Adam:
    """Bias-corrected first/second moment updates, one state pair per parameter."""

    def __init__(self, params: ModelParams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(t.data) for n, t in params.named_tensors()}
        self.v = {n: np.zeros_like(t.data) for n, t in params.named_tensors()}

    def step(self, params: ModelParams) -> None:
        self.t += 1
        if self.lr == 0:
            return
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for name, p in params.named_tensors():
            if p.grad is None:
                continue
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * p.grad
            v *= self.beta2
            v += (1 - self.beta2) * p.grad * p.grad
            p.data -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)


def _stack(batch: list[TrainingSample], dtype):
    rgb = np.stack([s.p_rgb for s in batch]).astype(dtype, copy=False)
    lwir = np.stack([s.p_lwir for s in batch]).astype(dtype, copy=False)
    labels = np.array([s.label for s in batch], dtype=np.intp)
    return rgb, lwir, labels


def compute_loss(batch: list[TrainingSample], params: ModelParams, backward: bool = True) -> LossRecord:
    """Mean cross-entropy of each head over the batch; total is their sum.

    With ``backward`` the gradients of ``loss_total`` are left in each
    parameter's ``.grad`` (previous values are discarded).
    """
    if not batch:
        raise ValueError("compute_loss needs a non-empty batch")
    rgb, lwir, labels = _stack(batch, params.dtype)
    out = forward_batch(params, rgb, lwir)
    loss_corr, g_corr = softmax_cross_entropy(out.y_corr, labels)
    loss_concat, g_concat = softmax_cross_entropy(out.y_concat, labels)
    if backward:
        params.zero_grad()
        backward_batch(params, out, g_corr.astype(params.dtype), g_concat.astype(params.dtype))
    return LossRecord(loss_corr, loss_concat)


def dataset_loss(samples: list[TrainingSample], params: ModelParams, batch_size: int = 32) -> LossRecord:
    """Sample-weighted mean losses over a whole set, without gradients."""
    corr = concat = 0.0
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        rec = compute_loss(chunk, params, backward=False)
        corr += rec.loss_corr * len(chunk)
        concat += rec.loss_concat * len(chunk)
    return LossRecord(corr / len(samples), concat / len(samples))


@dataclass
class TrainResult:
    params: ModelParams
    records: list[LossRecord]
    final: LossRecord | None = None


def train(
    samples: list[TrainingSample],
    config: TrainConfig,
    params: ModelParams | None = None,
    checkpoint_path=None,
    on_step: Callable[[LossRecord], None] | None = None,
    final_loss: bool = True,
) -> TrainResult:
    """Shuffled mini-batch training; deterministic for a given ``config.seed``.

    Writes ``checkpoint_path`` after every epoch when given. Raises
    :class:`TrainingDiverged` as soon as a loss is not finite.
    """
    if not samples:
        raise ValueError("cannot train on an empty dataset")
    params = params if params is not None else ModelParams.initialise(config.seed)
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    rng = np.random.default_rng(config.seed)
    records: list[LossRecord] = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        for i in range(0, len(order), config.batch_size):
            batch = [samples[j] for j in order[i:i + config.batch_size]]
            rec = compute_loss(batch, params)
            rec.epoch, rec.step = epoch, step
            if not math.isfinite(rec.loss_total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} step {step}: corr={rec.loss_corr} concat={rec.loss_concat}"
                )
            opt.step(params)
            records.append(rec)
            if on_step is not None:
                on_step(rec)
            step += 1
        if records:
            tail = [r.loss_total for r in records if r.epoch == epoch]
            log.info("epoch %d: mean loss_total %.4f", epoch, float(np.mean(tail)))
        if checkpoint_path is not None:
            save_checkpoint(params, checkpoint_path)
    final = dataset_loss(samples, params) if final_loss else None
    return TrainResult(params, records, final)


def build_training_set(
    frames: Iterable[tuple[SpectralFrame, list[GroundTruthPoint]]],
    config: TrainConfig,
) -> list[TrainingSample]:
    """Augment (if configured) and turn every point into a positive/negative pair."""
    rng = np.random.default_rng([config.seed, 1])
    samples: list[TrainingSample] = []
    for frame, gts in frames:
        if not gts:
            continue
        variants = augment(frame, gts) if config.augment else [(frame, gts)]
        for fr, pts in variants:
            planes = PaddedPlanes.from_frame(fr, config.d_max)
            samples.extend(make_training_pairs(planes, pts, rng, config.negative_margin, config.d_max))
    return samples


def write_loss_csv(path, records: list[LossRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_CSV_HEADER)
        for r in records:
            w.writerow([r.epoch, r.step, repr(r.loss_corr), repr(r.loss_concat), repr(r.loss_total)])


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
