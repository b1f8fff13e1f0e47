"""Recall@n, per-fold evaluation and cross-fold aggregation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import Dataset, FoldSpec
from .disparity import Estimate, estimate, select_mode
from .model import ModelParams
from .patches import DEFAULT_DMAX, PaddedPlanes

THRESHOLDS = (1, 3, 5)
MODES = ("combined", "corr", "concat")


def recall(predictions: Sequence[float], gts: Sequence[float], n: float) -> float:
    """Fraction of points with ``|prediction - gt| <= n``."""
    p = np.asarray(predictions, dtype=np.float64)
    g = np.asarray(gts, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"{p.size} predictions vs {g.size} ground truths")
    if p.size == 0:
        raise ValueError("recall of an empty point set is undefined")
    return float(np.mean(np.abs(p - g) <= n))


@dataclass
class RecallReport:
    fold: int | str
    mode: str
    count: int
    recalls: dict[int, float]

    def __post_init__(self):
        vals = [self.recalls[n] for n in sorted(self.recalls)]
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ValueError(f"recall outside [0, 1]: {self.recalls}")
        if any(a > b for a, b in zip(vals, vals[1:])):
            raise ValueError(f"recall not monotone in n: {self.recalls}")

    @classmethod
    def from_predictions(cls, fold, mode, predictions, gts, thresholds=THRESHOLDS) -> "RecallReport":
        return cls(fold, mode, len(gts), {n: recall(predictions, gts, n) for n in thresholds})

    def records(self) -> list[dict]:
        return [{"fold": self.fold, "mode": self.mode, "n": n, "recall": r, "count": self.count}
                for n, r in sorted(self.recalls.items())]


@dataclass
class AggregateReport:
    mode: str
    folds: list
    mean: dict[int, float]
    std: dict[int, float]
    std_kind: str = field(default="population")

    def records(self) -> list[dict]:
        return [{"fold": "mean", "mode": self.mode, "n": n, "recall": self.mean[n], "std": self.std[n],
                 "std_kind": self.std_kind, "folds": self.folds} for n in sorted(self.mean)]


def aggregate(reports: Sequence[RecallReport]) -> AggregateReport:
    """Mean and population standard deviation of each threshold across folds."""
    if not reports:
        raise ValueError("aggregate needs at least one report")
    modes = {r.mode for r in reports}
    mode = modes.pop() if len(modes) == 1 else "mixed"
    ns = sorted(reports[0].recalls)
    mean = {n: float(np.mean([r.recalls[n] for r in reports])) for n in ns}
    std = {n: float(np.std([r.recalls[n] for r in reports])) for n in ns}
    return AggregateReport(mode, [r.fold for r in reports], mean, std)


def estimate_fold(dataset: Dataset, fold: FoldSpec, params: ModelParams, d_max: int = DEFAULT_DMAX
                  ) -> list[tuple[object, Estimate]]:
    """Run inference on every test point of ``fold``; returns ``(gt, estimate)`` pairs."""
    out = []
    for frame_id, gts in dataset.points(fold.test).items():
        if not gts:
            continue
        planes = PaddedPlanes.from_frame(dataset.frame(frame_id), d_max)
        for g in gts:
            out.append((g, estimate(planes, g.x_rgb, g.y, params, d_max)))
    if not out:
        raise ValueError(f"fold {fold.fold_id} has no test points")
    return out


def reports_from_estimates(fold_id, pairs, modes=MODES) -> dict[str, RecallReport]:
    gts = [g.disparity for g, _ in pairs]
    return {m: RecallReport.from_predictions(fold_id, m, [select_mode(e, m) for _, e in pairs], gts)
            for m in modes}


def evaluate_fold(dataset: Dataset, fold: FoldSpec, params: ModelParams, d_max: int = DEFAULT_DMAX,
                  mode: str = "combined") -> RecallReport:
    pairs = estimate_fold(dataset, fold, params, d_max)
    return reports_from_estimates(fold.fold_id, pairs, (mode,))[mode]


def format_table(reports: Sequence[RecallReport], agg=None) -> str:
    """Plain-text table, one row per report, recall in percent.

    ``agg`` is an :class:`AggregateReport`, a list of them (one per mode) or None.
    """
    aggs = [] if agg is None else [agg] if isinstance(agg, AggregateReport) else list(agg)
    head = f"{'fold':>6} {'mode':>9} {'N':>6} " + " ".join(f"{'<=' + str(n) + 'px':>15}" for n in THRESHOLDS)
    lines = [head, "-" * len(head)]
    for r in reports:
        lines.append(f"{str(r.fold):>6} {r.mode:>9} {r.count:>6} "
                     + " ".join(f"{100 * r.recalls[n]:>15.2f}" for n in THRESHOLDS))
    for a in aggs:
        cells = " ".join(f"{f'{100 * a.mean[n]:.2f} ± {100 * a.std[n]:.2f}':>15}" for n in THRESHOLDS)
        lines.append(f"{'mean':>6} {a.mode:>9} {'':>6} {cells}")
    if aggs:
        lines.append(f"({aggs[0].std_kind} std over folds {aggs[0].folds})")
    return "\n".join(lines)


def reports_json(reports: Sequence[RecallReport], agg: AggregateReport | None = None) -> str:
    records = [rec for r in reports for rec in r.records()]
    if agg is not None:
        records.extend(agg.records())
    return json.dumps(records, indent=2)
