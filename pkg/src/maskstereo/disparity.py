"""Disparity inference by scoring every candidate window of a widened LWIR patch.

Candidate offsets are disparities relative to the centre of the wide patch:
offset ``k`` is the 36-wide LWIR window centred ``k`` columns *left* of the wide
patch centre, so with the wide patch centred at ``x_rgb - anchor`` the candidate
disparity ``x_rgb - x_lwir`` equals ``anchor + k``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import FEATURE_DIM, PATCH_SIZE, ModelParams, extract_features, heads_forward
from .patches import DEFAULT_DMAX, PaddedPlanes
from .tensor import ShapeError

INFER_CSV_HEADER = ["frame", "y", "x_rgb", "d_hat", "d_hat_corr", "d_hat_concat"]


def pick_best(scores: np.ndarray, offsets: np.ndarray, maximize: bool = True) -> int:
    """Index of the best score; ties go to the smallest ``|offset|``, then the negative one."""
    s = np.asarray(scores, dtype=np.float64)
    key = -s if maximize else s
    # lexsort: last key is primary
    order = np.lexsort((offsets, np.abs(offsets), key))
    return int(order[0])


def _margins(logits: np.ndarray) -> np.ndarray:
    # same-minus-not-same logit: strictly monotone in softmax(y)[same], never saturates
    y = np.asarray(logits, dtype=np.float64)
    return y[:, 1] - y[:, 0]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class DisparityDistribution:
    candidates: np.ndarray  # signed offsets -D/2 .. D/2
    p_corr: np.ndarray
    p_concat: np.ndarray
    margin_corr: np.ndarray
    margin_concat: np.ndarray

    @property
    def d_hat_corr(self) -> int:
        return int(self.candidates[pick_best(self.margin_corr, self.candidates)])

    @property
    def d_hat_concat(self) -> int:
        return int(self.candidates[pick_best(self.margin_concat, self.candidates)])

    @property
    def d_hat(self) -> float:
        return (self.d_hat_corr + self.d_hat_concat) / 2


def score_candidates(p_rgb: np.ndarray, wide_lwir: np.ndarray, params: ModelParams) -> DisparityDistribution:
    """Match probability of every 36-wide window of ``wide_lwir`` against ``p_rgb``.

    The LWIR trunk runs once over the whole ``36 x (36 + D) x 4`` patch.
    """
    if np.shape(p_rgb) != (PATCH_SIZE, PATCH_SIZE, 4):
        raise ShapeError(f"RGB patch must be 36 x 36 x 4, got {np.shape(p_rgb)}")
    wide_lwir = np.asarray(wide_lwir)
    if wide_lwir.ndim != 3 or wide_lwir.shape[0] != PATCH_SIZE or wide_lwir.shape[2] != 4:
        raise ShapeError(f"wide LWIR patch must be 36 x (36 + D) x 4, got {wide_lwir.shape}")
    d = wide_lwir.shape[1] - PATCH_SIZE
    if d < 2 or d % 2:
        raise ShapeError(f"wide LWIR patch width must be 36 + D with D even and >= 2, got {wide_lwir.shape[1]}")
    f_rgb = extract_features(p_rgb, params, "rgb").reshape(1, FEATURE_DIM)
    f_lwir = extract_features(wide_lwir, params, "lwir").reshape(d + 1, FEATURE_DIM)
    out = heads_forward(params, f_rgb, f_lwir)
    # window j is centred at (centre - D/2 + j), i.e. offset D/2 - j; reverse to ascend
    m_corr = _margins(out.y_corr)[::-1]
    m_concat = _margins(out.y_concat)[::-1]
    return DisparityDistribution(
        np.arange(-d // 2, d // 2 + 1),
        _sigmoid(m_corr), _sigmoid(m_concat), m_corr, m_concat,
    )


@dataclass
class Estimate:
    d_hat: float
    d_hat_corr: int
    d_hat_concat: int
    distribution: DisparityDistribution | None = None


def estimate(planes: PaddedPlanes, x_rgb: int, y: int, params: ModelParams,
             d_max: int = DEFAULT_DMAX, anchor: int = 0) -> Estimate:
    """Average of the two heads' best disparities at RGB pixel ``(x_rgb, y)``.

    ``anchor`` is the disparity the search is centred on; candidates span
    ``anchor - d_max/2 .. anchor + d_max/2``.
    """
    p_rgb = planes.patch("rgb", x_rgb, y)
    wide = planes.patch("lwir", x_rgb - anchor, y, PATCH_SIZE + d_max)
    dist = score_candidates(p_rgb, wide, params)
    dc, dn = anchor + dist.d_hat_corr, anchor + dist.d_hat_concat
    return Estimate((dc + dn) / 2, dc, dn, dist)


def estimate_branch_only(planes: PaddedPlanes, x_rgb: int, y: int, params: ModelParams,
                         d_max: int = DEFAULT_DMAX, branch: str = "corr", anchor: int = 0) -> int:
    """Best disparity of a single head ("corr" or "concat")."""
    est = estimate(planes, x_rgb, y, params, d_max, anchor)
    return select_mode(est, branch)


def select_mode(est: Estimate, mode: str) -> float:
    if mode == "combined":
        return est.d_hat
    if mode == "corr":
        return est.d_hat_corr
    if mode == "concat":
        return est.d_hat_concat
    raise ValueError(f"mode must be combined, corr or concat, got {mode!r}")


def _fmt(v) -> str:
    if v is None:
        return ""
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_inference_csv(path, rows) -> None:
    """``rows``: iterable of (frame, y, x_rgb, d_hat, d_hat_corr, d_hat_concat); None leaves a cell empty."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INFER_CSV_HEADER)
        for frame, y, x, d, dc, dn in rows:
            w.writerow([frame, y, x, _fmt(d), _fmt(dc), _fmt(dn)])


def read_inference_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
