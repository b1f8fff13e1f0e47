"""On-disk dataset layout.

::

    <root>/
        gt.csv              frame,y,x_rgb,x_lwir  (integer pixels)
        folds.json          {"folds": [{"id": 1, "train": [[a, b], ...], "validation": [...], "test": [...]}]}
        rgb/00000.png       8-bit, 3 channels
        lwir/00000.png      8-bit, 1 channel
        rgb_mask/00000.png  8-bit, 1 channel, 0 = background, nonzero = person
        lwir_mask/00000.png
        scene.json          generator settings (synthetic datasets only)

Fold frame ranges are inclusive ``[first, last]`` pairs.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .patches import GroundTruthPoint, SpectralFrame

PLANES = ("rgb", "lwir", "rgb_mask", "lwir_mask")
GT_HEADER = ["frame", "y", "x_rgb", "x_lwir"]


@dataclass
class FoldSpec:
    fold_id: int
    train: list[int]
    validation: list[int]
    test: list[int]

    def __post_init__(self):
        a, b, c = set(self.train), set(self.validation), set(self.test)
        if a & b or a & c or b & c:
            raise ValueError(f"fold {self.fold_id}: train/validation/test sets overlap")

    def to_json(self) -> dict:
        return {
            "id": self.fold_id,
            "train": _to_ranges(self.train),
            "validation": _to_ranges(self.validation),
            "test": _to_ranges(self.test),
        }

    @classmethod
    def from_json(cls, raw: dict) -> "FoldSpec":
        return cls(int(raw["id"]), _from_ranges(raw.get("train", [])),
                   _from_ranges(raw.get("validation", [])), _from_ranges(raw.get("test", [])))


def _to_ranges(ids: list[int]) -> list[list[int]]:
    out: list[list[int]] = []
    for i in sorted(ids):
        if out and out[-1][1] == i - 1:
            out[-1][1] = i
        else:
            out.append([i, i])
    return out


def _from_ranges(ranges) -> list[int]:
    ids = []
    for first, last in ranges:
        ids.extend(range(int(first), int(last) + 1))
    return ids


def make_folds(frame_ids: list[int], n_folds: int) -> list[FoldSpec]:
    """Contiguous test blocks; validation is the head of the next block."""
    if n_folds < 2:
        raise ValueError("cross-validation needs at least 2 folds")
    if len(frame_ids) < n_folds:
        raise ValueError(f"{len(frame_ids)} frames cannot fill {n_folds} folds")
    blocks = [list(b) for b in np.array_split(np.asarray(frame_ids), n_folds)]
    folds = []
    for k in range(n_folds):
        test = [int(i) for i in blocks[k]]
        nxt = blocks[(k + 1) % n_folds]
        n_val = max(1, len(nxt) // 5) if len(nxt) > 1 else 0
        val = [int(i) for i in nxt[:n_val]]
        train = [int(i) for i in frame_ids if i not in test and i not in val]
        folds.append(FoldSpec(k + 1, train, val, test))
    return folds


def write_folds(path, folds: list[FoldSpec]) -> None:
    Path(path).write_text(json.dumps({"folds": [f.to_json() for f in folds]}, indent=2) + "\n")


def read_folds(path) -> list[FoldSpec]:
    raw = json.loads(Path(path).read_text())
    return [FoldSpec.from_json(f) for f in raw["folds"]]


def write_gt_csv(path, gts: list[GroundTruthPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GT_HEADER)
        for g in gts:
            w.writerow([g.frame, g.y, g.x_rgb, g.x_lwir])


def read_gt_csv(path) -> list[GroundTruthPoint]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"frame", "y", "x_rgb"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for row in reader:
            x_lwir = row.get("x_lwir")
            out.append(GroundTruthPoint(int(row["frame"]), int(row["y"]), int(row["x_rgb"]),
                                        int(x_lwir) if x_lwir not in (None, "") else int(row["x_rgb"])))
        return out


def read_png(path, channels: int) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    img = np.asarray(Image.open(path))
    if channels == 1:
        if img.ndim == 3:
            raise ValueError(f"{path}: expected a single-channel image, got shape {img.shape}")
        return img.astype(np.uint8)
    if img.ndim != 3 or img.shape[2] < 3:
        raise ValueError(f"{path}: expected an RGB image, got shape {img.shape}")
    return img[:, :, :3].astype(np.uint8)


def write_png(path, arr: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(arr)).save(path, format="PNG")


def load_frame_files(rgb, lwir, rgb_mask, lwir_mask, frame_id: int = 0) -> SpectralFrame:
    return SpectralFrame(read_png(rgb, 3), read_png(lwir, 1), read_png(rgb_mask, 1), read_png(lwir_mask, 1), frame_id)


@dataclass
class Dataset:
    root: Path
    gts: list[GroundTruthPoint]
    folds: list[FoldSpec]
    _frames: dict[int, SpectralFrame] = field(default_factory=dict, repr=False)

    @classmethod
    def open(cls, root) -> "Dataset":
        root = Path(root)
        if not (root / "gt.csv").exists():
            raise FileNotFoundError(f"{root} is not a dataset (no gt.csv)")
        folds = read_folds(root / "folds.json") if (root / "folds.json").exists() else []
        return cls(root, read_gt_csv(root / "gt.csv"), folds)

    def frame(self, frame_id: int) -> SpectralFrame:
        if frame_id not in self._frames:
            name = f"{frame_id:05d}.png"
            self._frames[frame_id] = load_frame_files(
                *(self.root / p / name for p in PLANES), frame_id=frame_id)
        return self._frames[frame_id]

    def fold(self, fold_id: int) -> FoldSpec:
        for f in self.folds:
            if f.fold_id == fold_id:
                return f
        have = ", ".join(str(f.fold_id) for f in self.folds) or "none"
        raise KeyError(f"fold {fold_id} not found; available folds: {have}")

    def points(self, frame_ids) -> dict[int, list[GroundTruthPoint]]:
        wanted = set(frame_ids)
        out: dict[int, list[GroundTruthPoint]] = {i: [] for i in sorted(wanted)}
        for g in self.gts:
            if g.frame in wanted:
                out[g.frame].append(g)
        return out


def write_dataset(root, frames: list[SpectralFrame], gts: list[GroundTruthPoint], folds: list[FoldSpec]) -> None:
    root = Path(root)
    for p in PLANES:
        (root / p).mkdir(parents=True, exist_ok=True)
    for fr in frames:
        name = f"{fr.frame_id:05d}.png"
        write_png(root / "rgb" / name, fr.rgb)
        write_png(root / "lwir" / name, fr.lwir)
        write_png(root / "rgb_mask" / name, fr.rgb_mask * 255)
        write_png(root / "lwir_mask" / name, fr.lwir_mask * 255)
    write_gt_csv(root / "gt.csv", gts)
    write_folds(root / "folds.json", folds)
