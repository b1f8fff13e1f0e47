"""Command-line entry point: ``maskstereo <command> ...``.

Commands: synth-gen, train, eval, infer, baseline. ``--data`` defaults to the
``MASKSTEREO_DATA`` environment variable.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .baseline import planes_for_window, ssd_disparity
from .dataset import Dataset, load_frame_files, read_gt_csv
from .disparity import estimate, select_mode, write_inference_csv
from .evaluation import (
    MODES,
    RecallReport,
    aggregate,
    estimate_fold,
    format_table,
    reports_from_estimates,
    reports_json,
)
from .model import load_checkpoint, save_checkpoint
from .patches import DEFAULT_DMAX, PaddedPlanes
from .synth import SceneSpec, generate_dataset
from .training import TrainConfig, TrainingDiverged, build_training_set, train, write_loss_csv

log = logging.getLogger("maskstereo")
DATA_ENV = "MASKSTEREO_DATA"


class CommandError(Exception):
    pass


def _data_dir(args) -> Path:
    path = args.data or os.environ.get(DATA_ENV)
    if not path:
        raise CommandError(f"no dataset given: pass --data or set {DATA_ENV}")
    return Path(path)


def _open_dataset(args) -> Dataset:
    try:
        return Dataset.open(_data_dir(args))
    except FileNotFoundError as e:
        raise CommandError(str(e)) from e


def _fold(ds: Dataset, fold_id: int):
    try:
        return ds.fold(fold_id)
    except KeyError as e:
        raise CommandError(e.args[0]) from e


def _write_reports(args, reports, agg) -> None:
    print(format_table(reports, agg))
    if args.report:
        Path(args.report).write_text(reports_json(reports, agg) + "\n")


# -- commands -----------------------------------------------------------------

def cmd_synth_gen(args) -> None:
    spec = SceneSpec()
    if args.spec:
        try:
            spec = SceneSpec.from_json(Path(args.spec).read_text())
        except (OSError, ValueError, TypeError) as e:
            raise CommandError(f"invalid scene spec {args.spec}: {e}") from e
    if args.seed is not None:
        spec.seed = args.seed
    out = generate_dataset(spec, args.out)
    print(f"wrote {spec.n_frames} frames, {spec.n_folds} folds to {out}")


def cmd_train(args) -> None:
    ds = _open_dataset(args)
    fold = _fold(ds, args.fold)
    config = TrainConfig()
    if args.config:
        try:
            config = TrainConfig.from_json(Path(args.config).read_text())
        except (OSError, ValueError, TypeError) as e:
            raise CommandError(f"invalid train config {args.config}: {e}") from e
    if args.seed is not None:
        config.seed = args.seed
    frames = [(ds.frame(i), pts) for i, pts in ds.points(fold.train).items() if pts]
    samples = build_training_set(frames, config)
    log.info("fold %d: %d training samples from %d frames", fold.fold_id, len(samples), len(frames))
    out = Path(args.out)
    loss_csv = Path(args.loss_csv) if args.loss_csv else out.with_suffix(".loss.csv")
    # a full extra pass over the set costs about a third of an epoch; report the last epoch's mean instead
    result = train(samples, config, checkpoint_path=out, final_loss=False)
    save_checkpoint(result.params, out)
    write_loss_csv(loss_csv, result.records)
    last = [r.loss_total for r in result.records if r.epoch == result.records[-1].epoch]
    print(f"checkpoint {out}; loss curve {loss_csv}; last-epoch mean loss_total {sum(last) / len(last):.4f}")


def _pair_folds_ckpts(args) -> list[tuple[int, str]]:
    if len(args.ckpt) != len(args.fold):
        raise CommandError(f"{len(args.fold)} --fold values but {len(args.ckpt)} --ckpt values")
    return list(zip(args.fold, args.ckpt))


def cmd_eval(args) -> None:
    ds = _open_dataset(args)
    modes = MODES if args.mode == "all" else (args.mode,)
    by_mode: dict[str, list[RecallReport]] = {m: [] for m in modes}
    for fold_id, ckpt in _pair_folds_ckpts(args):
        fold = _fold(ds, fold_id)
        try:
            params = load_checkpoint(ckpt)
        except (FileNotFoundError, ValueError) as e:
            raise CommandError(f"cannot load checkpoint for fold {fold_id}: {e}") from e
        pairs = estimate_fold(ds, fold, params, args.dmax)
        for m, rep in reports_from_estimates(fold_id, pairs, modes).items():
            by_mode[m].append(rep)
    reports = [r for m in modes for r in by_mode[m]]
    aggs = [aggregate(by_mode[m]) for m in modes] if args.aggregate else []
    print(format_table(reports, aggs))
    if args.report:
        records = [rec for r in reports for rec in r.records()]
        records.extend(rec for a in aggs for rec in a.records())
        Path(args.report).write_text(json.dumps(records, indent=2) + "\n")


def cmd_infer(args) -> None:
    for flag in ("rgb_mask", "lwir_mask"):
        val = getattr(args, flag)
        opt = "--" + flag.replace("_", "-")
        if not val:
            raise CommandError(f"mask required: {opt} was not given")
        if not Path(val).exists():
            raise CommandError(f"mask required: {opt} file {val} does not exist")
    try:
        params = load_checkpoint(args.ckpt)
    except (FileNotFoundError, ValueError) as e:
        raise CommandError(f"cannot load checkpoint: {e}") from e
    try:
        frame = load_frame_files(args.rgb, args.lwir, args.rgb_mask, args.lwir_mask)
    except (FileNotFoundError, ValueError) as e:
        raise CommandError(str(e)) from e
    planes = PaddedPlanes.from_frame(frame, args.dmax)
    rows = []
    for p in read_gt_csv(args.points):
        est = estimate(planes, p.x_rgb, p.y, params, args.dmax)
        if args.mode == "combined":
            rows.append((p.frame, p.y, p.x_rgb, est.d_hat, est.d_hat_corr, est.d_hat_concat))
        elif args.mode == "corr":
            rows.append((p.frame, p.y, p.x_rgb, select_mode(est, "corr"), est.d_hat_corr, None))
        else:
            rows.append((p.frame, p.y, p.x_rgb, select_mode(est, "concat"), None, est.d_hat_concat))
    out = args.out or "/dev/stdout"
    write_inference_csv(out, rows)


def cmd_baseline(args) -> None:
    ds = _open_dataset(args)
    window = tuple(args.window)
    reports = []
    rows = []
    for fold_id in args.fold:
        fold = _fold(ds, fold_id)
        preds, gts = [], []
        for frame_id, pts in ds.points(fold.test).items():
            if not pts:
                continue
            planes = planes_for_window(ds.frame(frame_id), window, args.dmax)
            for g in pts:
                d = ssd_disparity(planes, g.x_rgb, g.y, window, args.dmax)
                preds.append(d)
                gts.append(g.disparity)
                rows.append((g.frame, g.y, g.x_rgb, d, None, None))
        if not gts:
            raise CommandError(f"fold {fold_id} has no test points")
        reports.append(RecallReport.from_predictions(fold_id, "ssd", preds, gts))
    _write_reports(args, reports, aggregate(reports) if args.aggregate else None)
    if args.predictions:
        write_inference_csv(args.predictions, rows)


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maskstereo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the seed in the scene spec or train config")
    common.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-gen", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--spec", help="scene spec JSON (defaults if omitted)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_gen)

    s = sub.add_parser("train", parents=[common], help="train one fold")
    s.add_argument("--data")
    s.add_argument("--fold", type=int, required=True)
    s.add_argument("--config", help="train config JSON (defaults if omitted)")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--loss-csv", help="loss curve path (default: <out>.loss.csv)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="recall@1/3/5 of trained checkpoints")
    s.add_argument("--data")
    s.add_argument("--fold", type=int, action="append", required=True, help="repeatable; pairs with --ckpt")
    s.add_argument("--ckpt", action="append", required=True)
    s.add_argument("--mode", choices=[*MODES, "all"], default="combined")
    s.add_argument("--dmax", type=int, default=DEFAULT_DMAX)
    s.add_argument("--aggregate", action="store_true", help="add mean ± std across folds")
    s.add_argument("--report", help="write JSON records here")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("infer", parents=[common], help="estimate disparities at given points")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--rgb", required=True)
    s.add_argument("--lwir", required=True)
    s.add_argument("--rgb-mask")
    s.add_argument("--lwir-mask")
    s.add_argument("--points", required=True, help="CSV with frame,y,x_rgb[,x_lwir]")
    s.add_argument("--dmax", type=int, default=DEFAULT_DMAX)
    s.add_argument("--mode", choices=MODES, default="combined")
    s.add_argument("--out", help="output CSV (default stdout)")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("baseline", parents=[common], help="SSD window matcher recall")
    s.add_argument("--data")
    s.add_argument("--fold", type=int, action="append", required=True)
    s.add_argument("--dmax", type=int, default=DEFAULT_DMAX)
    s.add_argument("--window", type=int, nargs=2, default=(36, 36), metavar=("H", "W"))
    s.add_argument("--aggregate", action="store_true")
    s.add_argument("--report")
    s.add_argument("--predictions", help="write per-point CSV here")
    s.set_defaults(func=cmd_baseline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limits = threadpool_limits(args.threads) if args.threads else contextlib.nullcontext()
    try:
        with limits:
            args.func(args)
    except CommandError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except TrainingDiverged as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
