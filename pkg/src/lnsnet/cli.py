"""Command-line front end: train, segment, eval, lifelong.

Every failure ends with exactly one line on stderr of the form
``lnsnet: error: <ErrorType>: <message>`` and a nonzero exit status:
2 for bad arguments or configuration, 1 for anything else.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evalkit, pipeline
from .errors import ConfigError, ImageError, LNSError, TrainingDiverged
from .imagefeat import load_image, save_png
from .loss import LossConfig
from .modelio import load_model, save_model
from .trainer import EpochRecord, ModelState, Schedule, TrainConfig, train_stream

log = logging.getLogger("lnsnet")

IMAGE_SUFFIXES = (".png", ".ppm")
LIST_SUFFIXES = (".txt", ".lst", ".list")
LOG_FIELDS = ["task_id", "epoch", "phase", "L_c", "L_rc", "L_rs", "total"]
STREAM_FIELDS = ["task_id", "image_id", "num_segments", "L_c", "L_rc", "L_rs", "total",
                 "br", "bp", "asa", "f_beta", "chosen_gt"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------- arguments

def _add_hyperparameters(p):
    g = p.add_argument_group("hyperparameters (defaults: built-in, or the loaded model's)")
    g.add_argument("--lr", type=float)
    g.add_argument("--epochs", type=int, help="epochs per task")
    g.add_argument("--feature-epochs", type=int,
                   help="epochs updating the embedder before seed epochs (default 80%% of --epochs)")
    g.add_argument("--beta", type=float, help="reconstruction loss weight")
    g.add_argument("--phi", type=float, help="spatial reconstruction weight")
    g.add_argument("--topn", type=int, help="seeds per pixel in the range-limited assignment")
    g.add_argument("--lambda", dest="lam", type=float, help="channel memory rate")
    g.add_argument("--epsilon", type=float, help="contour threshold of the boundary layer")
    g.add_argument("--seed", type=int, help="initialization seed")
    g.add_argument("--color-space", choices=("lab", "rgb"))
    g.add_argument("--no-gal", action="store_true", help="disable gradient rescaling by channel")
    g.add_argument("--no-gbl", action="store_true", help="disable contour gradient flipping")
    g.add_argument("--reset-moments", action="store_true",
                   help="reset optimizer moments at the start of each task")
    g.add_argument("--init-model", type=Path, help="continue from a saved model")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lnsnet", description="Lifelong superpixel segmentation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train over an ordered image stream")
    p.add_argument("--images", nargs="+", required=True, type=Path,
                   help="image directory, list file, or image paths")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", type=Path, required=True, help="model file to write")
    p.add_argument("--log", type=Path, help="training log CSV (default: <out>.log.csv)")
    _add_hyperparameters(p)

    p = sub.add_parser("segment", help="segment one image with a trained model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", type=Path, required=True, help="16-bit label PNG")
    p.add_argument("--overlay", type=Path, help="write the image with red boundaries here")
    p.add_argument("--color-space", choices=("lab", "rgb"),
                   help="must match the model if given")
    p.add_argument("--min-size-fraction", type=float, default=0.25)

    p = sub.add_parser("eval", help="score label maps against ground truth")
    p.add_argument("--pred", type=Path, required=True, help="label PNG or directory")
    p.add_argument("--gt", type=Path, nargs="+", required=True,
                   help="label PNG(s) or a directory matched by file stem")
    p.add_argument("--out", type=Path, help="metrics CSV")
    p.add_argument("--tolerance", type=int, default=2)
    p.add_argument("--f-beta", type=float, default=4.0)

    p = sub.add_parser("lifelong", help="train, segment and score each image in turn")
    p.add_argument("--images", nargs="+", required=True, type=Path)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", type=Path, required=True, help="model file written at stream end")
    p.add_argument("--stream-csv", type=Path, help="default: <out>.stream.csv")
    p.add_argument("--labels-dir", type=Path, help="write one label PNG per image here")
    p.add_argument("--gt-dir", type=Path, help="ground truth label PNGs matched by stem")
    p.add_argument("--log", type=Path, help="training log CSV")
    p.add_argument("--reeval-first", action="store_true",
                   help="re-score the first image at stream end and print the loss ratio")
    _add_hyperparameters(p)
    return parser


def _train_config(args, base: TrainConfig) -> TrainConfig:
    """Apply explicit flags over ``base``; raises ConfigError on any invalid value."""
    try:
        sched = base.schedule
        epochs = args.epochs if args.epochs is not None else sched.max_epochs
        if args.feature_epochs is not None:
            feature = args.feature_epochs
        elif args.epochs is not None:
            feature = round(0.8 * epochs)
        else:
            feature = sched.feature_epochs
        lr = args.lr if args.lr is not None else sched.learning_rate
        loss = base.loss
        loss = LossConfig(beta=loss.beta if args.beta is None else args.beta,
                          phi=loss.phi if args.phi is None else args.phi,
                          n=loss.n if args.topn is None else args.topn,
                          epsilon_div=loss.epsilon_div)
        overrides = {"schedule": Schedule(epochs, feature, lr), "loss": loss}
        for name in ("lam", "epsilon", "seed", "color_space"):
            value = getattr(args, name)
            if value is not None:
                overrides[name] = value
        if args.no_gal:
            overrides["gal"] = False
        if args.no_gbl:
            overrides["gbl"] = False
        if args.reset_moments:
            overrides["reset_moments"] = True
        return replace(base, **overrides)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _check_k(k: int) -> None:
    if k < 2:
        raise ConfigError(f"--k must be >= 2, got {k}")


def resolve_images(entries: list[Path]) -> list[Path]:
    """Expand a directory (sorted by name) or a list file into image paths."""
    if len(entries) == 1 and entries[0].is_dir():
        found = sorted(p for p in entries[0].iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not found:
            raise ConfigError(f"no .png/.ppm images in {entries[0]}")
        return found
    if len(entries) == 1 and entries[0].suffix.lower() in LIST_SUFFIXES:
        lst = entries[0]
        if not lst.is_file():
            raise ConfigError(f"image list {lst} does not exist")
        paths = []
        for line in lst.read_text().splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                p = Path(line)
                paths.append(p if p.is_absolute() else lst.parent / p)
        if not paths:
            raise ConfigError(f"image list {lst} is empty")
        return paths
    for p in entries:
        if p.is_dir():
            raise ConfigError(f"{p} is a directory; pass a single directory on its own")
    return list(entries)


def gt_files_for(gt_dir: Path, stem: str) -> list[Path]:
    """Ground truths for ``stem``: ``stem.png``, ``stem_*.png`` or ``stem/*.png``."""
    found = []
    exact = gt_dir / f"{stem}.png"
    if exact.is_file():
        found.append(exact)
    found += sorted(gt_dir.glob(f"{stem}_*.png"))
    if (gt_dir / stem).is_dir():
        found += sorted((gt_dir / stem).glob("*.png"))
    return found


def _write_csv(path: Path, fields, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def _log_rows(records: list[EpochRecord]):
    return [{"task_id": r.task_id, "epoch": r.epoch, "phase": r.phase, "L_c": repr(r.l_c),
             "L_rc": repr(r.l_rc), "L_rs": repr(r.l_rs), "total": repr(r.total)}
            for r in records]


def _initial_state(args) -> ModelState:
    if args.init_model is not None:
        state = load_model(args.init_model)
        state.config = _train_config(args, state.config)
        return state
    return ModelState.initialize(_train_config(args, TrainConfig()))


def _report_failures(failures, total: int) -> None:
    if failures:
        names = ", ".join(name for name, _ in failures)
        raise _PartialFailure(f"{len(failures)} of {total} images failed: {names}")


class _PartialFailure(LNSError):
    """Outputs were written but some inputs were skipped."""


# ----------------------------------------------------------------- commands

def cmd_train(args) -> int:
    _check_k(args.k)
    state = _initial_state(args)
    paths = resolve_images(args.images)

    def report(task_id, name, image, records):
        last = records[-1]
        print(f"task {task_id} {Path(name).name}: L_c={last.l_c:.6g} L_rc={last.l_rc:.6g} "
              f"L_rs={last.l_rs:.6g} total={last.total:.6g}", flush=True)

    result = train_stream(state, [str(p) for p in paths], args.k, on_task=report)
    if not result.task_summaries:
        raise TrainingDiverged(f"no image in the stream trained successfully "
                               f"({len(result.failures)} failures)")
    save_model(result.state, args.out)
    _write_csv(args.log or args.out.with_suffix(".log.csv"), LOG_FIELDS,
               _log_rows(result.records))
    _report_failures(result.failures, len(paths))
    return 0


def _load_labels(path: Path):
    try:
        return evalkit.read_label_png(path)
    except FileNotFoundError as exc:
        raise ImageError(f"label map {path} does not exist") from exc
    except OSError as exc:
        raise ImageError(f"cannot read label map {path}: {exc}") from exc


def cmd_segment(args) -> int:
    _check_k(args.k)
    state = load_model(args.model)
    if args.color_space is not None and args.color_space != state.config.color_space:
        raise ConfigError(f"model expects color space {state.config.color_space!r}, "
                          f"got {args.color_space!r}")
    raster = load_image(args.image)
    result = pipeline.segment_raster(state, raster, args.k, args.min_size_fraction)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    evalkit.write_label_png(args.out, result.labels)
    if args.overlay is not None:
        save_png(args.overlay, pipeline.overlay(raster, result.labels))
    print(f"{args.image.name}: {result.num_segments} segments -> {args.out}")
    return 0


def _pair_eval_inputs(pred: Path, gts: list[Path]):
    """Yield ``(image_id, pred_path, [gt_paths])``."""
    if pred.is_dir():
        if len(gts) != 1 or not gts[0].is_dir():
            raise ConfigError("a prediction directory needs a single ground-truth directory")
        preds = sorted(pred.glob("*.png"))
        if not preds:
            raise ConfigError(f"no label PNGs in {pred}")
        for p in preds:
            matched = gt_files_for(gts[0], p.stem)
            if not matched:
                raise ConfigError(f"no ground truth for {p.stem} in {gts[0]}")
            yield p.stem, p, matched
        return
    if len(gts) == 1 and gts[0].is_dir():
        matched = gt_files_for(gts[0], pred.stem)
        if not matched:
            raise ConfigError(f"no ground truth for {pred.stem} in {gts[0]}")
        yield pred.stem, pred, matched
    else:
        yield pred.stem, pred, list(gts)


def cmd_eval(args) -> int:
    rows = []
    for image_id, pred_path, gt_paths in _pair_eval_inputs(args.pred, args.gt):
        pred = _load_labels(pred_path)
        report = evalkit.evaluate_multi_gt(pred, [_load_labels(g) for g in gt_paths],
                                           args.tolerance, args.f_beta)
        row = report.row(image_id)
        rows.append(row)
        print(f"{image_id}: K={row['K']} BR={row['br']:.4f} BP={row['bp']:.4f} "
              f"ASA={row['asa']:.4f} F={row['f_beta']:.4f} gt={row['chosen_gt']}")
    if len(rows) > 1:
        mean = {"image_id": "mean", "chosen_gt": ""}
        for key in ("K", "br", "bp", "asa", "f_beta"):
            mean[key] = float(np.mean([r[key] for r in rows]))
        print(f"mean: BR={mean['br']:.4f} BP={mean['bp']:.4f} ASA={mean['asa']:.4f} "
              f"F={mean['f_beta']:.4f}")
        rows.append(mean)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        evalkit.write_report_csv(args.out, rows)
    return 0


def cmd_lifelong(args) -> int:
    _check_k(args.k)
    state = _initial_state(args)
    paths = resolve_images(args.images)
    if args.gt_dir is not None and not args.gt_dir.is_dir():
        raise ConfigError(f"ground-truth directory {args.gt_dir} does not exist")
    if args.labels_dir is not None:
        args.labels_dir.mkdir(parents=True, exist_ok=True)
    stream_rows = []
    first = {}

    def after_task(task_id, name, image, records):
        stem = Path(name).stem
        seg = pipeline.segment_features(state, image, args.k)
        if args.labels_dir is not None:
            evalkit.write_label_png(args.labels_dir / f"{stem}.png", seg.labels)
        last = records[-1]
        row = {"task_id": task_id, "image_id": stem, "num_segments": seg.num_segments,
               "L_c": repr(last.l_c), "L_rc": repr(last.l_rc), "L_rs": repr(last.l_rs),
               "total": repr(last.total), "br": "", "bp": "", "asa": "", "f_beta": "",
               "chosen_gt": ""}
        if args.gt_dir is not None:
            gts = gt_files_for(args.gt_dir, stem)
            if gts:
                rep = evalkit.evaluate_multi_gt(seg.labels, [_load_labels(g) for g in gts])
                row.update(br=rep.br, bp=rep.bp, asa=rep.asa, f_beta=rep.f_beta,
                           chosen_gt=rep.chosen_gt)
            else:
                log.warning("no ground truth for %s", stem)
        stream_rows.append(row)
        msg = f"task {task_id} {stem}: {seg.num_segments} segments, L_c={last.l_c:.6g}"
        if row["asa"] != "":
            msg += f" ASA={row['asa']:.4f} BR={row['br']:.4f}"
        print(msg, flush=True)
        if not first:
            first.update(image=image, l_c=pipeline.cluster_loss_on(state, image, args.k))

    result = train_stream(state, [str(p) for p in paths], args.k, on_task=after_task)
    if not result.task_summaries:
        raise TrainingDiverged("no image in the stream trained successfully")
    save_model(result.state, args.out)
    _write_csv(args.stream_csv or args.out.with_suffix(".stream.csv"), STREAM_FIELDS,
               stream_rows)
    if args.log is not None:
        _write_csv(args.log, LOG_FIELDS, _log_rows(result.records))
    if args.reeval_first:
        final = pipeline.cluster_loss_on(state, first["image"], args.k)
        ratio = final / first["l_c"] if first["l_c"] > 0 else float("inf")
        print(f"retention first_after={first['l_c']!r} first_final={final!r} ratio={ratio!r}")
    _report_failures(result.failures, len(paths))
    return 0


COMMANDS = {"train": cmd_train, "segment": cmd_segment, "eval": cmd_eval,
            "lifelong": cmd_lifelong}


def _fail(exc: BaseException, code: int) -> int:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"lnsnet: error: {type(exc).__name__}: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        return _fail(exc, 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="lnsnet: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail(exc, 2)
    except (LNSError, OSError, ValueError) as exc:
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
