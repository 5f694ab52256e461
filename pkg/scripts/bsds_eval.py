"""Lifelong training and evaluation over a BSDS500-style directory.

Expects ``<root>/images/*.png`` and ground truths ``<root>/gt/<stem>_<i>.png``
(16-bit label maps, one per annotator). Each image is learned in order, then
segmented at every requested K and scored against its best ground truth.

    python scripts/bsds_eval.py /data/bsds500/test --k 100 200 --csv bsds.csv
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from lnsnet import evalkit, pipeline
from lnsnet.cli import gt_files_for
from lnsnet.trainer import ModelState, TrainConfig, train_stream


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("root", type=Path)
    ap.add_argument("--k", type=int, nargs="+", default=[100])
    ap.add_argument("--train-k", type=int, default=100, help="K used while training")
    ap.add_argument("--limit", type=int, default=0)
    ap.add_argument("--csv")
    args = ap.parse_args()

    images = sorted((args.root / "images").glob("*.png"))
    if args.limit:
        images = images[:args.limit]
    state = ModelState.initialize(TrainConfig())
    rows = []

    def after(task_id, name, image, records):
        stem = Path(name).stem
        gts = [evalkit.read_label_png(p) for p in gt_files_for(args.root / "gt", stem)]
        if not gts:
            print(f"{stem}: no ground truth, skipped")
            return
        for k in args.k:
            seg = pipeline.segment_features(state, image, k)
            rows.append(evalkit.evaluate_multi_gt(seg.labels, gts).row(stem) | {"K": k})
        print(f"[{task_id}/{len(images)}] {stem}: ASA@{args.k[0]} {rows[-len(args.k)]['asa']:.4f}")

    train_stream(state, [str(p) for p in images], args.train_k, on_task=after)
    for k in args.k:
        sel = [r for r in rows if r["K"] == k]
        print(f"K={k}: mean ASA {np.mean([r['asa'] for r in sel]):.4f}  "
              f"BR {np.mean([r['br'] for r in sel]):.4f}  BP {np.mean([r['bp'] for r in sel]):.4f}"
              f"  F {np.mean([r['f_beta'] for r in sel]):.4f}  ({len(sel)} images)")
    if args.csv:
        evalkit.write_report_csv(args.csv, rows)


if __name__ == "__main__":
    main()
