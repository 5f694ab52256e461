"""Lifelong retention on synthetic streams, with GAL/GBL ablations and a held-out control.

For each seed a 5-task stream of random Voronoi images is learned in order.
The cluster loss of task 1 is measured right after task 1 and again at the
end of the stream; the same is done for an image never trained on, which
separates forgetting from drift that affects every image alike.

    python scripts/retention_ablation.py --seeds 5 --csv retention.csv
"""

import argparse
import csv
from dataclasses import replace

import numpy as np

from lnsnet import pipeline, synthetic
from lnsnet.imagefeat import prepare_image
from lnsnet.trainer import ModelState, TrainConfig, train_stream

VARIANTS = {"gal+gbl": {}, "no-gal": {"gal": False}, "no-gbl": {"gbl": False},
            "neither": {"gal": False, "gbl": False}}


def run(seed, size, tasks, k, overrides):
    images = [prepare_image(synthetic.random_task(size, size, 100 * seed + t)[0])
              for t in range(tasks)]
    held_out = prepare_image(synthetic.random_task(size, size, 100 * seed + 99)[0])
    state = ModelState.initialize(replace(TrainConfig(seed=42 + seed), **overrides))
    after_first = {}

    def hook(task_id, name, image, records):
        if task_id == 1:
            after_first["task1"] = pipeline.cluster_loss_on(state, image, k)
            after_first["held_out"] = pipeline.cluster_loss_on(state, held_out, k)

    train_stream(state, None, k, images=images, on_task=hook)
    return (pipeline.cluster_loss_on(state, images[0], k) / after_first["task1"],
            pipeline.cluster_loss_on(state, held_out, k) / after_first["held_out"])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--tasks", type=int, default=5)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--k", type=int, default=16)
    ap.add_argument("--variants", nargs="+", default=list(VARIANTS), choices=list(VARIANTS))
    ap.add_argument("--csv")
    args = ap.parse_args()

    rows = []
    for variant in args.variants:
        ratios = [run(s, args.size, args.tasks, args.k, VARIANTS[variant])
                  for s in range(args.seeds)]
        for s, (task1, held) in enumerate(ratios):
            rows.append({"variant": variant, "seed": s, "task1_ratio": task1,
                         "held_out_ratio": held})
        t1 = np.mean([r[0] for r in ratios])
        ho = np.mean([r[1] for r in ratios])
        print(f"{variant:8s} task-1 ratio {t1:.3f}   held-out ratio {ho:.3f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)


if __name__ == "__main__":
    main()
