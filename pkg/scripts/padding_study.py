"""ASA/BR of one 50-epoch task on the four-color image across init seeds,
for zero versus replicate padding in the embedder.

    python scripts/padding_study.py --seeds 21
"""

import argparse
from dataclasses import replace

import numpy as np

from lnsnet import evalkit, pipeline, synthetic
from lnsnet.fem import FemConfig
from lnsnet.imagefeat import prepare_image
from lnsnet.trainer import ModelState, TrainConfig, train_task


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=21)
    ap.add_argument("--k", type=int, default=16)
    ap.add_argument("--color-space", default="lab", choices=("lab", "rgb"))
    args = ap.parse_args()

    raster, gt = synthetic.four_color_image(64, 64, 0.02, seed=0)
    image = prepare_image(raster, args.color_space)
    for mode in ("zeros", "replicate"):
        asa, br = [], []
        for s in range(args.seeds):
            cfg = replace(TrainConfig(seed=42 + s, color_space=args.color_space),
                          fem=FemConfig(padding_mode=mode))
            state = ModelState.initialize(cfg)
            train_task(state, image, args.k)
            rep = evalkit.evaluate(pipeline.segment_features(state, image, args.k).labels, gt)
            asa.append(rep.asa)
            br.append(rep.br)
        asa = np.array(asa)
        print(f"{mode:9s} mean ASA {asa.mean():.3f}  ASA>=0.95 in {np.sum(asa >= 0.95)}/{len(asa)}"
              f"  mean BR {np.mean(br):.3f}")


if __name__ == "__main__":
    main()
