#!/usr/bin/env python3
"""Sweep one trade-off weight over {0, 0.2, 0.5, 0.8, 1.0} while holding the
others fixed, mirroring the trade-off ablation grid at toy scale."""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from smdl import synth
from smdl.core import ObjectiveWeights, SelectionConfig
from smdl.trainer import TrainerConfig, train

GRID = (0.0, 0.2, 0.5, 0.8, 1.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--which", type=int, choices=[1, 2, 3, 4], default=2,
                    help="which trade-off weight to sweep")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=10)
    args = ap.parse_args()

    spec = synth.BlobSpec(n_train=1000, n_test=500, seed=0)
    train_ds, test_ds = synth.make_blobs(spec)
    sel = SelectionConfig(partitions=10)

    print(f"lambda{args.which} {'mean_acc':>9} {'final_acc':>9}")
    for value in GRID:
        weights = ObjectiveWeights(**{f"lambda{args.which}": value})
        if all(getattr(weights, f"lambda{i}") == 0 for i in range(1, 5)):
            print(f"{value:<8} (skipped: all weights zero)")
            continue
        means, finals = [], []
        for seed in range(args.seeds):
            cfg = TrainerConfig(
                epochs=args.epochs, batch_size=32, sampler="smdl", seed=seed
            )
            res = train(train_ds, test_ds, cfg, sel, weights)
            means.append(np.mean([r.test_accuracy for r in res.reports]))
            finals.append(res.reports[-1].test_accuracy)
        print(f"{value:<8} {np.mean(means):>9.4f} {np.mean(finals):>9.4f}")


if __name__ == "__main__":
    main()
