#!/usr/bin/env python3
"""Train the micro model once per normalization (mvn, bn, ln, in) and collect
the per-epoch loss curves into one CSV for plotting.

Usage: python scripts/compare_norms.py --out runs/norms [--epochs 20] [--seed 0]
"""

import argparse
import dataclasses
import os

from mvformer.training import TrainConfig, run_training

KINDS = ("mvn", "bn", "ln", "in")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    # 64x64 inputs keep stage-4 maps at 2x2: the plain instance-norm variant
    # needs at least two spatial positions per map.
    warmup = min(2, max(args.epochs - 1, 0))
    base = TrainConfig(epochs=args.epochs, warmup_epochs=warmup, seed=args.seed, image_size=64)
    curves = {}
    for kind in KINDS:
        cfg = dataclasses.replace(base, norm=kind)
        out_dir = os.path.join(args.out, kind)
        print(f"training block_norm={kind} -> {out_dir}")
        history = run_training(cfg, out_dir)
        curves[kind] = history
        print(f"  final: loss={history[-1].train_loss:.4f} val_acc={history[-1].val_acc:.4f}")

    combined = os.path.join(args.out, "loss_curves.csv")
    with open(combined, "w", encoding="utf-8", newline="\n") as f:
        f.write("epoch," + ",".join(f"{k}_train_loss" for k in KINDS) + "\n")
        for i in range(args.epochs):
            row = [str(curves[KINDS[0]][i].epoch)]
            row += [f"{curves[k][i].train_loss:.8g}" for k in KINDS]
            f.write(",".join(row) + "\n")
    print(f"combined loss curves: {combined}")


if __name__ == "__main__":
    main()
