#!/usr/bin/env python3
"""End-to-end desk experiment: train the micro model, evaluate, dump alphas.

Usage: python scripts/train_micro.py --out runs/micro [--epochs 30] [--seed 0]
"""

import argparse
import os

from mvformer.analysis import dump_alpha_profile
from mvformer.checkpoint import load_checkpoint
from mvformer.data import SyntheticDataset
from mvformer.model import build_model
from mvformer.training import (
    TrainConfig,
    evaluate,
    resolve_data_spec,
    resolve_model_config,
    run_training,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    warmup = min(2, max(args.epochs - 1, 0))
    cfg = TrainConfig(epochs=args.epochs, warmup_epochs=warmup, seed=args.seed)
    print(f"seed: {cfg.seed}")
    history = run_training(cfg, args.out)
    final = history[-1]
    print(
        f"final epoch {final.epoch}: train_loss={final.train_loss:.4f} "
        f"train_acc={final.train_acc:.4f} val_acc={final.val_acc:.4f}"
    )

    model = build_model(resolve_model_config(cfg), seed=cfg.seed)
    load_checkpoint(os.path.join(args.out, "best.ckpt"), model)
    dataset = SyntheticDataset(resolve_data_spec(cfg))
    best_acc = evaluate(model, dataset, dataset.val_indices, cfg.batch_size)
    print(f"best checkpoint val_acc: {best_acc:.4f}")

    alphas_path = os.path.join(args.out, "alphas.csv")
    dump_alpha_profile(model).to_csv(alphas_path)
    print(f"view-weight profile: {alphas_path}")


if __name__ == "__main__":
    main()
