#!/usr/bin/env python3
"""Print the parameter/MAC table for all variants, plus the ablation costs.

Usage: python scripts/reproduce_costs.py [--input-size 224]
"""

import argparse

from mvformer.analysis import cost_report
from mvformer.mixer import ABLATION_MODES
from mvformer.model import model_config


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--input-size", type=int, default=224)
    args = parser.parse_args()

    print(f"variant costs at {args.input_size}x{args.input_size}")
    print(f"{'variant':<8}{'params':>14}{'params (M)':>12}{'macs':>16}{'macs (G)':>10}")
    for preset in ("xT", "T", "S", "B"):
        rep = cost_report(model_config(preset), args.input_size)
        print(
            f"{preset:<8}{rep.total_params:>14,}{rep.total_params / 1e6:>12.2f}"
            f"{rep.total_macs:>16,}{rep.total_macs / 1e9:>10.2f}"
        )

    print("\nxT mixer ablations")
    base = cost_report(model_config("xT"), args.input_size)
    print(f"{'ablation':<22}{'params (M)':>12}{'macs (G)':>10}{'vs full':>12}")
    print(f"{'(full)':<22}{base.total_params / 1e6:>12.3f}{base.total_macs / 1e9:>10.3f}{'':>12}")
    for mode in ABLATION_MODES:
        rep = cost_report(model_config("xT", ablation=mode), args.input_size)
        delta = rep.total_params - base.total_params
        print(
            f"{mode:<22}{rep.total_params / 1e6:>12.3f}{rep.total_macs / 1e9:>10.3f}"
            f"{delta:>+12,}"
        )


if __name__ == "__main__":
    main()
