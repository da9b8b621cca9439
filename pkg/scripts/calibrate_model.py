"""Recompute the committed c_dyn default and show where each scheme lands.

Usage: python scripts/calibrate_model.py [--active-cores 48] [--order 64]
"""

import argparse
from dataclasses import replace

from flipbench import flipmodel
from flipbench.flipmodel import PowerModel, SimConfig


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--active-cores", type=int, default=48)
    p.add_argument("--order", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    base = PowerModel()
    c_dyn = flipmodel.calibrate_c_dyn(base)
    model = replace(base, c_dyn=c_dyn)
    print(f"CALIBRATED_C_DYN = {c_dyn!r}")
    if c_dyn != flipmodel.CALIBRATED_C_DYN:
        print(f"  committed value differs: {flipmodel.CALIBRATED_C_DYN!r}")
    print(f"anchor alpha_floor, 1 core: {flipmodel.steady_state_frequency(model, model.alpha_floor, 1)} kHz")
    print(f"anchor alpha 1, 16 cores:   {flipmodel.steady_state_frequency(model, 1.0, 16)} kHz")

    specs = flipmodel.default_schemes(args.seed) + flipmodel.mask_schemes(seed=args.seed)
    cfg = SimConfig(model=model, schemes=specs, active_cores=args.active_cores, matrix_order=args.order)
    print(f"\n{'scheme':>16} {'alpha':>8} {'kHz':>9} {'duration_s':>12}")
    for spec in specs:
        pr = flipmodel.predict_scheme(cfg, spec)
        print(f"{spec.canonical:>16} {pr.alpha:8.4f} {pr.frequency_khz:9d} {pr.duration_s:12.3e}")


if __name__ == "__main__":
    main()
