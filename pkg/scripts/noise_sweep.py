"""Disturbance sweep: tail violations of the residual set, Sontag vs ClassK.

    python3 scripts/noise_sweep.py [--shapes W,S] [--levels 0.01,0.05] [--seeds 20]
"""
import argparse

from clfgmr import experiments
from clfgmr.control import ControllerConfig
from clfgmr.dataset import SHAPES


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--shapes", default=",".join(SHAPES))
    ap.add_argument("--levels", default="0.01,0.05")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--steps", type=int, default=4000)
    ap.add_argument("--kappa0", type=float, default=1.0)
    args = ap.parse_args()
    levels = [float(v) for v in args.levels.split(",")]

    print(f"{'shape':<6} {'variant':<7} {'level':>6} {'violations':>10} {'effort':>8} {'tail |x|':>9}")
    for shape in args.shapes.split(","):
        m = experiments.fit_shape(shape)
        for variant in ("sontag", "classk"):
            cfg = ControllerConfig(variant=variant, kappa0=args.kappa0)
            for level in levels:
                t = experiments.disturbed_trial(m.mixture, m.clf, cfg, m.dset, level, range(args.seeds),
                                                max_steps=args.steps)
                print(f"{shape:<6} {variant:<7} {level:>6.3f} {t.violations:>6}/{len(t.reports):<3} "
                      f"{t.median_effort():>8.4f} {t.median_tail_radius():>9.2e}")


if __name__ == "__main__":
    main()
