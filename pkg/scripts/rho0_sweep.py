"""Gain trade-off on a model trained from noisy demonstrations.

Median control effort should rise with rho0 and the median tail radius fall.

    python3 scripts/rho0_sweep.py [--shape Sine] [--data-noise 0.05] [--levels 0.01,0.05]
"""
import argparse

from clfgmr import experiments
from clfgmr.control import ControllerConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--shape", default="Sine")
    ap.add_argument("--data-noise", type=float, default=0.05)
    ap.add_argument("--levels", default="0.01,0.05")
    ap.add_argument("--gains", default="0.5,1,2,4")
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()

    dset = experiments.bench_set(args.shape, noise=args.data_noise, noise_seed=0)
    m = experiments.fit_shape(args.shape, dset=dset)
    print(f"{'level':>6} {'rho0':>5} {'effort':>9} {'tail |x|':>10} {'inside':>7}")
    for level in (float(v) for v in args.levels.split(",")):
        for g in (float(v) for v in args.gains.split(",")):
            t = experiments.disturbed_trial(m.mixture, m.clf, ControllerConfig(rho0=g), dset, level,
                                            range(args.seeds))
            print(f"{level:>6.3f} {g:>5.2f} {t.median_effort():>9.4f} {t.median_tail_radius():>10.3e} "
                  f"{t.inside_fraction:>7.2f}")


if __name__ == "__main__":
    main()
