"""Train every synthetic shape and compare against the GMR-only baseline.

    python3 scripts/run_shapes.py [--shapes C,S] [--max-iter 3000] [--out runs/shapes]
"""
import argparse
import json
import time
from pathlib import Path

import numpy as np

from clfgmr import experiments
from clfgmr.control import ControllerConfig
from clfgmr.dataset import SHAPES
from clfgmr.learn import LearnConfig
from clfgmr.modelio import save_model
from clfgmr.sim import decay_rate


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--shapes", default=",".join(SHAPES))
    ap.add_argument("--max-iter", type=int, default=LearnConfig().max_iter)
    ap.add_argument("--out", default=None, help="save model.json per shape here")
    args = ap.parse_args()

    off = ControllerConfig(variant="off")
    print(f"{'shape':<6} {'J0':>9} {'J':>9} {'SEA':>8} {'SEA gmr':>9} {'conv':>5} {'gmr conv':>8} {'slope':>7} {'s':>5}")
    for shape in args.shapes.split(","):
        t0 = time.perf_counter()
        m = experiments.fit_shape(shape, LearnConfig(max_iter=args.max_iter))
        reps = experiments.reproduce(m.mixture, m.clf, ControllerConfig(), m.dset)
        base = experiments.reproduce(m.gmr_only, m.clf, off, m.dset)
        slope = max(decay_rate(r) for r in reps)
        print(f"{shape:<6} {m.trained.initial_j:>9.4g} {m.trained.final_j:>9.4g} "
              f"{experiments.mean_sea(m.dset, reps):>8.4f} {experiments.mean_sea(m.dset, base):>9.4g} "
              f"{np.mean([r.converged for r in reps]):>5.2f} {np.mean([r.converged for r in base]):>8.2f} "
              f"{slope:>7.2f} {time.perf_counter() - t0:>5.1f}")
        if args.out:
            d = Path(args.out) / shape
            d.mkdir(parents=True, exist_ok=True)
            save_model(d / "model.json", m.mixture, m.clf, ControllerConfig(),
                       {"final_j": m.trained.final_j, "initial_j": m.trained.initial_j})
            (d / "trace.json").write_text(json.dumps(m.trained.trace))


if __name__ == "__main__":
    main()
