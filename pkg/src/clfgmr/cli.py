"""Command line: ``clfgmr {synth,train,rollout,evaluate}``.

Every command resolves its configuration (defaults < --config file <
CLFGMR_* environment < flags) before doing any work and writes a snapshot
of it next to its outputs. Exit codes: 0 ok, 2 bad arguments, 3 bad data,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import experiments, metrics
from .dataset import SHAPES, add_noise, load_csv, save_csv, synth_shape
from .errors import ClfgmrError
from .learn import TrainResult, initial_params, train, write_trace_csv
from .modelio import load_model, save_model
from .sim import UniformDisturbance, rollout_batch, write_manifest, write_trajectory_csv
from .svg import write_overlay

log = logging.getLogger("clfgmr")

# flag dest -> config key
DATASET_FLAGS = {
    "shape": "dataset.shape", "data": "dataset.path", "m": "dataset.m", "n": "dataset.n",
    "jitter": "dataset.jitter", "seed": "dataset.seed", "data_noise": "dataset.noise",
    "noise_seed": "dataset.noise_seed", "snap_tol": "dataset.snap_tol",
}
LEARN_FLAGS = {
    "k": "learn.k", "l": "learn.l", "max_iter": "learn.max_iter", "j_threshold": "learn.j_threshold",
    "f0_weight": "learn.f0_weight", "gradient": "learn.gradient", "mu_spread": "learn.mu_spread",
    "train_seed": "learn.seed",
}
CONTROL_FLAGS = {"variant": "control.variant", "rho0": "control.rho0", "kappa0": "control.kappa0",
                 "kappa": "control.kappa"}
SIM_FLAGS = {"dt": "sim.dt", "max_steps": "sim.max_steps", "noise": "sim.noise", "hold": "sim.hold",
             "sim_seed": "sim.seed", "x0": "sim.x0", "svg": "sim.svg"}
EVAL_FLAGS = {"shapes": "eval.shapes", "variants": "eval.variants", "noise_levels": "eval.noise_levels",
              "rho0s": "eval.rho0s", "seeds": "eval.seeds", "model_dir": "eval.model_dir"}


class UsageError(ClfgmrError):
    exit_code = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p):
    p.add_argument("--config", help="flat JSON file of dotted keys")
    p.add_argument("--out", dest="out_dir", help="output directory (output.dir)")


def _add_dataset(p, with_noise=True):
    g = p.add_argument_group("dataset")
    g.add_argument("--shape", choices=SHAPES)
    g.add_argument("--data", help="demonstration CSV (overrides --shape)")
    g.add_argument("--m", type=int)
    g.add_argument("--n", type=int)
    g.add_argument("--jitter", type=float)
    g.add_argument("--seed", type=int, help="synthesis seed")
    if with_noise:
        g.add_argument("--data-noise", type=float, help="uniform noise added to the demos, fraction of range")
        g.add_argument("--noise-seed", type=int)
    g.add_argument("--snap-tol", type=float)


def _add_learn(p):
    g = p.add_argument_group("learning")
    g.add_argument("--k", type=int)
    g.add_argument("--l", type=int)
    g.add_argument("--max-iter", type=int)
    g.add_argument("--j-threshold", type=float)
    g.add_argument("--f0-weight", type=float)
    g.add_argument("--gradient", choices=("analytic", "central", "forward"))
    g.add_argument("--mu-spread", type=float)
    g.add_argument("--train-seed", type=int)


def _add_control(p):
    g = p.add_argument_group("controller")
    g.add_argument("--variant", choices=("sontag", "classk", "off"))
    g.add_argument("--rho0", type=float)
    g.add_argument("--kappa0", type=float)
    g.add_argument("--kappa", type=float)


def _add_sim(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--dt", type=float, help="RK4 step (default: demo sample interval / 5)")
    g.add_argument("--max-steps", type=int)
    g.add_argument("--noise", type=float, help="uniform disturbance amplitude, fraction of velocity range")
    g.add_argument("--hold", type=float, help="disturbance redraw interval in seconds")
    g.add_argument("--sim-seed", type=int)
    g.add_argument("--x0", action="append", help="extra start 'x1,x2,...' (use --x0=-1,2 for a leading minus)")
    g.add_argument("--svg", action="store_const", const=True, help="also write overlay.svg (2-D only)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clfgmr", description="GMR velocity fields stabilized by a learned CLF.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic demonstration CSV")
    _add_common(s)
    _add_dataset(s)

    t = sub.add_parser("train", help="EM initialization, then joint learning with the controller in the loop")
    _add_common(t)
    _add_dataset(t)
    _add_learn(t)
    _add_control(t)

    r = sub.add_parser("rollout", help="closed-loop reproductions of a trained model")
    _add_common(r)
    r.add_argument("--model", required=True)
    _add_dataset(r, with_noise=False)
    _add_control(r)
    _add_sim(r)

    e = sub.add_parser("evaluate", help="SEA / MSE / effort / convergence grid")
    _add_common(e)
    _add_dataset(e)
    _add_learn(e)
    _add_control(e)
    _add_sim(e)
    g = e.add_argument_group("grid")
    g.add_argument("--shapes", help="comma list, e.g. C,G,W,Sine,S")
    g.add_argument("--variants", help="comma list of sontag,classk,off")
    g.add_argument("--noise-levels", help="comma list of disturbance levels")
    g.add_argument("--rho0s", help="comma list of gains")
    g.add_argument("--seeds", type=int, help="disturbance seeds per start")
    g.add_argument("--model-dir", help="reuse DIR/<shape>/model.json instead of training")
    return p


def _flag_values(args, *tables):
    out = {}
    for table in tables:
        for dest, key in table.items():
            if hasattr(args, dest):
                out[key] = getattr(args, dest)
    if getattr(args, "out_dir", None) is not None:
        out["output.dir"] = args.out_dir
    return out


def _resolve(args, *tables, base=None):
    file_values = dict(base or {})
    if args.config:
        file_values.update(cfgmod.read_config_file(args.config))
    return cfgmod.resolve(file_values, _flag_values(args, *tables))


def _out_dir(cfg) -> Path:
    path = Path(cfg["output.dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dataset(cfg, fallback=None):
    if cfg["dataset.path"]:
        dset = load_csv(cfg["dataset.path"], cfg["dataset.snap_tol"])
    elif fallback is not None:
        dset = load_csv(fallback, cfg["dataset.snap_tol"])
    else:
        dset = synth_shape(cfg["dataset.shape"], cfg["dataset.m"], cfg["dataset.n"], cfg["dataset.jitter"],
                           cfg["dataset.seed"])
    return add_noise(dset, cfg["dataset.noise"], cfg["dataset.noise_seed"])


def cmd_synth(args) -> int:
    cfg = _resolve(args, DATASET_FLAGS)
    out = _out_dir(cfg)
    dset = _dataset(cfg)
    save_csv(dset, out / "demos.csv")
    cfgmod.write_snapshot(cfg, out / "config.json")
    print(f"wrote {out / 'demos.csv'} (M={dset.m}, N={dset.n}, d={dset.d})")
    return 0


def _train_into(dset, cfg, out: Path):
    lcfg = cfgmod.learn_config(cfg)
    ccfg = cfgmod.controller_config(cfg)
    res = train(dset, lcfg, ccfg)
    meta = {"eps_pd": res.eps_pd, "final_j": res.final_j, "initial_j": res.initial_j}
    save_model(out / "model.json", res.mixture, res.clf, ccfg, meta)
    save_csv(dset, out / "demos.csv")
    write_trace_csv(res, out / "trace.csv")
    summary = {"initial_j": res.initial_j, "final_j": res.final_j, "iterations": res.iterations,
               "status": res.status, "wall_time_s": res.wall_time}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return res


def cmd_train(args) -> int:
    cfg = _resolve(args, DATASET_FLAGS, LEARN_FLAGS, CONTROL_FLAGS)
    out = _out_dir(cfg)
    cfgmod.write_snapshot(cfg, out / "config.json")
    dset = _dataset(cfg)
    res = _train_into(dset, cfg, out)
    print(f"J {res.initial_j:.6g} -> {res.final_j:.6g} in {res.iterations} iterations "
          f"({res.wall_time:.1f} s); model: {out / 'model.json'}")
    return 0


def _parse_x0(text, d):
    try:
        x = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"--x0 expects comma separated numbers, got {text!r}") from None
    if x.shape != (d,):
        raise UsageError(f"--x0 {text!r} has {x.size} entries, model is {d}-D")
    return x


def cmd_rollout(args) -> int:
    mix, clf, stored, _ = load_model(args.model)
    base = {}
    if stored is not None:
        base = {f"control.{k}": v for k, v in asdict(stored).items()}
    cfg = _resolve(args, DATASET_FLAGS, CONTROL_FLAGS, SIM_FLAGS, base=base)
    out = _out_dir(cfg)
    cfgmod.write_snapshot(cfg, out / "config.json")
    beside = Path(args.model).with_name("demos.csv")
    explicit = args.data is not None or args.shape is not None or cfg["dataset.path"]
    dset = _dataset(cfg, fallback=None if explicit or not beside.is_file() else beside)
    if dset.d != mix.d:
        raise UsageError(f"dataset is {dset.d}-D but the model is {mix.d}-D")
    ccfg = cfgmod.controller_config(cfg)

    starts = [dset.starts[i] for i in range(dset.m)] + [_parse_x0(s, dset.d) for s in cfg["sim.x0"]]
    labels = [f"demo{i}" for i in range(dset.m)] + [f"x0_{j}" for j in range(len(cfg["sim.x0"]))]
    dt = cfg["sim.dt"] or experiments.default_dt(dset)
    level = cfg["sim.noise"]
    dists = None
    if level > 0:
        amp = experiments.disturbance_amplitude(dset, level)
        dists = [UniformDisturbance(amp, hold=cfg["sim.hold"], seed=cfg["sim.seed"] + i) for i in range(len(starts))]
    results = rollout_batch(mix, clf, ccfg, np.array(starts), dt, cfg["sim.max_steps"], dists, on_blowup="stop")

    entries = []
    for i, (label, x0, res) in enumerate(zip(labels, starts, results)):
        name = f"traj_{i:03d}.csv"
        write_trajectory_csv(res, out / name)
        entries.append({"file": name, "start": label, "x0": [float(v) for v in x0], "dt": dt,
                        "steps": res.steps, "converged": res.converged, "diverged": res.diverged,
                        "final_norm": res.final_norm, "control_effort": res.control_effort,
                        "disturbance": res.disturbance, "controller": asdict(ccfg)})
    write_manifest(entries, out / "manifest.json")
    if cfg["sim.svg"]:
        if dset.d == 2:
            write_overlay(out / "overlay.svg", list(dset.positions), [r.states for r in results], clf)
        else:
            log.warning("SVG overlay skipped: data is %d-D", dset.d)
    ok = sum(r.converged for r in results)
    print(f"{ok}/{len(results)} rollouts converged; outputs in {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve(args, DATASET_FLAGS, LEARN_FLAGS, CONTROL_FLAGS, SIM_FLAGS, EVAL_FLAGS)
    out = _out_dir(cfg)
    cfgmod.write_snapshot(cfg, out / "config.json")
    lcfg = cfgmod.learn_config(cfg)
    ccfg = cfgmod.controller_config(cfg, variant="sontag")
    seeds = range(cfg["sim.seed"], cfg["sim.seed"] + cfg["eval.seeds"])
    rows = []
    for shape in cfg["eval.shapes"]:
        if shape not in SHAPES:
            raise UsageError(f"unknown shape {shape!r}; choose from {SHAPES}")
        model_path = Path(cfg["eval.model_dir"]) / shape / "model.json" if cfg["eval.model_dir"] else None
        if model_path is not None and model_path.is_file():
            mix, clf, _, _ = load_model(model_path)
            dset = load_csv(model_path.with_name("demos.csv"))
            trained = TrainResult(mix, clf, float("nan"), float("nan"))
        else:
            shape_cfg = dict(cfg, **{"dataset.shape": shape, "dataset.path": None})
            dset = _dataset(shape_cfg)
            shape_out = out / shape
            shape_out.mkdir(exist_ok=True)
            trained = _train_into(dset, shape_cfg, shape_out)
        em_mix, _, _ = initial_params(dset, lcfg)
        model = experiments.ShapeModel(shape, dset, trained, em_mix)
        log.info("evaluating %s", shape)
        rows += experiments.evaluate_model(model, cfg["eval.variants"], cfg["eval.noise_levels"],
                                           cfg["eval.rho0s"], seeds, cfg["sim.dt"], cfg["sim.max_steps"],
                                           hold=cfg["sim.hold"], kappa0=ccfg.kappa0)
    metrics.write_report_csv(rows, out / "report.csv")
    table = metrics.format_table(rows)
    (out / "report.txt").write_text(table + "\n")
    print(table)
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "rollout": cmd_rollout, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"clfgmr: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:          # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ClfgmrError as exc:
        print(f"clfgmr: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"clfgmr: numerical error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"clfgmr: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
