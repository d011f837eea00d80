"""Reproduction fidelity (swept error area, velocity MSE) and control effort."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .control import closed_loop


def resample_arclength(traj, p: int) -> np.ndarray:
    """``p`` points equally spaced in arc length along a polyline (n, d)."""
    traj = np.asarray(traj, dtype=float)
    seg = np.linalg.norm(np.diff(traj, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return np.repeat(traj[:1], p, axis=0)
    keep = np.concatenate([[True], seg > 0])     # np.interp needs increasing abscissae
    target = np.linspace(0.0, s[-1], p)
    return np.stack([np.interp(target, s[keep], traj[keep, j]) for j in range(traj.shape[1])], axis=1)


def _tri_area(p, q, r):
    u, v = q - p, r - p
    uu = np.sum(u * u, axis=-1)
    vv = np.sum(v * v, axis=-1)
    uv = np.sum(u * v, axis=-1)
    return 0.5 * np.sqrt(np.maximum(uu * vv - uv ** 2, 0.0))


def swept_error_area(demo, repro) -> float:
    """Sum of quadrilateral areas between corresponding arc-length samples.

    Both paths are resampled to P = min(len) points. Each quadrilateral
    (demo_i, demo_i+1, repro_i+1, repro_i) is split into two triangles along
    each diagonal and the two splits are averaged, which keeps the measure
    symmetric in its arguments and valid for d >= 3.
    """
    demo = np.asarray(demo, dtype=float)
    repro = np.asarray(repro, dtype=float)
    if len(demo) < 2 or len(repro) < 2:
        raise ValueError("trajectories need at least 2 points")
    p = min(len(demo), len(repro))
    A = resample_arclength(demo, p)
    B = resample_arclength(repro, p)
    a0, a1, b0, b1 = A[:-1], A[1:], B[:-1], B[1:]
    split1 = _tri_area(a0, a1, b1) + _tri_area(a0, b1, b0)
    split2 = _tri_area(a0, a1, b0) + _tri_area(a1, b1, b0)
    return float(np.sum(0.5 * (split1 + split2)))


def control_effort(result) -> float:
    """Trapezoidal integral of |u(t)| over the rollout."""
    if len(result.times) < 2:
        return 0.0
    return float(np.trapezoid(np.linalg.norm(result.controls, axis=1), result.times))


def velocity_mse(mix, clf, cfg, dset) -> float:
    """Mean |xdot - (fhat + u)|^2 over all demonstration samples."""
    field_, _, _ = closed_loop(mix, clf, cfg, dset.x, on_singular="zero")
    return float(np.mean(np.sum((dset.xdot - field_) ** 2, axis=1)))


@dataclass
class EvalRow:
    shape: str
    variant: str
    noise: float
    rho0: float
    sea: float
    velocity_mse: float
    control_effort: float
    convergence: float

    def __post_init__(self):
        for name in ("sea", "velocity_mse", "control_effort"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 <= self.convergence <= 1:
            raise ValueError("convergence fraction must lie in [0, 1]")


COLUMNS = [f.name for f in fields(EvalRow)]


def write_report_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([v if isinstance(v, str) else repr(float(v)) for v in asdict(row).values()])


def format_table(rows) -> str:
    head = f"{'shape':<6} {'variant':<8} {'noise':>6} {'rho0':>5} {'SEA':>10} {'vel MSE':>10} {'effort':>10} {'conv':>5}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r.shape:<6} {r.variant:<8} {r.noise:>6.3f} {r.rho0:>5.2f} {r.sea:>10.4g} "
                     f"{r.velocity_mse:>10.4g} {r.control_effort:>10.4g} {r.convergence:>5.2f}")
    return "\n".join(lines)
