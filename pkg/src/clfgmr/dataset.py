"""Demonstration sets: CSV ingest/export, synthetic handwriting-like shapes, noise."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError, SchemaError

SHAPES = ("C", "G", "W", "Sine", "S")
DEFAULT_SNAP_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DemonstrationSet:
    """M demonstrations of N (position, velocity, time) samples in d dimensions.

    Arrays are read-only: ``positions`` and ``velocities`` are (M, N, d),
    ``times`` is (M, N). The target is the origin.
    """

    positions: np.ndarray
    velocities: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        pos, vel, t = _frozen(self.positions), _frozen(self.velocities), _frozen(self.times)
        if pos.ndim != 3 or pos.shape != vel.shape or t.shape != pos.shape[:2]:
            raise SchemaError(
                f"inconsistent shapes: positions {pos.shape}, velocities {vel.shape}, times {t.shape}")
        if pos.shape[0] < 1 or pos.shape[1] < 2 or pos.shape[2] < 1:
            raise DataError(f"need M >= 1, N >= 2, d >= 1; got {pos.shape}")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "times", t)

    @property
    def m(self) -> int:
        return self.positions.shape[0]

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def d(self) -> int:
        return self.positions.shape[2]

    @property
    def x(self) -> np.ndarray:
        """All positions stacked as (M*N, d)."""
        return self.positions.reshape(-1, self.d)

    @property
    def xdot(self) -> np.ndarray:
        return self.velocities.reshape(-1, self.d)

    def joint(self) -> np.ndarray:
        """(M*N, 2d) array of stacked [x, xdot] rows."""
        return np.hstack([self.x, self.xdot])

    @property
    def starts(self) -> np.ndarray:
        return self.positions[:, 0, :].copy()

    @property
    def duration(self) -> float:
        return float(np.mean(self.times[:, -1] - self.times[:, 0]))

    @property
    def sample_interval(self) -> float:
        return self.duration / (self.n - 1)

    def position_range(self) -> np.ndarray:
        return np.ptp(self.x, axis=0)

    def equals(self, other: "DemonstrationSet") -> bool:
        return (np.array_equal(self.positions, other.positions)
                and np.array_equal(self.velocities, other.velocities)
                and np.array_equal(self.times, other.times))


def finite_difference_velocities(positions, times):
    """Central differences in the interior, one-sided at the endpoints."""
    positions = np.asarray(positions, dtype=float)
    times = np.asarray(times, dtype=float)
    return np.gradient(positions, times, axis=0, edge_order=1)


def _parse_header(header):
    cols = [c.strip() for c in header]
    if len(cols) < 3 or cols[0] != "demo" or cols[1] != "t":
        raise SchemaError(f"header must start with 'demo,t', got {header}")
    xs = [c for c in cols[2:] if c.startswith("x")]
    dxs = [c for c in cols[2:] if c.startswith("dx")]
    d = len(xs)
    if d == 0 or xs != [f"x{i + 1}" for i in range(d)]:
        raise SchemaError(f"position columns must be x1..xd, got {cols[2:]}")
    if dxs and dxs != [f"dx{i + 1}" for i in range(d)]:
        raise SchemaError(f"velocity columns must be dx1..dx{d}, got {dxs}")
    if len(cols) != 2 + d + len(dxs):
        raise SchemaError(f"unexpected columns in header {cols}")
    return d, bool(dxs)


def load_csv(path, snap_tol: float = DEFAULT_SNAP_TOL) -> DemonstrationSet:
    """Read ``demo,t,x1..xd[,dx1..dxd]`` rows and translate each demo to end at 0.

    Velocities are used as given; files without ``dx`` columns get
    finite-difference velocities. Shorter demos are padded by holding the final
    sample at rest.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"demonstration file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        d, has_vel = _parse_header(header)
        width = 2 + d * (2 if has_vel else 1)
        groups: dict[str, list] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise SchemaError(f"row {lineno}: expected {width} columns, got {len(row)}")
            try:
                vals = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
            if not np.all(np.isfinite(vals)):
                raise ParseError(lineno, "non-finite value")
            groups.setdefault(row[0].strip(), []).append(vals)
    if not groups:
        raise DataError(f"{path}: no samples")

    demos = []
    for key in sorted(groups, key=_demo_sort_key):
        arr = np.array(groups[key])
        arr = arr[np.argsort(arr[:, 0], kind="stable")]
        if arr.shape[0] < 2:
            raise DataError(f"demo {key!r} has {arr.shape[0]} sample(s); need at least 2")
        t, pos = arr[:, 0], arr[:, 1:1 + d]
        vel = arr[:, 1 + d:] if has_vel else finite_difference_velocities(pos, t)
        demos.append((t, pos, vel))
    return _assemble(demos, snap_tol)


def _demo_sort_key(key):
    try:
        return (0, float(key), key)
    except ValueError:
        return (1, 0.0, key)


def _assemble(demos, snap_tol):
    n = max(len(t) for t, _, _ in demos)
    P, V, T = [], [], []
    for t, pos, vel in demos:
        pos = pos - pos[-1]
        pad = n - len(t)
        if pad:
            step = float(np.median(np.diff(t))) if len(t) > 1 else 1.0
            t = np.concatenate([t, t[-1] + step * np.arange(1, pad + 1)])
            pos = np.vstack([pos, np.zeros((pad, pos.shape[1]))])
            vel = np.vstack([vel, np.zeros((pad, vel.shape[1]))])
        P.append(pos)
        V.append(vel)
        T.append(t)
    P = np.array(P)
    finals = np.linalg.norm(P[:, -1, :], axis=1)
    if finals.max() > snap_tol:
        raise DataError(f"final positions not at target within {snap_tol}")
    P[:, -1, :] = 0.0
    return DemonstrationSet(P, np.array(V), np.array(T))


def save_csv(dset: DemonstrationSet, path) -> None:
    """Write in the ingest schema with round-trip-exact float formatting."""
    d = dset.d
    header = ["demo", "t"] + [f"x{i + 1}" for i in range(d)] + [f"dx{i + 1}" for i in range(d)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for m in range(dset.m):
            for k in range(dset.n):
                w.writerow([m, repr(float(dset.times[m, k]))]
                           + [repr(float(v)) for v in dset.positions[m, k]]
                           + [repr(float(v)) for v in dset.velocities[m, k]])


# --- synthetic shapes -------------------------------------------------------
# Each base curve c(s), s in [0, 1], returns (c, dc/ds); translated so c(1) = 0.

def _sine(s):
    w = 3 * np.pi
    p = np.stack([s - 1.0, 0.4 * (1 - s) * np.sin(w * s)], axis=-1)
    dp = np.stack([np.ones_like(s), 0.4 * (-np.sin(w * s) + (1 - s) * w * np.cos(w * s))], axis=-1)
    return p, dp


def _arc(center, r, theta, dtheta):
    p = np.asarray(center) + r * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    dp = (r * dtheta)[..., None] * np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    return p, dp


def _c(s):
    span = 4 * np.pi / 3
    theta = np.pi / 3 + span * s
    return _arc((0.0, 0.0), 0.5, theta, np.full_like(s, span))


def _s(s):
    # two 240-degree arcs of radius r meeting tangentially at the origin
    r, span = 0.3, 4 * np.pi / 3
    first = s < 0.5
    th1 = np.pi / 6 + span * 2 * s
    th2 = np.pi / 2 - span * (2 * s - 1)
    p1, dp1 = _arc((0.0, r), r, th1, np.full_like(s, 2 * span))
    p2, dp2 = _arc((0.0, -r), r, th2, np.full_like(s, -2 * span))
    return np.where(first[:, None], p1, p2), np.where(first[:, None], dp1, dp2)


def _w(s):
    w = 4 * np.pi
    p = np.stack([1.2 * (s - 1.0), 0.3 * (np.cos(w * s) - 1.0)], axis=-1)
    dp = np.stack([np.full_like(s, 1.2), -0.3 * w * np.sin(w * s)], axis=-1)
    return p, dp


def _g(s):
    # circular sweep from 60 deg through 390 deg, radius pulled in over the last 30%
    R, span = 0.5, 11 * np.pi / 6
    theta = np.pi / 3 + span * s
    u = np.clip((s - 0.7) / 0.3, 0.0, 1.0)
    h = 3 * u ** 2 - 2 * u ** 3
    dh = np.where((s > 0.7), (6 * u - 6 * u ** 2) / 0.3, 0.0)
    r = R * (1 - 0.6 * h)
    dr = -0.6 * R * dh
    e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    de = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    return r[:, None] * e, dr[:, None] * e + (r * span)[:, None] * de


_CURVES = {"C": _c, "G": _g, "W": _w, "Sine": _sine, "S": _s}


def synth_shape(shape: str, m: int, n: int, jitter: float = 0.0, seed: int = 0,
                duration: float = 1.0) -> DemonstrationSet:
    """Sample ``m`` warped copies of a closed-form planar shape ending at the origin.

    Time runs over [0, duration] with phase s = (1 - cos(pi t / T)) / 2, so
    each demo starts and ends at rest. Each demo adds the warp
    ``jitter * E * (1 - s) * (a0 + a1 sin(pi s) + a2 sin(2 pi s))`` per axis,
    with E the curve extent and a ~ N(0, 1); velocities are exact derivatives.
    """
    if shape not in _CURVES:
        raise ValueError(f"unknown shape {shape!r}; choose from {SHAPES}")
    if m < 1 or n < 2:
        raise ValueError(f"need m >= 1 and n >= 2, got m={m}, n={n}")
    if not 0 <= jitter < 1:
        raise ValueError(f"jitter must be in [0, 1), got {jitter}")
    rng = np.random.default_rng(seed)
    curve = _CURVES[shape]
    t = np.linspace(0.0, duration, n)
    s = 0.5 * (1 - np.cos(np.pi * t / duration))
    s[-1] = 1.0
    ds_dt = 0.5 * np.pi / duration * np.sin(np.pi * t / duration)
    ds_dt[-1] = 0.0
    c, dc = curve(s)
    end, _ = curve(np.array([1.0]))
    c = c - end[0]
    extent = float(np.max(np.ptp(c, axis=0)))

    basis = np.stack([np.ones_like(s), np.sin(np.pi * s), np.sin(2 * np.pi * s)], axis=-1)
    dbasis = np.stack([np.zeros_like(s), np.pi * np.cos(np.pi * s), 2 * np.pi * np.cos(2 * np.pi * s)], axis=-1)
    P, V = [], []
    for _ in range(m):
        a = rng.standard_normal((3, 2))
        g = basis @ a
        warp = jitter * extent * (1 - s)[:, None] * g
        dwarp = jitter * extent * (-g + (1 - s)[:, None] * (dbasis @ a))
        P.append(c + warp)
        V.append((dc + dwarp) * ds_dt[:, None])
    P = np.array(P)
    P[:, -1, :] = 0.0
    return DemonstrationSet(P, np.array(V), np.tile(t, (m, 1)))


def add_noise(dset: DemonstrationSet, level: float, seed: int = 0) -> DemonstrationSet:
    """Add i.i.d. uniform noise of half-width ``level * range`` per coordinate.

    Position and velocity ranges are taken per dimension over the whole set.
    The final sample of every demonstration (the target anchor) is untouched.
    """
    if not 0 <= level <= 1:
        raise ValueError(f"noise level must be in [0, 1], got {level}")
    if level == 0:
        return dset
    rng = np.random.default_rng(seed)
    shape = dset.positions.shape
    pos_amp = level * np.ptp(dset.x, axis=0)
    vel_amp = level * np.ptp(dset.xdot, axis=0)
    dp = rng.uniform(-1.0, 1.0, shape) * pos_amp
    dv = rng.uniform(-1.0, 1.0, shape) * vel_amp
    dp[:, -1, :] = 0.0
    dv[:, -1, :] = 0.0
    return DemonstrationSet(dset.positions + dp, dset.velocities + dv, dset.times)
