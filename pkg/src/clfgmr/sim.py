"""Closed-loop reproductions: fixed-step RK4 on fhat + u + eta."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import clf as clf_mod
from .control import ControllerConfig, closed_loop, sontag_rho
from .errors import RolloutDivergence
from .gmm import MixtureParams, gmr_velocity

BLOWUP_FACTOR = 1e6


# --- disturbances -----------------------------------------------------------
# Each disturbance maps an array of times (m,) to values (m, d); the rollout
# queries it at every RK4 stage time.

class Disturbance:
    bound = 0.0

    def values(self, times, d):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": "none"}


class NoDisturbance(Disturbance):
    def values(self, times, d):
        return np.zeros((len(times), d))


@dataclass
class UniformDisturbance(Disturbance):
    """Piecewise-constant eta, each coordinate i.i.d. U(-amplitude_i, amplitude_i)
    and redrawn every ``hold`` seconds."""

    amplitude: object
    hold: float = 0.01
    seed: int = 0

    @property
    def bound(self):
        return float(np.linalg.norm(np.atleast_1d(self.amplitude)))

    def values(self, times, d):
        amp = np.broadcast_to(np.asarray(self.amplitude, dtype=float), (d,))
        bins = np.floor(np.asarray(times) / self.hold + 1e-9).astype(int)
        table = np.random.default_rng(self.seed).uniform(-1.0, 1.0, (int(bins.max()) + 1, d))
        return table[bins] * amp

    def describe(self):
        if np.ndim(self.amplitude) == 0:
            amp = float(self.amplitude)
        else:
            amp = [float(a) for a in self.amplitude]
        return {"kind": "uniform", "amplitude": amp, "hold": self.hold, "seed": self.seed}


@dataclass
class SinusoidDisturbance(Disturbance):
    amplitude: object
    frequency: float = 1.0
    phase: float = 0.0

    @property
    def bound(self):
        return float(np.linalg.norm(np.atleast_1d(self.amplitude)))

    def values(self, times, d):
        amp = np.broadcast_to(np.asarray(self.amplitude, dtype=float), (d,))
        return np.sin(2 * np.pi * self.frequency * np.asarray(times) + self.phase)[:, None] * amp

    def describe(self):
        amp = self.amplitude if np.ndim(self.amplitude) == 0 else list(self.amplitude)
        return {"kind": "sinusoid", "amplitude": amp, "frequency": self.frequency, "phase": self.phase}


@dataclass
class CustomDisturbance(Disturbance):
    """``fn(times, rng) -> (m, d)``; ``bound`` must be supplied by the caller."""

    fn: object
    bound: float = 0.0
    seed: int = 0

    def values(self, times, d):
        return np.asarray(self.fn(np.asarray(times), np.random.default_rng(self.seed)), dtype=float)

    def describe(self):
        return {"kind": "custom", "bound": self.bound, "seed": self.seed}


# --- rollouts ---------------------------------------------------------------

@dataclass
class RolloutResult:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    lyapunov: np.ndarray
    converged: bool
    final_norm: float
    control_effort: float
    conv_tol: float
    diverged: bool = False
    singular_steps: int = 0
    disturbance: dict = field(default_factory=lambda: {"kind": "none"})

    @property
    def steps(self) -> int:
        return len(self.times) - 1


def rollout(mix: MixtureParams, clf: clf_mod.ClfParams, cfg: ControllerConfig, x0, dt: float,
            max_steps: int, disturbance: Disturbance | None = None, conv_tol: float | None = None,
            on_blowup: str = "raise") -> RolloutResult:
    """Integrate one reproduction from ``x0``; see :func:`rollout_batch`."""
    return rollout_batch(mix, clf, cfg, np.atleast_2d(np.asarray(x0, dtype=float)), dt, max_steps,
                         [disturbance], conv_tol, on_blowup)[0]


def rollout_batch(mix, clf, cfg, X0, dt, max_steps, disturbances=None, conv_tol=None,
                  on_blowup="raise"):
    """Integrate several reproductions in lock-step; each one stops on its own.

    A trajectory stops once ``|x| < conv_tol`` (default 1e-3 |x0|) or after
    ``max_steps``. ``conv_tol`` can be a scalar or one value per start. Blow-up
    (non-finite state or |x| > 1e6 max(|x0|, 1)) raises
    :class:`RolloutDivergence`, or with ``on_blowup="stop"`` just ends that
    trajectory and flags it.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    B, d = X0.shape
    if disturbances is None:
        disturbances = [None] * B
    disturbances = [NoDisturbance() if dist is None else dist for dist in disturbances]
    if len(disturbances) != B:
        raise ValueError("need one disturbance per initial state")
    norms0 = np.linalg.norm(X0, axis=1)
    tol = 1e-3 * norms0 if conv_tol is None else np.broadcast_to(np.asarray(conv_tol, float), (B,)).copy()
    limit = BLOWUP_FACTOR * np.maximum(norms0, 1.0)

    # stage times t_k, t_k + dt/2, t_k + dt
    tk = dt * np.arange(max_steps)
    stage_t = np.stack([tk, tk + 0.5 * dt, tk + dt], axis=1).ravel()
    eta = np.stack([dist.values(stage_t, d).reshape(max_steps, 3, d) if max_steps else np.zeros((0, 3, d))
                    for dist in disturbances], axis=0)

    states = np.full((max_steps + 1, B, d), np.nan)
    states[0] = X0
    stop = np.full(B, max_steps)
    diverged = np.zeros(B, dtype=bool)
    singular = np.zeros(B, dtype=int)
    active = np.linalg.norm(X0, axis=1) >= tol
    active |= norms0 == 0          # the origin stays put for the full horizon
    stop[~active] = 0

    def f(X, idx):
        out, _, sing = closed_loop(mix, clf, cfg, X, on_singular="zero")
        singular[idx] += sing
        return out

    x = X0.copy()
    for k in range(max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xa = x[idx]
        e = eta[idx, k]
        k1 = f(xa, idx) + e[:, 0]
        k2 = f(xa + 0.5 * dt * k1, idx) + e[:, 1]
        k3 = f(xa + 0.5 * dt * k2, idx) + e[:, 1]
        k4 = f(xa + dt * k3, idx) + e[:, 2]
        xn = xa + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        nrm = np.linalg.norm(xn, axis=1)
        bad = ~np.isfinite(nrm) | (nrm > limit[idx])
        if np.any(bad):
            if on_blowup == "raise":
                raise RolloutDivergence(k + 1, f"trajectory {int(idx[np.argmax(bad)])} blew up")
            diverged[idx[bad]] = True
            stop[idx[bad]] = k
            active[idx[bad]] = False
        good = idx[~bad]
        x[good] = xn[~bad]
        states[k + 1, good] = xn[~bad]
        done = good[nrm[~bad] < tol[good]]
        stop[done] = k + 1
        active[done] = False

    results = []
    for b in range(B):
        S = states[:stop[b] + 1, b]
        t = dt * np.arange(S.shape[0])
        _, U, _ = closed_loop(mix, clf, cfg, S, on_singular="zero")
        V = clf_mod.lyapunov(clf, S)
        fn = float(np.linalg.norm(S[-1]))
        results.append(RolloutResult(
            times=t, states=S, controls=U, lyapunov=np.atleast_1d(V),
            converged=bool((fn < tol[b] or fn == 0.0) and not diverged[b]),
            final_norm=fn,
            control_effort=float(np.trapezoid(np.linalg.norm(U, axis=1), t)) if len(t) > 1 else 0.0,
            conv_tol=float(tol[b]), diverged=bool(diverged[b]), singular_steps=int(singular[b]),
            disturbance=disturbances[b].describe()))
    return results


# --- residual set and decay ---------------------------------------------------

@dataclass
class ResidualReport:
    threshold: float
    margin: float
    first_entry_time: float | None
    tail_inside: bool
    tail_max_rho: float
    tail_max_radius: float


def residual_check(result: RolloutResult, clf: clf_mod.ClfParams, mix: MixtureParams,
                   cfg: ControllerConfig, kappa: float | None = None, margin: float = 1.5,
                   tail_fraction: float = 0.2) -> ResidualReport:
    """Locate the trajectory relative to Omega = {x : rho(x) <= 2 kappa / rho0}.

    rho is the energy-rate function rho0 sqrt(a^2 + |b|^4) of the model; the set
    is the same whichever controller produced the trajectory, so different
    controllers can be compared against it. ``kappa`` defaults to
    ``cfg.kappa``, or to 2 |eta|_max^2 of the recorded disturbance when that
    is zero.
    """
    if kappa is None:
        kappa = cfg.kappa
        if kappa == 0 and result.disturbance.get("kind") != "none":
            amp = np.atleast_1d(result.disturbance.get("amplitude", result.disturbance.get("bound", 0.0)))
            if np.size(amp) == 1:
                amp = np.full(result.states.shape[1], float(amp[0]))
            kappa = 2.0 * float(np.sum(np.asarray(amp) ** 2))
    threshold = 2.0 * kappa / cfg.rho0
    S = result.states
    b = clf_mod.gradient(clf, S)
    a = np.sum(b * gmr_velocity(mix, S), axis=1)
    r = sontag_rho(cfg.rho0, a, np.atleast_2d(b))
    inside = r <= threshold
    first = float(result.times[np.argmax(inside)]) if np.any(inside) else None
    start = int(np.floor((1 - tail_fraction) * len(r)))
    tail = r[start:]
    tail_max = float(tail.max())
    ok = tail_max <= margin * threshold or (kappa == 0 and result.converged)
    return ResidualReport(threshold, margin, first, bool(ok), tail_max,
                          float(np.linalg.norm(S[start:], axis=1).max()))


def decay_rate(result: RolloutResult, min_steps: int = 10) -> float:
    """Least-squares slope of log V(x(t)) over the samples where V is positive."""
    V = np.asarray(result.lyapunov, dtype=float)
    ok = np.isfinite(V) & (V > np.finfo(float).tiny)
    bad = np.flatnonzero(~ok)
    n = int(bad[0]) if bad.size else len(V)      # prefix before V hits numerical zero
    if n < min_steps:
        raise ValueError(f"need at least {min_steps} samples with V > 0, got {n}")
    slope, _ = np.polyfit(result.times[:n], np.log(V[:n]), 1)
    return float(slope)


# --- export -------------------------------------------------------------------

def write_trajectory_csv(result: RolloutResult, path) -> None:
    d = result.states.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(d)] + [f"u{i + 1}" for i in range(d)] + ["V"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, x, u, v in zip(result.times, result.states, result.controls, result.lyapunov):
            w.writerow([repr(float(t))] + [repr(float(a)) for a in x] + [repr(float(a)) for a in u]
                       + [repr(float(v))])


def write_manifest(entries: list, path) -> None:
    Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n")
