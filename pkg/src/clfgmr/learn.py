"""Joint learning of the mixture and the energy function with the controller in the loop.

The feasible set (simplex priors, SPD covariances, P_l + P_l^T > 0) is
eliminated by reparameterization, so a plain quasi-Newton method can run on
an unconstrained vector:

* priors = softmax(logits)
* Sigma_k = C C^T + eps I with C lower triangular, log-diagonal stored
* P_l = C C^T + (eps / 2) I + W, W skew-symmetric (W = 0 for P0)
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import softmax

from . import gmm
from .clf import ClfParams
from .control import ControllerConfig, closed_loop
from .dataset import DemonstrationSet
from .errors import NumericalError


GRADIENT_MODES = ("analytic", "central", "forward")


@dataclass(frozen=True)
class LearnConfig:
    """``gradient``: "analytic" (autodiff of the same objective) or finite
    differences, "central" / "forward"."""

    k: int = 5
    l: int = 3
    max_iter: int = 3000
    j_threshold: float = 1e-4
    f0_weight: float = 1.0
    fd_step: float = 1e-6
    gradient: str = "analytic"
    em_max_iter: int = 200
    em_tol: float = 1e-8
    mu_spread: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"K must be >= 1, got {self.k}")
        if self.l < 0:
            raise ValueError(f"L must be >= 0, got {self.l}")
        if not self.j_threshold > 0:
            raise ValueError("j_threshold must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if self.gradient not in GRADIENT_MODES:
            raise ValueError(f"gradient must be one of {GRADIENT_MODES}, got {self.gradient!r}")


def _tri(n):
    return np.tril_indices(n)


def _chol_to_vec(C):
    n = C.shape[0]
    C = C.copy()
    C[np.diag_indices(n)] = np.log(np.diag(C))
    return C[_tri(n)]


def _vec_to_chol(v, n):
    C = np.zeros((n, n))
    C[_tri(n)] = v
    C[np.diag_indices(n)] = np.exp(np.diag(C))
    return C


def _offset_chol(S, offset):
    """Cholesky factor of S - offset I, clipped just above zero when S sits on the floor."""
    R = S - offset * np.eye(S.shape[0])
    try:
        return np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (R + R.T))
        tiny = 1e-12 * max(1.0, float(np.abs(w).max()))
        return np.linalg.cholesky((V * np.maximum(w, tiny)) @ V.T)


@dataclass(frozen=True)
class ParamLayout:
    """Slices of the unconstrained vector for given K, L, d and eigenvalue floor."""

    k: int
    l: int
    d: int
    eps_pd: float

    @property
    def floor(self) -> float:
        # a hair above eps_pd so computed eigenvalues still clear it after rounding
        return self.eps_pd * (1 + 1e-6)

    @property
    def sizes(self):
        D = 2 * self.d
        return {
            "logits": self.k,
            "means": self.k * D,
            "cov": self.k * D * (D + 1) // 2,
            "psym": (self.l + 1) * self.d * (self.d + 1) // 2,
            "skew": self.l * self.d * (self.d - 1) // 2,
            "mu": self.l * self.d,
        }

    @property
    def size(self) -> int:
        return sum(self.sizes.values())

    def _split(self, theta):
        out, i = {}, 0
        for name, n in self.sizes.items():
            out[name] = theta[i:i + n]
            i += n
        return out

    def encode(self, mix: gmm.MixtureParams, clf: ClfParams) -> np.ndarray:
        D, d = 2 * self.d, self.d
        logp = np.log(mix.priors)
        parts = [logp - logp.mean(), mix.means.ravel()]
        parts += [_chol_to_vec(_offset_chol(S, self.floor)) for S in mix.covariances]
        mats = [clf.P0, *clf.P]
        parts += [_chol_to_vec(_offset_chol(0.5 * (P + P.T), self.floor / 2)) for P in mats]
        su = np.triu_indices(d, 1)
        parts += [(0.5 * (P - P.T))[su] for P in clf.P]
        parts.append(clf.mu.ravel())
        theta = np.concatenate([np.atleast_1d(p) for p in parts])
        assert theta.size == self.size, (theta.size, self.size)
        return theta

    def decode(self, theta):
        D, d = 2 * self.d, self.d
        p = self._split(np.asarray(theta, dtype=float))
        priors = softmax(p["logits"])
        means = p["means"].reshape(self.k, D)
        nc = D * (D + 1) // 2
        covs = np.empty((self.k, D, D))
        for k in range(self.k):
            C = _vec_to_chol(p["cov"][k * nc:(k + 1) * nc], D)
            covs[k] = C @ C.T + self.floor * np.eye(D)
        ns = d * (d + 1) // 2
        nw = d * (d - 1) // 2
        su = np.triu_indices(d, 1)
        mats = []
        for l in range(self.l + 1):
            C = _vec_to_chol(p["psym"][l * ns:(l + 1) * ns], d)
            P = C @ C.T + 0.5 * self.floor * np.eye(d)
            if l > 0:
                W = np.zeros((d, d))
                W[su] = p["skew"][(l - 1) * nw:l * nw]
                P = P + W - W.T
            mats.append(P)
        mix = gmm.MixtureParams(priors, means, covs)
        clf = ClfParams(mats[0], np.array(mats[1:]).reshape(self.l, d, d), p["mu"].reshape(self.l, d))
        return mix, clf


def objective(theta, layout: ParamLayout, dset: DemonstrationSet, ccfg: ControllerConfig,
              f0_weight: float = 0.0) -> float:
    """Half mean squared velocity error of the corrected field over all samples.

    ``f0_weight`` adds ``f0_weight * |fhat(0)|^2`` (the control vanishes at the
    target by convention).
    """
    mix, clf = layout.decode(theta)
    return _objective_params(mix, clf, dset, ccfg, f0_weight)


def _objective_params(mix, clf, dset, ccfg, f0_weight=0.0):
    X, Y = dset.x, dset.xdot
    field_, _, _ = closed_loop(mix, clf, ccfg, X, on_singular="zero")
    res = np.sum((Y - field_) ** 2, axis=1)
    if not np.all(np.isfinite(res)):
        i = int(np.flatnonzero(~np.isfinite(res))[0])
        raise NumericalError(f"non-finite objective at sample (m={i // dset.n}, n={i % dset.n})")
    J = 0.5 * float(np.mean(res))
    if f0_weight:
        f0 = gmm.gmr_velocity(mix, np.zeros(dset.d))
        J += f0_weight * float(f0 @ f0)
    return J


def fd_gradient(fun, theta, step=1e-6, mode="central", f0=None):
    theta = np.asarray(theta, dtype=float)
    g = np.empty_like(theta)
    h = step * (1.0 + np.abs(theta))
    if mode == "forward" and f0 is None:
        f0 = fun(theta)
    for i in range(theta.size):
        e = theta.copy()
        e[i] += h[i]
        fp = fun(e)
        if mode == "central":
            e[i] = theta[i] - h[i]
            g[i] = (fp - fun(e)) / (2 * h[i])
        else:
            g[i] = (fp - f0) / h[i]
    return g


def analytic_value_and_grad(layout: ParamLayout, dset: DemonstrationSet, ccfg: ControllerConfig,
                            f0_weight: float = 0.0):
    """theta -> (J, dJ/dtheta) as numpy values, via JAX autodiff."""
    from ._autodiff import make_objective

    vg = make_objective(layout, dset, ccfg, f0_weight)

    def call(theta):
        j, g = vg(np.asarray(theta, dtype=float))
        return float(j), np.asarray(g, dtype=float)

    return call


@dataclass
class TrainResult:
    mixture: gmm.MixtureParams
    clf: ClfParams
    initial_j: float
    final_j: float
    trace: list = field(default_factory=list)   # (iter, best J, grad norm, evaluations)
    status: str = ""
    wall_time: float = 0.0
    eps_pd: float = 0.0

    @property
    def iterations(self) -> int:
        return max(len(self.trace) - 1, 0)


class _Stop(Exception):
    pass


def initial_params(dset: DemonstrationSet, lcfg: LearnConfig):
    joint = dset.joint()
    eps = gmm.default_eps_pd(joint)
    init = gmm.kmeans_init(joint, lcfg.k, lcfg.seed, eps_pd=eps)
    mix = gmm.em_fit(init, joint, lcfg.em_max_iter, lcfg.em_tol, eps_pd=eps)
    return mix, ClfParams.identity(dset.d, lcfg.l), eps


def _spread_offsets(clf0: ClfParams, dset: DemonstrationSet, lcfg: LearnConfig) -> ClfParams:
    # identical terms receive identical gradients forever; seeded offsets tell them apart
    if clf0.L < 2 or lcfg.mu_spread == 0:
        return clf0
    rng = np.random.default_rng(lcfg.seed)
    scale = lcfg.mu_spread * float(np.max(dset.position_range()))
    return ClfParams(clf0.P0, clf0.P, clf0.mu + scale * rng.standard_normal(clf0.mu.shape))


def train(dset: DemonstrationSet, lcfg: LearnConfig, ccfg: ControllerConfig) -> TrainResult:
    """EM-initialized mixture plus identity CLF, then L-BFGS on the objective.

    Returns the best parameters seen. Stops once J drops below
    ``lcfg.j_threshold`` or after ``lcfg.max_iter`` iterations.
    """
    t0 = time.perf_counter()
    mix0, clf0, eps = initial_params(dset, lcfg)
    j0 = _objective_params(mix0, clf0, dset, ccfg, lcfg.f0_weight)
    result = TrainResult(mix0, clf0, j0, j0, [(0, j0, float("nan"), 1)], eps_pd=eps)
    if lcfg.max_iter == 0 or j0 < lcfg.j_threshold:
        result.status = "no iterations requested" if lcfg.max_iter == 0 else "threshold met"
        result.wall_time = time.perf_counter() - t0
        return result

    layout = ParamLayout(lcfg.k, lcfg.l, dset.d, eps)
    theta0 = layout.encode(mix0, _spread_offsets(clf0, dset, lcfg))
    best = {"j": j0, "theta": None}
    evals = [0]

    def fun(theta):
        evals[0] += 1
        try:
            j = objective(theta, layout, dset, ccfg, lcfg.f0_weight)
        except NumericalError:
            return np.inf
        if j < best["j"]:
            best["j"], best["theta"] = j, theta.copy()
        return j

    if lcfg.gradient == "analytic":
        vg = analytic_value_and_grad(layout, dset, ccfg, lcfg.f0_weight)

        def fun_and_grad(theta):
            evals[0] += 1
            j, g = vg(theta)
            if not np.isfinite(j) or not np.all(np.isfinite(g)):
                return np.inf, np.zeros_like(theta)
            if j < best["j"]:
                best["j"], best["theta"] = j, theta.copy()
            last_grad[0] = float(np.linalg.norm(g))
            return j, g
    else:
        def fun_and_grad(theta):
            j = fun(theta)
            g = fd_gradient(fun, theta, lcfg.fd_step, lcfg.gradient, f0=j)
            last_grad[0] = float(np.linalg.norm(g))
            return j, g

    last_grad = [float("nan")]

    def callback(intermediate_result):
        j = float(intermediate_result.fun)
        result.trace.append((len(result.trace), best["j"], last_grad[0], evals[0]))
        if j > 10 * j0:
            raise _Stop("diverged")
        if best["j"] < lcfg.j_threshold:
            raise _Stop("threshold met")

    try:
        res = minimize(fun_and_grad, theta0, jac=True, method="L-BFGS-B", callback=callback,
                       options={"maxiter": lcfg.max_iter, "maxfun": 50 * lcfg.max_iter + 100})
        result.status = str(res.message)
    except _Stop as stop:
        result.status = str(stop)
    if best["theta"] is not None:
        result.mixture, result.clf = layout.decode(best["theta"])
        result.final_j = best["j"]
    result.wall_time = time.perf_counter() - t0
    return result


TRACE_COLUMNS = ("iter", "J", "grad_norm", "evals")


def write_trace_csv(result: TrainResult, path) -> None:
    """One row per outer iteration; wall time is left to the run summary so the
    file is reproducible byte for byte."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for it, j, g, ev in result.trace:
            w.writerow([int(it), repr(float(j)), repr(float(g)), int(ev)])
