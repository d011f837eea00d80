"""Asymmetric bi-quadratic energy function

    V(x) = x'P0 x + sum_l [sigma_l(x) >= 0] sigma_l(x)^2,   sigma_l(x) = x'P_l (x - mu_l)

with its gradient and (piecewise) Hessian. All evaluators accept a single
point of shape (d,) or a batch of shape (n, d).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class ClfParams:
    P0: np.ndarray
    P: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        P0 = np.array(self.P0, dtype=float)
        d = P0.shape[0]
        P = np.array(self.P, dtype=float).reshape(-1, d, d)
        mu = np.array(self.mu, dtype=float).reshape(-1, d)
        if P0.shape != (d, d) or P.shape[0] != mu.shape[0]:
            raise ValueError(f"inconsistent CLF shapes P0 {P0.shape}, P {P.shape}, mu {mu.shape}")
        for a in (P0, P, mu):
            a.setflags(write=False)
        object.__setattr__(self, "P0", P0)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "mu", mu)

    @property
    def d(self) -> int:
        return self.P0.shape[0]

    @property
    def L(self) -> int:
        return self.P.shape[0]

    @classmethod
    def identity(cls, d: int, L: int) -> "ClfParams":
        """Identity matrices and null offsets: the learning start point."""
        return cls(np.eye(d), np.tile(np.eye(d), (L, 1, 1)), np.zeros((L, d)))

    def check(self, eps_pd: float = 0.0) -> None:
        if not np.allclose(self.P0, self.P0.T, atol=1e-12, rtol=0):
            raise ValueError("P0 must be symmetric")
        for l, Pl in enumerate([self.P0, *self.P]):
            lo = np.linalg.eigvalsh(Pl + Pl.T).min()
            if lo <= 0 or lo < eps_pd:
                raise ValueError(f"P_{l} + P_{l}^T min eigenvalue {lo} below {eps_pd}")


def _batch(x):
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def _sigmas(params: ClfParams, X):
    """(n, L) values of sigma_l and (n, L, d) gradients."""
    Px = np.einsum("lij,nj->nli", params.P, X)                       # P_l x
    Pmu = np.einsum("lij,lj->li", params.P, params.mu)               # P_l mu_l
    sig = np.einsum("ni,nli->nl", X, Px) - X @ Pmu.T
    PtX = np.einsum("lji,nj->nli", params.P, X)                      # P_l^T x
    grad = Px + PtX - Pmu[None]
    return sig, grad


def sigma(params: ClfParams, l: int, x):
    """sigma_l(x) for 1-based term index ``l``."""
    if not 1 <= l <= params.L:
        raise IndexError(f"term index {l} outside 1..{params.L}")
    X, single = _batch(x)
    Pl, ml = params.P[l - 1], params.mu[l - 1]
    out = np.einsum("ni,ij,nj->n", X, Pl, X - ml)
    return out[0] if single else out


def lyapunov(params: ClfParams, x):
    X, single = _batch(x)
    v = np.einsum("ni,ij,nj->n", X, params.P0, X)
    if params.L:
        sig, _ = _sigmas(params, X)
        v = v + np.sum(np.where(sig >= 0, sig, 0.0) ** 2, axis=1)
    return v[0] if single else v


def value_and_gradient(params: ClfParams, X):
    """Batched (V, grad V) for (n, d) input."""
    X = np.asarray(X, dtype=float)
    v = np.einsum("ni,ij,nj->n", X, params.P0, X)
    g = X @ (params.P0 + params.P0.T).T
    if params.L:
        sig, dsig = _sigmas(params, X)
        act = np.where(sig >= 0, sig, 0.0)
        v = v + np.sum(act ** 2, axis=1)
        g = g + 2 * np.einsum("nl,nli->ni", act, dsig)
    return v, g


def gradient(params: ClfParams, x):
    X, single = _batch(x)
    _, g = value_and_gradient(params, X)
    return g[0] if single else g


def hessian(params: ClfParams, x):
    """Hessian off the switching surfaces; terms with sigma_l >= 0 count as active."""
    X, single = _batch(x)
    H = np.broadcast_to(params.P0 + params.P0.T, (X.shape[0], params.d, params.d)).copy()
    if params.L:
        sig, dsig = _sigmas(params, X)
        on = (sig >= 0).astype(float)
        Ps = params.P + np.transpose(params.P, (0, 2, 1))
        H += 2 * np.einsum("nl,nli,nlj->nij", on, dsig, dsig)
        H += 2 * np.einsum("nl,nl,lij->nij", on, sig, Ps)
    return H[0] if single else H
