"""Gaussian mixture over joint (x, xdot) data and the GMR velocity field."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import logsumexp

from .errors import NumericalError

LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """K Gaussians over the 2d-dimensional joint space, [x, xdot] ordering.

    priors (K,), means (K, 2d), covariances (K, 2d, 2d).
    """

    priors: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        pri = np.array(self.priors, dtype=float).reshape(-1)
        mu = np.array(self.means, dtype=float)
        cov = np.array(self.covariances, dtype=float)
        k = pri.shape[0]
        if mu.ndim != 2 or mu.shape[0] != k or mu.shape[1] % 2:
            raise ValueError(f"means must be (K, 2d), got {mu.shape} for K={k}")
        if cov.shape != (k, mu.shape[1], mu.shape[1]):
            raise ValueError(f"covariances must be (K, 2d, 2d), got {cov.shape}")
        for a in (pri, mu, cov):
            a.setflags(write=False)
        object.__setattr__(self, "priors", pri)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)

    @property
    def k(self) -> int:
        return self.priors.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1] // 2

    @property
    def mu_x(self):
        return self.means[:, :self.d]

    @property
    def mu_xdot(self):
        return self.means[:, self.d:]

    @property
    def sigma_x(self):
        return self.covariances[:, :self.d, :self.d]

    @property
    def sigma_xdot_x(self):
        return self.covariances[:, self.d:, :self.d]

    @cached_property
    def _marginal(self):
        chols, logdets = [], []
        for k, S in enumerate(self.sigma_x):
            try:
                L = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                raise NumericalError(f"Sigma_x of component {k} is not positive definite") from None
            if np.min(np.diag(L)) <= 1e-150 or not np.all(np.isfinite(L)):
                raise NumericalError(f"Sigma_x of component {k} is numerically singular")
            chols.append(L)
            logdets.append(2 * np.sum(np.log(np.diag(L))))
        return np.array(chols), np.array(logdets)

    @cached_property
    def _whiten(self) -> np.ndarray:
        """(K, d, d) inverse Cholesky factors of the position covariances."""
        chols, _ = self._marginal
        eye = np.eye(self.d)
        return np.array([solve_triangular(L, eye, lower=True) for L in chols])

    @cached_property
    def regression(self) -> np.ndarray:
        """(K, d, d) matrices Sigma_xdot_x (Sigma_x)^-1, via Cholesky solves."""
        chols, _ = self._marginal
        out = np.empty((self.k, self.d, self.d))
        for k in range(self.k):
            # A Sigma_x = Sigma_xdot_x  <=>  Sigma_x A^T = Sigma_x_xdot
            out[k] = cho_solve((chols[k], True), self.sigma_xdot_x[k].T).T
        return out

    def check(self, eps_pd: float = 0.0, atol: float = 1e-12) -> None:
        """Raise ValueError unless priors lie on the simplex and covariances are SPD >= eps_pd."""
        if abs(self.priors.sum() - 1.0) > atol:
            raise ValueError(f"priors sum to {self.priors.sum()!r}")
        if self.k > 1 and not np.all((self.priors > 0) & (self.priors < 1)):
            raise ValueError("priors must lie strictly in (0, 1)")
        for k, S in enumerate(self.covariances):
            if not np.allclose(S, S.T, atol=1e-12, rtol=0):
                raise ValueError(f"covariance {k} is not symmetric")
            lo = np.linalg.eigvalsh(S).min()
            if lo < eps_pd or lo <= 0:
                raise ValueError(f"covariance {k} min eigenvalue {lo} below {eps_pd}")


def variance_scale(data) -> float:
    return float(np.mean(np.var(np.asarray(data, dtype=float), axis=0)))


def default_eps_pd(data) -> float:
    return 1e-6 * max(variance_scale(data), 1e-12)


def floor_covariance(S, eps):
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    if w.min() >= eps:
        return S
    S = (V * np.maximum(w, eps)) @ V.T
    return 0.5 * (S + S.T)


def _as_data(data):
    if hasattr(data, "joint"):
        return data.joint()
    return np.asarray(data, dtype=float)


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return np.array(centers)


def _sq_dists(X, C):
    return (np.sum(X ** 2, axis=1)[:, None] - 2 * X @ C.T + np.sum(C ** 2, axis=1)[None, :])


def kmeans_init(data, k: int, seed: int = 0, max_iter: int = 300,
                eps_pd: float | None = None) -> MixtureParams:
    """K-means++ seeding then Lloyd iterations on the joint points.

    Clusters that go empty are re-seeded at the point farthest from its current
    centroid, so the result stays deterministic per seed.
    """
    X = _as_data(data)
    n = X.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    eps = default_eps_pd(X) if eps_pd is None else eps_pd
    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, k, rng)
    labels = None
    for _ in range(max_iter):
        new = np.argmin(_sq_dists(X, C), axis=1)
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = np.argmax(np.sum((X - C[new]) ** 2, axis=1))
            C[j] = X[far]
            new[far] = j
            counts = np.bincount(new, minlength=k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        C = np.array([X[labels == j].mean(axis=0) for j in range(k)])

    counts = np.bincount(labels, minlength=k)
    priors = counts / n
    covs = []
    for j in range(k):
        pts = X[labels == j]
        diff = pts - C[j]
        covs.append(floor_covariance(diff.T @ diff / len(pts), eps))
    return MixtureParams(priors, C, np.array(covs))


def _joint_log_density(params: MixtureParams, X):
    """(n, K) log pi_k N(x; mu_k, Sigma_k) over the full joint space."""
    n, D = X.shape
    out = np.empty((n, params.k))
    for k in range(params.k):
        try:
            L = np.linalg.cholesky(params.covariances[k])
        except np.linalg.LinAlgError:
            raise NumericalError(f"covariance of component {k} is not positive definite") from None
        z = solve_triangular(L, (X - params.means[k]).T, lower=True)
        out[:, k] = (np.log(params.priors[k]) - 0.5 * np.sum(z ** 2, axis=0)
                     - np.sum(np.log(np.diag(L))) - 0.5 * D * LOG_2PI)
    return out


def log_likelihood(params: MixtureParams, data) -> float:
    """Mean per-sample log-likelihood of the joint mixture density."""
    X = _as_data(data)
    return float(np.mean(logsumexp(_joint_log_density(params, X), axis=1)))


def em_fit(init: MixtureParams, data, max_iter: int = 200, tol: float = 1e-8,
           eps_pd: float | None = None, history: list | None = None) -> MixtureParams:
    """EM on the joint mixture density starting from ``init``.

    Stops when the mean log-likelihood gains less than ``tol``. If ``history``
    is given, the mean log-likelihood of every visited parameter set is
    appended to it.
    """
    X = _as_data(data)
    n = X.shape[0]
    eps = default_eps_pd(X) if eps_pd is None else eps_pd
    params = init
    logp = _joint_log_density(params, X)
    prev = float(np.mean(logsumexp(logp, axis=1)))
    if not np.isfinite(prev):
        raise NumericalError("non-finite log-likelihood at iteration 0")
    if history is not None:
        history.append(prev)
    for it in range(1, max_iter + 1):
        resp = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
        nk = resp.sum(axis=0) + 10 * np.finfo(float).tiny
        means = (resp.T @ X) / nk[:, None]
        covs = np.empty_like(params.covariances)
        for k in range(params.k):
            diff = X - means[k]
            covs[k] = floor_covariance((resp[:, k, None] * diff).T @ diff / nk[k], eps)
        priors = nk / nk.sum()
        params = MixtureParams(priors, means, covs)
        logp = _joint_log_density(params, X)
        ll = float(np.mean(logsumexp(logp, axis=1)))
        if not np.isfinite(ll):
            raise NumericalError(f"non-finite log-likelihood at iteration {it}")
        if history is not None:
            history.append(ll)
        if ll - prev < tol:
            break
        prev = ll
    return params


def fit_mixture(data, k: int, seed: int = 0, max_iter: int = 200, tol: float = 1e-8) -> MixtureParams:
    """kmeans_init followed by em_fit."""
    X = _as_data(data)
    eps = default_eps_pd(X)
    return em_fit(kmeans_init(X, k, seed, eps_pd=eps), X, max_iter, tol, eps_pd=eps)


def _log_marginal(params: MixtureParams, X):
    _, logdets = params._marginal
    diff = X[None, :, :] - params.mu_x[:, None, :]                   # (K, n, d)
    z = np.einsum("kij,knj->kni", params._whiten, diff)
    const = np.log(params.priors) - 0.5 * (logdets + params.d * LOG_2PI)
    return const[None, :] - 0.5 * np.sum(z ** 2, axis=2).T


def _weights2d(params: MixtureParams, X):
    if params.k == 1:
        return np.ones((X.shape[0], 1))
    logp = _log_marginal(params, X)
    top = np.max(logp, axis=1, keepdims=True)
    bad = ~np.isfinite(top[:, 0])
    with np.errstate(invalid="ignore", over="ignore"):
        w = np.exp(logp - top)
        w /= np.sum(w, axis=1, keepdims=True)
    if np.any(bad):
        # all densities underflowed: nearest component by Mahalanobis distance
        diff = X[bad][None] - params.mu_x[:, None, :]
        maha = np.sum(np.einsum("kij,knj->kni", params._whiten, diff) ** 2, axis=2).T
        w[bad] = np.eye(params.k)[np.nanargmin(maha, axis=1)]
    return w


def weights(params: MixtureParams, x) -> np.ndarray:
    """Responsibilities gamma_k(x) of the position marginals; (K,) or (n, K)."""
    x = np.asarray(x, dtype=float)
    w = _weights2d(params, np.atleast_2d(x))
    return w[0] if x.ndim == 1 else w


def gmr_velocity(params: MixtureParams, x) -> np.ndarray:
    """Conditional mean E[xdot | x] of the mixture; (d,) or (n, d)."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    w = _weights2d(params, X)
    diff = X[None, :, :] - params.mu_x[:, None, :]                   # (K, n, d)
    local = params.mu_xdot[:, None, :] + np.einsum("kij,knj->kni", params.regression, diff)
    out = np.einsum("nk,kni->ni", w, local)
    return out[0] if x.ndim == 1 else out
