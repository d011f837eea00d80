"""JAX mirror of ``learn.objective`` for exact gradients.

Kept numerically identical to the numpy path (tests compare both). Only
imported when the analytic gradient mode is selected.
"""
from __future__ import annotations

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp  # noqa: E402
from jax.scipy.linalg import cho_solve, solve_triangular  # noqa: E402
from jax.scipy.special import logsumexp  # noqa: E402

from .control import EPS_B  # noqa: E402


def _vec_to_chol(v, n):
    rows, cols = jnp.tril_indices(n)
    C = jnp.zeros((n, n)).at[rows, cols].set(v)
    diag = jnp.arange(n)
    return C.at[diag, diag].set(jnp.exp(C[diag, diag]))


def _decode(theta, layout):
    k, l, d, eps = layout.k, layout.l, layout.d, layout.floor
    D = 2 * d
    sizes = layout.sizes
    i = 0
    p = {}
    for name, n in sizes.items():
        p[name] = theta[i:i + n]
        i += n
    priors = jax.nn.softmax(p["logits"])
    means = p["means"].reshape(k, D)
    nc = D * (D + 1) // 2
    covs = []
    for j in range(k):
        C = _vec_to_chol(p["cov"][j * nc:(j + 1) * nc], D)
        covs.append(C @ C.T + eps * jnp.eye(D))
    covs = jnp.stack(covs)
    ns, nw = d * (d + 1) // 2, d * (d - 1) // 2
    su = jnp.triu_indices(d, 1)
    mats = []
    for j in range(l + 1):
        C = _vec_to_chol(p["psym"][j * ns:(j + 1) * ns], d)
        P = C @ C.T + 0.5 * eps * jnp.eye(d)
        if j > 0:
            W = jnp.zeros((d, d)).at[su].set(p["skew"][(j - 1) * nw:j * nw])
            P = P + W - W.T
        mats.append(P)
    P = jnp.stack(mats[1:]) if l else jnp.zeros((0, d, d))
    return priors, means, covs, mats[0], P, p["mu"].reshape(l, d)


def _gmr(priors, means, covs, X, d):
    mu_x, mu_v = means[:, :d], means[:, d:]
    Sx = covs[:, :d, :d]
    Svx = covs[:, d:, :d]
    chols = jnp.linalg.cholesky(Sx)
    logdet = 2 * jnp.sum(jnp.log(jnp.diagonal(chols, axis1=1, axis2=2)), axis=1)
    diff = X[None] - mu_x[:, None]                                        # (K, n, d)
    z = jax.vmap(lambda L, r: solve_triangular(L, r.T, lower=True))(chols, diff)
    logp = (jnp.log(priors)[None] - 0.5 * (jnp.sum(z ** 2, axis=1).T + logdet[None]
                                           + d * jnp.log(2 * jnp.pi)))
    w = jnp.exp(logp - logsumexp(logp, axis=1, keepdims=True))
    A = jax.vmap(lambda L, B: cho_solve((L, True), B.T).T)(chols, Svx)
    local = mu_v[:, None] + jnp.einsum("kij,knj->kni", A, diff)
    return jnp.einsum("nk,kni->ni", w, local)


def _clf_grad(P0, P, mu, X):
    g = X @ (P0 + P0.T).T
    if P.shape[0]:
        Px = jnp.einsum("lij,nj->nli", P, X)
        Pmu = jnp.einsum("lij,lj->li", P, mu)
        sig = jnp.einsum("ni,nli->nl", X, Px) - X @ Pmu.T
        dsig = Px + jnp.einsum("lji,nj->nli", P, X) - Pmu[None]
        g = g + 2 * jnp.einsum("nl,nli->ni", jnp.where(sig >= 0, sig, 0.0), dsig)
    return g


def _feedback(variant, rho0, kappa0, F, b, X):
    a = jnp.sum(b * F, axis=1)
    b2 = jnp.sum(b ** 2, axis=1)
    at_target = ~jnp.any(X != 0, axis=1)
    if variant == "classk":
        r2 = jnp.sum(X ** 2, axis=1)
        safe_r = jnp.sqrt(jnp.where(at_target, 1.0, r2))
        rho = jnp.where(at_target, 0.0, rho0 * -jnp.expm1(-kappa0 * safe_r))
    else:
        s = a ** 2 + b2 ** 2
        rho = rho0 * jnp.sqrt(jnp.where(s > 0, s, 1.0)) * (s > 0)
    push = a + rho
    active = (push > 0) & (b2 >= EPS_B) & ~at_target
    coef = jnp.where(active, -push / jnp.where(active, b2, 1.0), 0.0)
    return coef[:, None] * b


def make_objective(layout, dset, ccfg, f0_weight):
    X = jnp.asarray(dset.x)
    Y = jnp.asarray(dset.xdot)
    d = layout.d

    def J(theta):
        priors, means, covs, P0, P, mu = _decode(theta, layout)
        F = _gmr(priors, means, covs, X, d)
        if ccfg.enabled:
            b = _clf_grad(P0, P, mu, X)
            F = F + _feedback(ccfg.variant, ccfg.rho0, ccfg.kappa0, F, b, X)
        val = 0.5 * jnp.mean(jnp.sum((Y - F) ** 2, axis=1))
        if f0_weight:
            f0 = _gmr(priors, means, covs, jnp.zeros((1, d)), d)[0]
            val = val + f0_weight * jnp.sum(f0 ** 2)
        return val

    return jax.jit(jax.value_and_grad(J))
