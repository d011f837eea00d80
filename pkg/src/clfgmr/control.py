"""Sontag-type feedback that turns the GMR field into a CLF-decreasing one.

With a = grad V . fhat and b = grad V,

    u = -(a + rho) b / |b|^2   if a + rho > 0,    else 0,

so along fhat + u the energy decreases at rate exactly rho wherever the
correction is active.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import clf as clf_mod
from . import gmm
from .errors import SingularControlError

EPS_B = 1e-12
VARIANTS = ("sontag", "classk", "off")


@dataclass(frozen=True)
class ControllerConfig:
    """``variant``: "sontag" (rho0 sqrt(a^2 + |b|^4)), "classk"
    (rho0 (1 - exp(-kappa0 |x|))) or "off" (no correction, GMR only).
    ``kappa`` is the disturbance energy bound used for the residual set.
    """

    variant: str = "sontag"
    rho0: float = 1.0
    kappa0: float = 1.0
    kappa: float = 0.0

    def __post_init__(self):
        v = self.variant.lower()
        if v not in VARIANTS:
            raise ValueError(f"unknown controller variant {self.variant!r}; choose from {VARIANTS}")
        object.__setattr__(self, "variant", v)
        if not self.rho0 > 0:
            raise ValueError(f"rho0 must be positive, got {self.rho0}")
        if v == "classk" and not self.kappa0 > 0:
            raise ValueError(f"kappa0 must be positive, got {self.kappa0}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")

    @property
    def enabled(self) -> bool:
        return self.variant != "off"


def ab_terms(clf: clf_mod.ClfParams, fhat, x):
    """a = grad V(x) . fhat(x), b = grad V(x)."""
    b = clf_mod.gradient(clf, x)
    a = np.sum(b * np.asarray(fhat, dtype=float), axis=-1)
    return a, b


def sontag_rho(rho0: float, a, b):
    b2 = np.sum(np.asarray(b) ** 2, axis=-1)
    return rho0 * np.sqrt(np.asarray(a) ** 2 + b2 ** 2)


def rho(cfg: ControllerConfig, a, b, x):
    if cfg.variant == "classk":
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return cfg.rho0 * -np.expm1(-cfg.kappa0 * r)
    return sontag_rho(cfg.rho0, a, b)


def _feedback(cfg, a, b, X, on_singular="raise"):
    """Batched u for a (n,), b (n, d), X (n, d); returns (u, singular mask)."""
    r = rho(cfg, a, b, X)
    b2 = np.sum(b ** 2, axis=1)
    push = a + r
    at_target = ~np.any(X != 0, axis=1)
    singular = (b2 < EPS_B) & (push > 0) & ~at_target
    if on_singular == "raise" and np.any(singular):
        raise SingularControlError(X[np.argmax(singular)])
    active = (push > 0) & ~singular & ~at_target
    coef = np.where(active, -push / np.where(active, b2, 1.0), 0.0)
    return coef[:, None] * b, singular


def sontag_u(clf: clf_mod.ClfParams, cfg: ControllerConfig, fhat, x):
    """Control input at ``x`` given the precomputed field value ``fhat``."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    F = np.atleast_2d(np.asarray(fhat, dtype=float))
    if not cfg.enabled:
        u = np.zeros_like(X)
    else:
        _, b = clf_mod.value_and_gradient(clf, X)
        a = np.sum(b * F, axis=1)
        u, _ = _feedback(cfg, a, b, X)
    return u[0] if x.ndim == 1 else u


def closed_loop(mix: gmm.MixtureParams, clf: clf_mod.ClfParams, cfg: ControllerConfig, X,
                on_singular="raise"):
    """Batched (fhat + u, u, singular mask) at the (n, d) points ``X``."""
    X = np.asarray(X, dtype=float)
    F = gmm.gmr_velocity(mix, X)
    if not cfg.enabled:
        return F, np.zeros_like(F), np.zeros(X.shape[0], dtype=bool)
    _, b = clf_mod.value_and_gradient(clf, X)
    a = np.sum(b * F, axis=1)
    u, singular = _feedback(cfg, a, b, X, on_singular)
    return F + u, u, singular


def corrected_field(mix: gmm.MixtureParams, clf: clf_mod.ClfParams, cfg: ControllerConfig, x):
    """fhat(x) + u(x), disturbance-free."""
    x = np.asarray(x, dtype=float)
    out, _, _ = closed_loop(mix, clf, cfg, np.atleast_2d(x))
    return out[0] if x.ndim == 1 else out
