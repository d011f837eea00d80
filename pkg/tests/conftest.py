import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from clfgmr.clf import ClfParams
from clfgmr.gmm import MixtureParams

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def random_clf(rng, d, L, asym=True, scale=1.0):
    """P0 SPD; P_l with P_l + P_l^T > 0 (plus a skew part when ``asym``)."""
    def spd():
        A = rng.standard_normal((d, d))
        return scale * (A @ A.T / d + 0.2 * np.eye(d))

    P = []
    for _ in range(L):
        Pl = spd()
        if asym:
            W = rng.standard_normal((d, d))
            Pl = Pl + 0.5 * scale * (W - W.T)
        P.append(Pl)
    mu = rng.standard_normal((L, d))
    return ClfParams(spd(), np.array(P).reshape(L, d, d), mu)


def random_mixture(rng, d, k):
    D = 2 * d
    covs = []
    for _ in range(k):
        A = rng.standard_normal((D, D))
        covs.append(A @ A.T / D + 0.1 * np.eye(D))
    priors = rng.dirichlet(np.ones(k) * 2.0)
    return MixtureParams(priors, 1.5 * rng.standard_normal((k, D)), np.array(covs))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance report -----------------------------------------------------

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_report():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
