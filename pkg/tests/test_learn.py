import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clfgmr import gmm
from clfgmr.clf import ClfParams
from clfgmr.control import ControllerConfig, closed_loop
from clfgmr.dataset import DemonstrationSet, synth_shape
from clfgmr.learn import (LearnConfig, ParamLayout, analytic_value_and_grad, fd_gradient, initial_params,
                          objective, train, write_trace_csv)

from .conftest import random_clf, random_mixture

SONTAG = ControllerConfig()


@pytest.fixture(scope="module")
def small_set():
    return synth_shape("Sine", 2, 40, 0.02, 0)


def _layout_point(rng, k=3, l=2, d=2, eps=1e-4):
    layout = ParamLayout(k, l, d, eps)
    return layout, rng.standard_normal(layout.size) * 0.5


def test_layout_size_formula():
    k, l, d = 5, 3, 2
    D = 2 * d
    expected = k + k * D + k * D * (D + 1) // 2 + (l + 1) * d * (d + 1) // 2 + l * d * (d - 1) // 2 + l * d
    assert ParamLayout(k, l, d, 1e-6).size == expected


def test_encode_decode_round_trip(rng):
    eps = 1e-6
    for d, k, L in [(1, 1, 0), (2, 5, 3), (3, 2, 2)]:
        mix = random_mixture(rng, d, k)
        clf = random_clf(rng, d, L)
        layout = ParamLayout(k, L, d, eps)
        m2, c2 = layout.decode(layout.encode(mix, clf))
        for a, b in [(mix.priors, m2.priors), (mix.means, m2.means), (mix.covariances, m2.covariances),
                     (clf.P0, c2.P0), (clf.P, c2.P), (clf.mu, c2.mu)]:
            np.testing.assert_allclose(b, a, atol=1e-10, rtol=0)


@given(st.integers(0, 10 ** 6), st.floats(-30, 30))
def test_decode_is_always_feasible(seed, shift):
    rng = np.random.default_rng(seed)
    eps = 1e-5
    layout = ParamLayout(4, 3, 2, eps)
    theta = 3 * rng.standard_normal(layout.size)
    theta[:4] += shift
    mix, clf = layout.decode(theta)
    assert abs(mix.priors.sum() - 1) <= 1e-12
    assert np.all((mix.priors > 0) & (mix.priors < 1))
    assert min(np.linalg.eigvalsh(S).min() for S in mix.covariances) >= eps * (1 - 1e-9)
    assert min(np.linalg.eigvalsh(P + P.T).min() for P in [clf.P0, *clf.P]) >= eps * (1 - 1e-9)


def test_self_consistent_data_gives_zero_objective(rng):
    mix = random_mixture(rng, 2, 3)
    clf = random_clf(rng, 2, 2)
    X = rng.standard_normal((2, 30, 2))
    F, _, _ = closed_loop(mix, clf, SONTAG, X.reshape(-1, 2))
    dset = DemonstrationSet(X, F.reshape(X.shape), np.tile(np.linspace(0, 1, 30), (2, 1)))
    layout = ParamLayout(3, 2, 2, 1e-8)
    assert objective(layout.encode(mix, clf), layout, dset, SONTAG) < 1e-12


def test_zero_velocity_data_with_zero_field():
    # fhat = 0 (zero means and cross-covariance) has a = 0 and rho > 0, so the
    # controller acts; with the controller off the field is identically zero
    X = np.random.default_rng(0).standard_normal((1, 20, 2))
    dset = DemonstrationSet(X, np.zeros_like(X), np.linspace(0, 1, 20)[None])
    mix = gmm.MixtureParams([1.0], np.zeros((1, 4)), np.eye(4)[None])
    layout = ParamLayout(1, 0, 2, 1e-8)
    theta = layout.encode(mix, ClfParams(np.eye(2), np.zeros((0, 2, 2)), np.zeros((0, 2))))
    assert objective(theta, layout, dset, ControllerConfig(variant="off")) == 0.0


def test_single_sample_sensitivity(rng, small_set):
    layout, theta = _layout_point(rng)
    j0 = objective(theta, layout, small_set, SONTAG)
    mix, clf = layout.decode(theta)
    F, _, _ = closed_loop(mix, clf, SONTAG, small_set.x)
    # move sample (1, 7) exactly onto the model output, then off it by delta
    V = small_set.velocities.copy()
    i = 1 * small_set.n + 7
    delta = np.array([0.3, -0.4])
    V[1, 7] = F[i] + delta
    a = DemonstrationSet(small_set.positions, V, small_set.times)
    V[1, 7] = F[i]
    b = DemonstrationSet(small_set.positions, V, small_set.times)
    MN = small_set.m * small_set.n
    diff = objective(theta, layout, a, SONTAG) - objective(theta, layout, b, SONTAG)
    assert diff == pytest.approx(delta @ delta / (2 * MN), rel=1e-9)
    assert np.isfinite(j0)


def test_off_controller_objective_is_regression_error(rng, small_set):
    layout, theta = _layout_point(rng)
    mix, _ = layout.decode(theta)
    err = 0.5 * np.mean(np.sum((small_set.xdot - gmm.gmr_velocity(mix, small_set.x)) ** 2, axis=1))
    assert objective(theta, layout, small_set, ControllerConfig(variant="off")) == pytest.approx(err, rel=1e-13)


@pytest.mark.parametrize("variant", ["sontag", "classk", "off"])
def test_autodiff_matches_numpy_and_finite_differences(rng, small_set, variant):
    cfg = ControllerConfig(variant=variant)
    layout, theta = _layout_point(rng)
    vg = analytic_value_and_grad(layout, small_set, cfg, f0_weight=0.7)
    j, g = vg(theta)
    assert j == pytest.approx(objective(theta, layout, small_set, cfg, 0.7), rel=1e-12)
    fd = fd_gradient(lambda t: objective(t, layout, small_set, cfg, 0.7), theta, 1e-6, "central")
    assert np.linalg.norm(fd - g) <= 1e-4 * np.linalg.norm(g)


def test_zero_iteration_budget_returns_initialization(small_set):
    lcfg = LearnConfig(max_iter=0)
    res = train(small_set, lcfg, SONTAG)
    mix0, clf0, _ = initial_params(small_set, lcfg)
    np.testing.assert_array_equal(res.mixture.means, mix0.means)
    np.testing.assert_array_equal(res.mixture.covariances, mix0.covariances)
    np.testing.assert_array_equal(res.clf.P0, np.eye(2))
    np.testing.assert_array_equal(res.clf.P, np.tile(np.eye(2), (3, 1, 1)))
    np.testing.assert_array_equal(res.clf.mu, 0.0)
    assert res.final_j == res.initial_j and res.iterations == 0


def test_training_reduces_objective_and_best_is_monotone(small_set, tmp_path):
    res = train(small_set, LearnConfig(max_iter=150), SONTAG)
    assert res.final_j <= res.initial_j
    best = [row[1] for row in res.trace]
    assert np.all(np.diff(best) <= 0)
    write_trace_csv(res, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iter,J,grad_norm,evals" and len(lines) == len(res.trace) + 1


def test_finite_difference_training_path(small_set):
    res = train(small_set, LearnConfig(max_iter=3, gradient="forward"), SONTAG)
    assert res.final_j < res.initial_j


def test_threshold_stops_early(small_set):
    res = train(small_set, LearnConfig(max_iter=500, j_threshold=10.0), SONTAG)
    assert res.final_j < 10.0
    assert res.status == "threshold met" and res.iterations < 500


def test_training_is_deterministic(small_set):
    a = train(small_set, LearnConfig(max_iter=40), SONTAG)
    b = train(small_set, LearnConfig(max_iter=40), SONTAG)
    np.testing.assert_array_equal(a.mixture.covariances, b.mixture.covariances)
    np.testing.assert_array_equal(a.clf.P, b.clf.P)


def test_config_validation():
    for bad in (dict(k=0), dict(l=-1), dict(j_threshold=0.0), dict(max_iter=-1), dict(gradient="newton")):
        with pytest.raises(ValueError):
            LearnConfig(**bad)
