import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from clfgmr.clf import ClfParams
from clfgmr.control import ControllerConfig
from clfgmr.gmm import MixtureParams
from clfgmr.metrics import (COLUMNS, EvalRow, control_effort, format_table, resample_arclength, swept_error_area,
                            velocity_mse, write_report_csv)
from clfgmr.sim import rollout

UNSTABLE = MixtureParams([1.0], [[0.0, 0.0]], [[[1.0, 1.0], [1.0, 2.0]]])
STABLE = MixtureParams([1.0], [[0.0, 0.0]], [[[1.0, -1.0], [-1.0, 2.0]]])
QUAD1 = ClfParams([[1.0]], np.zeros((0, 1, 1)), np.zeros((0, 1)))

paths = st.integers(0, 10 ** 6).map(lambda s: np.random.default_rng(s).standard_normal((30, 2)).cumsum(axis=0))


def test_identical_paths_have_zero_area(rng):
    P = rng.standard_normal((50, 3)).cumsum(axis=0)
    assert swept_error_area(P, P) == pytest.approx(0.0, abs=1e-12)


def test_parallel_unit_segments():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 1.0], [1.0, 1.0]])
    assert swept_error_area(a, b) == pytest.approx(1.0)
    # more samples along the same segments sweep the same square
    a5 = np.column_stack([np.linspace(0, 1, 5), np.zeros(5)])
    b9 = np.column_stack([np.linspace(0, 1, 9), np.ones(9)])
    assert swept_error_area(a5, b9) == pytest.approx(1.0)


def test_too_short_is_rejected():
    with pytest.raises(ValueError):
        swept_error_area(np.zeros((1, 2)), np.zeros((5, 2)))


def test_resample_is_uniform_in_arclength():
    P = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 1.0]])
    R = resample_arclength(P, 5)
    np.testing.assert_allclose(np.linalg.norm(np.diff(R, axis=0), axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(R[[0, -1]], P[[0, -1]])


def test_resample_tolerates_repeated_points():
    P = np.array([[0.0, 0.0], [0.0, 0.0], [2.0, 0.0], [2.0, 0.0]])
    np.testing.assert_allclose(resample_arclength(P, 3)[:, 0], [0.0, 1.0, 2.0])


@given(paths, paths)
def test_area_is_symmetric(a, b):
    assert swept_error_area(a, b) == pytest.approx(swept_error_area(b, a), rel=1e-12, abs=1e-12)


@given(paths, paths, st.floats(0.1, 10.0))
def test_area_scales_quadratically(a, b, s):
    assert swept_error_area(s * a, s * b) == pytest.approx(s ** 2 * swept_error_area(a, b), rel=1e-9)


@given(paths, paths, st.lists(st.floats(-50, 50), min_size=2, max_size=2))
def test_area_is_translation_invariant(a, b, shift):
    t = np.array(shift)
    assert swept_error_area(a + t, b + t) == pytest.approx(swept_error_area(a, b), rel=1e-8, abs=1e-9)


def test_uncontrolled_rollout_costs_nothing():
    res = rollout(STABLE, QUAD1, ControllerConfig(variant="off"), [1.0], 1e-2, 200)
    assert control_effort(res) == 0.0


def test_unstable_field_needs_more_effort_than_stable():
    cfg = ControllerConfig()
    hard = rollout(UNSTABLE, QUAD1, cfg, [1.0], 1e-3, 5000)
    easy = rollout(STABLE, QUAD1, cfg, [1.0], 1e-3, 5000)
    assert control_effort(hard) > control_effort(easy) >= 0.0
    assert control_effort(hard) == pytest.approx(hard.control_effort)


def test_velocity_mse_is_zero_on_model_data():
    from clfgmr.control import closed_loop
    from clfgmr.dataset import DemonstrationSet
    x = np.linspace(-2, 2, 25)[:, None]
    F, _, _ = closed_loop(UNSTABLE, QUAD1, ControllerConfig(), x)
    dset = DemonstrationSet(x[None], F[None], np.linspace(0, 1, 25)[None])
    assert velocity_mse(UNSTABLE, QUAD1, ControllerConfig(), dset) == pytest.approx(0.0, abs=1e-24)


def _row(**kw):
    base = dict(shape="C", variant="sontag", noise=0.0, rho0=1.0, sea=0.1, velocity_mse=0.01,
                control_effort=0.5, convergence=1.0)
    base.update(kw)
    return EvalRow(**base)


def test_eval_row_validation():
    for bad in (dict(sea=-1.0), dict(control_effort=-0.1), dict(convergence=1.5)):
        with pytest.raises(ValueError):
            _row(**bad)


def test_report_outputs(tmp_path):
    rows = [_row(), _row(variant="off", convergence=0.0, sea=3.25)]
    write_report_csv(rows, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].split(",") == COLUMNS
    assert lines[2].split(",")[:2] == ["C", "off"] and float(lines[2].split(",")[4]) == 3.25
    table = format_table(rows).splitlines()
    assert len(table) == 4 and "SEA" in table[0]
