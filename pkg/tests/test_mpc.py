import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpmpc import gp
from gpmpc import harness as hrn
from gpmpc import model as mdl
from gpmpc import plant as plt
from gpmpc.mpc import (MpcParams, PredictionMatrices, build_qp, mpc_step,
                       steady_state_target)
from gpmpc.qp import solve_qp

MODEL = mdl.discretize_model()


def test_target_of_zero_disturbance_is_zero():
    x_ss, u_ss = steady_state_target(0.0, MODEL)
    np.testing.assert_array_equal(x_ss, 0.0)
    assert u_ss == 0.0


def test_target_solves_block_system():
    x_ss, u_ss = steady_state_target(1.0, MODEL)
    resid = (MODEL.a_hat_d - np.eye(12)) @ x_ss + MODEL.b_d[:, 0] * u_ss + MODEL.b_kis_d[:, 0]
    assert np.abs(resid).max() < 1e-9
    assert abs(MODEL.c[0] @ x_ss) < 1e-9
    # more uptake (negative disturbance) calls for more insulin
    assert steady_state_target(-1.0, MODEL)[1] > 0


@settings(max_examples=25, deadline=None)
@given(st.floats(-50, 50))
def test_target_is_linear(d):
    x1, u1 = steady_state_target(d, MODEL)
    x2, u2 = steady_state_target(2 * d, MODEL)
    np.testing.assert_allclose(x2, 2 * x1, atol=1e-9)
    assert u2 == pytest.approx(2 * u1, abs=1e-12)


def _simulate(x0, u, d):
    x, ys = x0.copy(), []
    for k in range(len(u)):
        ys.append(MODEL.c[0] @ x)
        x = MODEL.a_hat_d @ x + MODEL.b_d[:, 0] * u[k] + MODEL.b_kis_d[:, 0] * d[k]
    return np.array(ys), MODEL.c[0] @ x


@pytest.mark.parametrize("seed", range(5))
def test_condensed_cost_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    params = MpcParams(horizon=3)
    x0 = rng.standard_normal(12) * 5
    preview = rng.standard_normal(3) * 10
    qp = build_qp(x0, preview, params, MODEL)
    u_ss = np.array([steady_state_target(d, MODEL)[1] for d in preview])
    for _ in range(5):
        u = rng.uniform(-0.169, 0.331, 3)
        ys, y_n = _simulate(x0, u, preview)
        cost = params.q * ys @ ys + params.r * np.sum((u - u_ss) ** 2)
        assert qp.objective(u) == pytest.approx(cost, rel=1e-8, abs=1e-8)
        assert qp.eq_vector @ u - qp.eq_value == pytest.approx(y_n, abs=1e-8)


def test_prediction_matrices_match_simulation():
    rng = np.random.default_rng(9)
    pred = PredictionMatrices.build(MODEL, 30)
    x0, u, d = rng.standard_normal(12), rng.standard_normal(30) * 0.1, rng.standard_normal(30)
    ys, y_n = _simulate(x0, u, d)
    np.testing.assert_allclose(pred.free @ x0 + pred.g_u @ u + pred.g_d @ d, ys, atol=1e-9)
    assert pred.term_x @ x0 + pred.term_u @ u + pred.term_d @ d == pytest.approx(y_n, abs=1e-9)


def test_bounds_and_hessian():
    params = MpcParams()
    qp = build_qp(np.zeros(12), np.zeros(30), params, MODEL)
    np.testing.assert_array_equal(qp.lower, -0.169)
    np.testing.assert_allclose(qp.upper, 0.5 - 0.169)
    np.testing.assert_allclose(qp.hessian, qp.hessian.T)
    assert np.linalg.eigvalsh(qp.hessian).min() >= 2 * params.r * (1 - 1e-12)


def test_equilibrium_gives_zero_input():
    qp = build_qp(np.zeros(12), np.zeros(30), MpcParams(), MODEL)
    u, status = solve_qp(qp)
    np.testing.assert_allclose(u, 0.0, atol=1e-12)
    assert status.kkt_residual < 1e-8


def test_preview_shifts_targets_linearly():
    pred = PredictionMatrices.build(MODEL, 30)
    base = build_qp(np.zeros(12), np.zeros(30), MpcParams(), MODEL, pred)
    shifted = build_qp(np.zeros(12), np.full(30, 2.0), MpcParams(), MODEL, pred)
    u_ss = pred.uss_per_unit * 2.0
    assert u_ss == pytest.approx(steady_state_target(2.0, MODEL)[1])
    # only the target part of the gradient depends on the preview through R
    delta = shifted.gradient - base.gradient
    expected = 2 * (pred.g_u.T @ (pred.g_d @ np.full(30, 2.0))) - 2 * 40000.0 * np.full(30, u_ss)
    np.testing.assert_allclose(delta, expected, rtol=1e-10, atol=1e-10)


def test_mpc_step_holds_basal_at_equilibrium():
    d = mpc_step(np.zeros(12), gp.InactiveGp(), 0.0, MpcParams(), MODEL)
    assert d.u == pytest.approx(0.169, abs=1e-12)
    np.testing.assert_array_equal(d.preview, 0.0)


def test_mpc_input_always_within_bounds():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.standard_normal(12) * 40
        d = mpc_step(x, gp.InactiveGp(), 0.0, MpcParams(), MODEL)
        assert 0.0 <= d.u <= 0.5


def test_nominal_closed_loop_stays_at_target():
    config = hrn.SimConfig(profile=mdl.IsProfile.constant(1.0))
    sc = hrn.Scenario(name="nominal", duration=1.0, gp_activation=0.5, controller="mpc")
    res = hrn.run_closed_loop(sc, config)
    assert res.status == "ok"
    np.testing.assert_allclose(res.array("bg_true"), 110.0, atol=1e-6)
    np.testing.assert_allclose(res.array("u_applied"), 0.169, atol=1e-9)


def test_large_meal_undershoot_is_small():
    sc = hrn.Scenario(name="meal90", duration=1.0, gp_activation=0.5, controller="mpc",
                      meals=(plt.MealEvent(420.0, 90.0),))
    res = hrn.run_closed_loop(sc, hrn.SimConfig(profile=mdl.IsProfile.constant(1.0)))
    t, bg = res.array("t"), res.array("bg_true")
    assert 110.0 - bg[t > 420].min() < 10.0


@pytest.mark.parametrize("kwargs", [
    {"horizon": 0}, {"q": 0.0}, {"r": -1.0}, {"u_max": -1.0}, {"u_basal": 0.6},
    {"terminal_mode": "maybe"}, {"terminal_weight": 0.0},
])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        MpcParams(**kwargs)


def test_soft_terminal_mode():
    params = MpcParams(terminal_mode="soft")
    qp = build_qp(np.full(12, 3.0), np.zeros(30), params, MODEL)
    assert qp.eq_vector is None
    u, status = solve_qp(qp)
    assert status.kkt_residual < 1e-8
