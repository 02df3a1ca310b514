"""Receding-horizon insulin controller with a disturbance preview.

Inputs are deviations from basal in U per 5-min sample. The predicted
insulin-sensitivity disturbance enters through ``B_kis_d``; per-stage input
targets that reject it at steady state replace zero in the input penalty.
"""

from dataclasses import dataclass

import numpy as np

from . import gp as gpm
from .numerics import SingularMatrixError, solve_linear
from .qp import QpProblem, soften, solve_qp

__all__ = [
    "MpcParams", "PredictionMatrices", "MpcDecision",
    "steady_state_target", "build_qp", "solve_qp", "mpc_step",
]


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class MpcParams:
    horizon: int = 30
    q: float = 1.0
    r: float = 40000.0
    u_max: float = 0.5
    u_basal: float = 0.169
    terminal_mode: str = "hard"
    terminal_weight: float = 1e6

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.q <= 0 or self.r <= 0:
            raise ValueError("q and r must be positive")
        if not 0 < self.u_basal < self.u_max:
            raise ValueError("need 0 < u_basal < u_max")
        if self.terminal_mode not in ("hard", "soft"):
            raise ValueError("terminal_mode must be 'hard' or 'soft'")
        if self.terminal_weight <= 0:
            raise ValueError("terminal_weight must be positive")


def _target_matrix(model):
    n = model.n_states
    m = np.zeros((n + 1, n + 1))
    m[:n, :n] = model.a_hat_d - np.eye(n)
    m[:n, n] = model.b_d[:, 0]
    m[n, :n] = model.c[0]
    return m


def steady_state_target(u_kis, model):
    """State and input deviation that hold the output at zero under a constant disturbance.

    Returns
    -------
    x_ss : ndarray, shape (12,)
    u_ss : float
    """
    n = model.n_states
    rhs = np.zeros(n + 1)
    rhs[:n] = -model.b_kis_d[:, 0] * u_kis
    try:
        sol = solve_linear(_target_matrix(model), rhs)
    except SingularMatrixError as exc:
        raise ConfigurationError("steady-state target system is singular") from exc
    return sol[:n], float(sol[n])


@dataclass(frozen=True)
class PredictionMatrices:
    """Condensed output predictions over the horizon.

    ``y = free @ x0 + g_u @ U + g_d @ D`` for stages ``0..N-1`` and
    ``y_N = term_x @ x0 + term_u @ U + term_d @ D``.
    """

    horizon: int
    free: np.ndarray
    g_u: np.ndarray
    g_d: np.ndarray
    term_x: np.ndarray
    term_u: np.ndarray
    term_d: np.ndarray
    uss_per_unit: float

    @classmethod
    def build(cls, model, horizon):
        a, b, e, c = model.a_hat_d, model.b_d[:, 0], model.b_kis_d[:, 0], model.c[0]
        # c_pow[k] = C A^k
        c_pow = np.empty((horizon + 1, model.n_states))
        c_pow[0] = c
        for k in range(1, horizon + 1):
            c_pow[k] = c_pow[k - 1] @ a
        markov_u = c_pow @ b
        markov_d = c_pow @ e
        g_u = np.zeros((horizon, horizon))
        g_d = np.zeros((horizon, horizon))
        for k in range(1, horizon):
            g_u[k, :k] = markov_u[k - 1::-1][:k]
            g_d[k, :k] = markov_d[k - 1::-1][:k]
        term_u = markov_u[horizon - 1::-1][:horizon].copy()
        term_d = markov_d[horizon - 1::-1][:horizon].copy()
        _, uss = steady_state_target(1.0, model)
        return cls(horizon, c_pow[:horizon].copy(), g_u, g_d, c_pow[horizon].copy(),
                   term_u, term_d, uss)


def build_qp(x0, u_kis_preview, params, model, pred=None):
    """Condensed QP in the input deviations ``U``.

    The cost ``sum q y_k^2 + r (u_k - u_ss_k)^2`` is written as
    ``1/2 U^T H U + f^T U + const``.
    """
    n = params.horizon
    preview = np.asarray(u_kis_preview, dtype=float)
    if preview.shape != (n,):
        raise ValueError(f"preview must have length {n}")
    if pred is None or pred.horizon != n:
        pred = PredictionMatrices.build(model, n)
    x0 = np.asarray(x0, dtype=float)
    u_ss = pred.uss_per_unit * preview
    y_free = pred.free @ x0 + pred.g_d @ preview
    hessian = 2.0 * (params.q * pred.g_u.T @ pred.g_u + params.r * np.eye(n))
    gradient = 2.0 * (params.q * pred.g_u.T @ y_free - params.r * u_ss)
    const = float(params.q * y_free @ y_free + params.r * u_ss @ u_ss)
    lower = np.full(n, -params.u_basal)
    upper = np.full(n, params.u_max - params.u_basal)
    term_b = -float(pred.term_x @ x0 + pred.term_d @ preview)
    qp = QpProblem(hessian=hessian, gradient=gradient, lower=lower, upper=upper,
                   eq_vector=pred.term_u.copy(), eq_value=term_b, const=const)
    if params.terminal_mode == "soft":
        qp = soften(qp, params.terminal_weight)
    return qp


@dataclass(frozen=True)
class MpcDecision:
    u: float
    u_seq: np.ndarray
    preview: np.ndarray
    preview_var: np.ndarray
    status: object


def mpc_step(x_hat, gp, t, params, model, pred=None):
    """One receding-horizon step; returns the absolute insulin dose for this sample.

    The GP posterior mean over ``t, t + ts, ..., t + (N-1) ts`` is the
    disturbance preview. An inactive GP yields a zero preview, i.e. the
    plain MPC.
    """
    query = t + model.ts * np.arange(params.horizon)
    preview, var = gpm.predict(gp, query)
    qp = build_qp(x_hat, preview, params, model, pred)
    u_seq, status = solve_qp(qp, soft_weight=params.terminal_weight)
    u_abs = float(np.clip(u_seq[0] + params.u_basal, 0.0, params.u_max))
    return MpcDecision(u=u_abs, u_seq=u_seq, preview=preview, preview_var=var, status=status)
