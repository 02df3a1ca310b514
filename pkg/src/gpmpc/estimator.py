"""Unscented Kalman filter on the discrete nominal model.

Announced meals enter as the same gut-state impulse the plant receives, which
is how the filter's meal feed-forward works: the two GI states (indices 10, 11)
carry the carbohydrate through to plasma glucose.
"""

from dataclasses import dataclass, field

import numpy as np

from . import model as mdl
from .numerics import FactorizationError, cholesky


class EstimatorError(RuntimeError):
    pass


Q_DISTURBANCE = 1e4
Q_FLOOR = 1e-9


def disturbance_process_noise(model=None, weight=Q_DISTURBANCE, floor=Q_FLOOR):
    """Process noise concentrated along the discrete IS-disturbance column.

    ``Q = weight * b b^T + floor * I`` with ``b = B_kis_d``: the filter then
    explains unmodelled glucose uptake as the disturbance the learner inverts,
    instead of spreading it over unrelated states.
    """
    if model is None:
        model = mdl.discretize_model()
    b = model.b_kis_d[:, 0]
    return weight * np.outer(b, b) + floor * np.eye(b.size)


@dataclass(frozen=True)
class UkfConfig:
    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0
    q_process: np.ndarray = field(default_factory=disturbance_process_noise)
    r_meas: float = 1.0
    meal_gain: float = 0.0
    max_jitter_tries: int = 6

    def __post_init__(self):
        q = np.asarray(self.q_process, dtype=float)
        if q.ndim == 1:
            q = np.diag(q)
        object.__setattr__(self, "q_process", q)
        n = q.shape[0]
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.alpha**2 * (n + self.kappa) <= 0:
            raise ValueError("alpha^2 (n + kappa) must be positive")
        if self.r_meas <= 0:
            raise ValueError("r_meas must be positive")
        if not np.allclose(q, q.T) or np.linalg.eigvalsh(q).min() < 0:
            raise ValueError("q_process must be symmetric positive semi-definite")

    @property
    def lam(self):
        n = self.q_process.shape[0]
        return self.alpha**2 * (n + self.kappa) - n


@dataclass(frozen=True)
class UkfState:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def initial(cls, cov=None, mean=None):
        n = mdl.N_STATES
        mean = np.zeros(n) if mean is None else np.asarray(mean, dtype=float)
        cov = np.eye(n) * 1e-2 if cov is None else np.asarray(cov, dtype=float)
        return cls(mean=mean, cov=cov)


def sigma_points(s, cfg):
    """Scaled ``2n + 1`` sigma points and their mean/covariance weights.

    Returns
    -------
    points : ndarray, shape (2n+1, n)
    w_mean, w_cov : ndarray, shape (2n+1,)
    """
    n = s.mean.shape[0]
    lam = cfg.lam
    scaled = (n + lam) * s.cov
    jitter = 0.0
    base = max(np.max(np.abs(np.diag(scaled))), 1e-300) * 1e-12
    for _ in range(cfg.max_jitter_tries):
        try:
            root = cholesky(scaled + jitter * np.eye(n)).lower
            break
        except FactorizationError:
            jitter = base if jitter == 0 else jitter * 100
    else:
        raise EstimatorError("state covariance is not positive semi-definite")
    points = np.empty((2 * n + 1, n))
    points[0] = s.mean
    points[1:n + 1] = s.mean + root.T
    points[n + 1:] = s.mean - root.T
    w_mean = np.full(2 * n + 1, 0.5 / (n + lam))
    w_cov = w_mean.copy()
    w_mean[0] = lam / (n + lam)
    w_cov[0] = lam / (n + lam) + 1 - cfg.alpha**2 + cfg.beta
    return points, w_mean, w_cov


def _weighted_stats(points, w_mean, w_cov):
    mean = w_mean @ points
    dev = points - mean
    cov = (dev * w_cov[:, None]).T @ dev
    return mean, dev, cov


def _symmetrize(m):
    return 0.5 * (m + m.T)


def ukf_predict(s, u_dev, announced_meal, cfg, model):
    """Time update through one step of the discrete nominal model.

    ``announced_meal`` is in grams (or ``None``); it is added to the gut state
    of every sigma point with ``cfg.meal_gain`` before propagation, matching a
    meal at the start of the sample.
    """
    points, w_mean, w_cov = sigma_points(s, cfg)
    if announced_meal:
        points[:, mdl.IDX_GUT] += cfg.meal_gain * announced_meal
    propagated = points @ model.a_hat_d.T + model.b_d[:, 0] * u_dev
    mean, _, cov = _weighted_stats(propagated, w_mean, w_cov)
    return UkfState(mean=mean, cov=_symmetrize(cov + cfg.q_process))


def ukf_update(s, y, cfg, model):
    """Measurement update against ``y = 110 + C x`` with variance ``cfg.r_meas``."""
    points, w_mean, w_cov = sigma_points(s, cfg)
    y_pts = model.bg_baseline + points @ model.c[0]
    mean_x = s.mean
    y_mean = w_mean @ y_pts
    dy = y_pts - y_mean
    dx = points - w_mean @ points
    s_yy = w_cov @ (dy * dy) + cfg.r_meas
    if not s_yy > 0:
        raise EstimatorError("innovation variance is not positive")
    p_xy = (dx * w_cov[:, None]).T @ dy
    gain = p_xy / s_yy
    mean = mean_x + gain * (y - y_mean)
    cov = s.cov - np.outer(gain, gain) * s_yy
    return UkfState(mean=mean, cov=_symmetrize(cov))


def kf_predict(s, u_dev, announced_meal, cfg, model):
    """Conventional Kalman-filter time update; the linear counterpart of :func:`ukf_predict`."""
    mean = s.mean.copy()
    if announced_meal:
        mean[mdl.IDX_GUT] += cfg.meal_gain * announced_meal
    a = model.a_hat_d
    return UkfState(mean=a @ mean + model.b_d[:, 0] * u_dev,
                    cov=_symmetrize(a @ s.cov @ a.T + cfg.q_process))


def kf_update(s, y, cfg, model):
    c = model.c[0]
    s_yy = c @ s.cov @ c + cfg.r_meas
    gain = s.cov @ c / s_yy
    mean = s.mean + gain * (y - model.bg_baseline - c @ s.mean)
    cov = s.cov - np.outer(gain, gain) * s_yy
    return UkfState(mean=mean, cov=_symmetrize(cov))
