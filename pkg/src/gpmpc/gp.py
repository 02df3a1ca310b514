"""Gaussian-process regression with a periodic x squared-exponential kernel.

Only the variance ``theta_sq`` and the periodic length scale ``l_p`` are fitted;
the period ``lam`` (1440 min) and the decay length ``l_se`` (1e9 min) stay fixed.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from .numerics import CholeskyFactor, FactorizationError, cholesky

LOG_2PI = np.log(2.0 * np.pi)
JITTER_REL = 1e-6
JITTER_REL_MAX = 1e-2
THETA_SQ_BOUNDS = (1e-6, 1e6)
L_P_BOUNDS = (1e-2, 1e2)


class GpError(RuntimeError):
    pass


class GpFitWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Hyperparams:
    theta_sq: float = 1.0
    l_se: float = 1e9
    l_p: float = 1.0
    lam: float = 1440.0

    def __post_init__(self):
        for name in ("theta_sq", "l_se", "l_p", "lam"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def kernel_se(t, t2, l_se):
    t, t2 = np.asarray(t, dtype=float), np.asarray(t2, dtype=float)
    return np.exp(-((t - t2) ** 2) / (2.0 * l_se**2))


def kernel_periodic(t, t2, l_p, lam):
    t, t2 = np.asarray(t, dtype=float), np.asarray(t2, dtype=float)
    return np.exp(-2.0 * np.sin(np.pi * (t - t2) / lam) ** 2 / l_p**2)


def kernel_combined(t, t2, hp):
    return hp.theta_sq * kernel_se(t, t2, hp.l_se) * kernel_periodic(t, t2, hp.l_p, hp.lam)


def gram(times, hp, times2=None):
    times = np.asarray(times, dtype=float)
    times2 = times if times2 is None else np.asarray(times2, dtype=float)
    return kernel_combined(times[:, None], times2[None, :], hp)


def _jitter_ladder(hp, jitter):
    if jitter is None:
        jitter = JITTER_REL * hp.theta_sq
    if jitter == 0:
        return [0.0]
    ladder = [jitter]
    while ladder[-1] * 10 <= JITTER_REL_MAX * hp.theta_sq * (1 + 1e-12):
        ladder.append(ladder[-1] * 10)
    return ladder


def factorize_gram(times, hp, jitter=None):
    """Cholesky factor of ``K + jitter I`` with jitter escalation.

    Returns the factor and the jitter that succeeded.
    """
    k = gram(times, hp)
    eye = np.eye(k.shape[0])
    for jit in _jitter_ladder(hp, jitter):
        try:
            return cholesky(k + jit * eye), jit
        except FactorizationError:
            continue
    raise GpError("Gram matrix could not be factorized")


def log_marginal_likelihood(times, values, hp, jitter=None):
    """Log evidence of ``values`` under the GP prior, via Cholesky."""
    y = np.asarray(values, dtype=float)
    chol, _ = factorize_gram(times, hp, jitter)
    alpha = chol.solve(y)
    return float(-0.5 * y @ alpha - 0.5 * chol.log_det - 0.5 * y.size * LOG_2PI)


def _phase_groups(times, hp):
    """Group times sharing a phase mod ``lam``, if the SE factor is 1 to round-off."""
    times = np.asarray(times, dtype=float)
    span = times.max() - times.min()
    if span**2 / (2.0 * hp.l_se**2) > 1e-10:
        return None
    phase = np.round(np.mod(times, hp.lam), 9)
    uniq, inverse = np.unique(phase, return_inverse=True)
    if uniq.size == times.size:
        return None
    return uniq, inverse


def _grouped_log_likelihood(values, hp, groups, sin_sq=None):
    """Log evidence exploiting repeated phases.

    With ``K = s2 I + S M S^T`` (``S`` the phase-membership matrix) and
    ``U = S N^-1/2`` orthonormal, ``K = U (s2 I + N^1/2 M N^1/2) U^T + s2 (I - U U^T)``.
    """
    uniq, inverse = groups
    y = np.asarray(values, dtype=float)
    n, r = y.size, uniq.size
    counts = np.bincount(inverse, minlength=r).astype(float)
    sums = np.bincount(inverse, weights=y, minlength=r)
    z = sums / np.sqrt(counts)
    within = float(np.sum((y - (sums / counts)[inverse]) ** 2))
    root = np.sqrt(counts)
    if sin_sq is None:
        sin_sq = np.sin(np.pi * (uniq[:, None] - uniq[None, :]) / hp.lam) ** 2
    w = hp.theta_sq * np.exp(-2.0 * sin_sq / hp.l_p**2)
    w *= root[:, None] * root[None, :]
    diag = np.diag_indices(r)
    base_diag = w[diag].copy()
    for jit in _jitter_ladder(hp, None):
        w[diag] = base_diag + jit
        try:
            chol = cholesky(w, sym_tol=None)
        except FactorizationError:
            continue
        quad = z @ chol.solve(z) + within / jit
        log_det = chol.log_det + (n - r) * np.log(jit)
        return float(-0.5 * quad - 0.5 * log_det - 0.5 * n * LOG_2PI)
    raise GpError("Gram matrix could not be factorized")


def _objective_factory(times, values, base):
    """Negative log evidence over ``log(theta_sq), log(l_p)``.

    When the training times repeat phases (regular sampling over several
    periods) and the SE factor is 1 to round-off, the grouped form is used as
    the search objective; otherwise the dense Cholesky form. The grouped form
    is the ``l_se -> inf`` limit; at ``l_se = 1e9`` it differs from the dense
    value by about 1e-6 relative because the Gram matrix is nearly singular.
    """
    groups = _phase_groups(times, base)
    lo = np.log([THETA_SQ_BOUNDS[0], L_P_BOUNDS[0]])
    hi = np.log([THETA_SQ_BOUNDS[1], L_P_BOUNDS[1]])
    if groups is not None:
        uniq = groups[0]
        sin_sq = np.sin(np.pi * (uniq[:, None] - uniq[None, :]) / base.lam) ** 2

    def neg_ll(logp):
        logp = np.clip(logp, lo, hi)
        hp = replace(base, theta_sq=float(np.exp(logp[0])), l_p=float(np.exp(logp[1])))
        try:
            if groups is not None:
                return -_grouped_log_likelihood(values, hp, groups, sin_sq)
            return -log_marginal_likelihood(times, values, hp)
        except GpError:
            return np.inf

    return neg_ll, list(zip(lo, hi))


def fit_hyperparams(times, values, init=Hyperparams(), restarts=(1.0, 10.0, 0.1)):
    """Maximize the log evidence over ``(theta_sq, l_p)`` in log space.

    A bounded Nelder-Mead search is started from ``init`` scaled by each factor
    in ``restarts``. The best candidate is returned if its dense evidence beats
    that of ``init``; otherwise a :class:`GpFitWarning` is issued and ``init``
    is returned unchanged.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 10:
        raise ValueError("at least 10 training points are needed to fit")
    neg_ll, bounds = _objective_factory(times, values, init)
    candidates = []
    for scale in restarts:
        x0 = np.log([init.theta_sq * scale, init.l_p * scale])
        x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(neg_ll, x0, method="Nelder-Mead", bounds=bounds,
                       options={"xatol": 1e-3, "fatol": 1e-6, "maxfev": 400})
        if np.isfinite(res.fun):
            candidates.append(replace(init, theta_sq=float(np.exp(res.x[0])),
                                      l_p=float(np.exp(res.x[1]))))

    def dense(hp):
        try:
            return log_marginal_likelihood(times, values, hp)
        except GpError:
            return -np.inf

    best = None
    if candidates:
        # rank restarts by the search objective, then confirm against init densely
        best = min(candidates, key=lambda hp: neg_ll(np.log([hp.theta_sq, hp.l_p])))
    if best is None or not dense(best) > dense(init):
        best = init
    if best is init:
        warnings.warn("hyperparameter search did not improve on the initial values",
                      GpFitWarning, stacklevel=2)
    return best


@dataclass(frozen=True)
class GpModel:
    hp: Hyperparams
    times: np.ndarray
    values: np.ndarray
    chol: CholeskyFactor
    alpha_vec: np.ndarray
    jitter: float

    active = True


class InactiveGp:
    """Stand-in used before enough data exists or before activation: predicts zero."""

    active = False

    def __init__(self, hp=None):
        self.hp = hp if hp is not None else Hyperparams()


def build_gp(times, values, hp, jitter=None):
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size != values.size or times.size < 2:
        raise ValueError("need at least two (time, value) pairs of equal length")
    if np.any(np.diff(times) <= 0):
        raise ValueError("training times must be strictly increasing")
    chol, jit = factorize_gram(times, hp, jitter)
    return GpModel(hp=hp, times=times, values=values, chol=chol,
                   alpha_vec=chol.solve(values), jitter=jit)


def predict(gp, query_times):
    """Posterior mean and variance at ``query_times``."""
    q = np.atleast_1d(np.asarray(query_times, dtype=float))
    if not gp.active:
        return np.zeros(q.size), np.zeros(q.size)
    k_star = gram(gp.times, gp.hp, q)
    mean = k_star.T @ gp.alpha_vec
    v = scipy.linalg.solve_triangular(gp.chol.lower, k_star, lower=True, check_finite=False)
    var = gp.hp.theta_sq - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)
