"""Primal active-set solver for small dense QPs with box bounds and at most one equality.

    minimize    1/2 U^T H U + f^T U
    subject to  lower <= U <= upper
                a^T U = b            (optional)
"""

from dataclasses import dataclass

import numpy as np


class QpSolverError(RuntimeError):
    def __init__(self, message, qp=None):
        super().__init__(message)
        self.qp = qp


@dataclass(frozen=True)
class QpProblem:
    hessian: np.ndarray
    gradient: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    eq_vector: np.ndarray = None
    eq_value: float = 0.0
    const: float = 0.0

    @property
    def size(self):
        return self.gradient.size

    def objective(self, u):
        return float(0.5 * u @ self.hessian @ u + self.gradient @ u + self.const)

    def dump(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class QpStatus:
    iterations: int
    kkt_residual: float
    active_set_size: int
    soft_terminal: bool = False
    eq_multiplier: float = 0.0


def _box_range(a, lower, upper):
    """Minimizer and maximizer of a^T U over the box."""
    lo_pt = np.where(a >= 0, lower, upper)
    hi_pt = np.where(a >= 0, upper, lower)
    return lo_pt, hi_pt


def equality_feasible(qp, tol=1e-10):
    if qp.eq_vector is None:
        return True
    lo_pt, hi_pt = _box_range(qp.eq_vector, qp.lower, qp.upper)
    lo, hi = qp.eq_vector @ lo_pt, qp.eq_vector @ hi_pt
    slack = tol * max(1.0, abs(lo), abs(hi))
    return lo - slack <= qp.eq_value <= hi + slack


def _initial_point(qp):
    if qp.eq_vector is None:
        return np.clip(np.zeros(qp.size), qp.lower, qp.upper)
    a = qp.eq_vector
    lo_pt, hi_pt = _box_range(a, qp.lower, qp.upper)
    span = a @ (hi_pt - lo_pt)
    s = 0.5 if span == 0 else np.clip((qp.eq_value - a @ lo_pt) / span, 0.0, 1.0)
    return lo_pt + s * (hi_pt - lo_pt)


def kkt_residual(qp, u, nu=0.0):
    """Scaled KKT violation of a candidate ``u`` with equality multiplier ``nu``.

    Bound multipliers are recovered from stationarity; the residual is the
    largest of stationarity on free variables, dual infeasibility on active
    bounds, primal infeasibility, and complementarity, divided by
    ``1 + |H u|_inf + |f|_inf``.
    """
    g = qp.hessian @ u + qp.gradient
    if qp.eq_vector is not None:
        g = g + nu * qp.eq_vector
    scale = 1.0 + np.max(np.abs(qp.hessian @ u)) + np.max(np.abs(qp.gradient))
    width = np.maximum(qp.upper - qp.lower, 1e-300)
    tol = 1e-9 * width
    at_lo = u <= qp.lower + tol
    at_hi = u >= qp.upper - tol
    free = ~(at_lo | at_hi)
    parts = [0.0]
    if free.any():
        parts.append(np.max(np.abs(g[free])))
    if at_lo.any():
        parts.append(np.max(np.maximum(-g[at_lo], 0.0)))
    if at_hi.any():
        parts.append(np.max(np.maximum(g[at_hi], 0.0)))
    primal = max(np.max(qp.lower - u), np.max(u - qp.upper), 0.0)
    if qp.eq_vector is not None:
        primal = max(primal, abs(qp.eq_vector @ u - qp.eq_value)
                     / (1.0 + np.max(np.abs(qp.eq_vector))))
    return float(max(max(parts) / scale, primal))


def _solve_active_set(qp, max_iter):
    n = qp.size
    h, f, lo, hi = qp.hessian, qp.gradient, qp.lower, qp.upper
    a = qp.eq_vector
    u = _initial_point(qp)
    # working set: 0 free, -1 at lower, +1 at upper
    work = np.zeros(n, dtype=int)
    nu = 0.0
    # a full unblocked step lands on the subproblem minimizer; re-solving there
    # only returns roundoff, which can exceed tol when the gradient is large
    converged = False
    tol = 1e-12 * max(1.0, np.max(np.abs(hi)), np.max(np.abs(lo)))
    for it in range(1, max_iter + 1):
        free = work == 0
        g = h @ u + f
        nf = int(free.sum())
        use_eq = a is not None and nf > 0 and np.any(a[free] != 0)
        if converged:
            p_free = np.zeros(nf)
        elif nf:
            hff = h[np.ix_(free, free)]
            if use_eq:
                af = a[free]
                kkt = np.zeros((nf + 1, nf + 1))
                kkt[:nf, :nf] = hff
                kkt[:nf, nf] = af
                kkt[nf, :nf] = af
                sol = np.linalg.solve(kkt, np.append(-g[free], 0.0))
                p_free, nu = sol[:nf], sol[nf]
            else:
                p_free = np.linalg.solve(hff, -g[free])
        else:
            p_free = np.zeros(0)
        p = np.zeros(n)
        p[free] = p_free

        if converged or np.max(np.abs(p), initial=0.0) <= tol:
            converged = False
            grad = g + (nu * a if use_eq else 0.0)
            # multipliers: lower bound mu = grad, upper bound mu = -grad
            mult = np.where(work == -1, grad, np.where(work == 1, -grad, np.inf))
            j = int(np.argmin(mult))
            if mult[j] >= -1e-12 * (1.0 + np.max(np.abs(grad))):
                return u, it, nu if use_eq else 0.0, int(np.sum(work != 0))
            work[j] = 0
            continue

        step = 1.0
        block = -1
        for i in np.flatnonzero(free & (np.abs(p) > 0)):
            if p[i] < 0:
                s = (lo[i] - u[i]) / p[i]
            else:
                s = (hi[i] - u[i]) / p[i]
            if s < step:
                step, block = max(s, 0.0), i
        u = u + step * p
        converged = block < 0
        if block >= 0:
            work[block] = -1 if p[block] < 0 else 1
            u[block] = lo[block] if p[block] < 0 else hi[block]
    raise QpSolverError(f"active-set iteration cap ({max_iter}) exceeded", qp.dump())


def soften(qp, weight):
    """Replace the equality by the penalty ``weight * (a^T U - b)^2``."""
    a, b = qp.eq_vector, qp.eq_value
    return QpProblem(
        hessian=qp.hessian + 2.0 * weight * np.outer(a, a),
        gradient=qp.gradient - 2.0 * weight * b * a,
        lower=qp.lower, upper=qp.upper,
        const=qp.const + weight * b * b,
    )


def solve_qp(qp, max_iter=200, soft_weight=1e6):
    """Solve ``qp``; an equality infeasible under the bounds is softened automatically.

    Returns
    -------
    u : ndarray
    status : QpStatus
    """
    soft = False
    if qp.eq_vector is not None and not equality_feasible(qp):
        qp = soften(qp, soft_weight)
        soft = True
    u, it, nu, n_active = _solve_active_set(qp, max_iter)
    return u, QpStatus(iterations=it, kkt_residual=kkt_residual(qp, u, nu),
                       active_set_size=n_active, soft_terminal=soft, eq_multiplier=nu)
