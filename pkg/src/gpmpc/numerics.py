"""Dense linear-algebra kernels shared by the model, estimator, GP and MPC code."""

import warnings
from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.linalg


class DimensionError(ValueError):
    """Raised when matrix shapes are incompatible."""


class FactorizationError(np.linalg.LinAlgError):
    """Raised when a matrix is not (numerically) positive definite."""


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a linear system is singular to working precision."""


@dataclass(frozen=True)
class CholeskyFactor:
    lower: np.ndarray
    log_det: float

    def solve(self, rhs):
        """Solve ``(L L^T) x = rhs`` with two triangular solves."""
        z = scipy.linalg.solve_triangular(self.lower, rhs, lower=True, check_finite=False)
        return scipy.linalg.solve_triangular(self.lower.T, z, lower=False, check_finite=False)


_PADE_ORDER = 8
_PADE_COEFFS = np.array([
    factorial(2 * _PADE_ORDER - k) * factorial(_PADE_ORDER)
    / (factorial(2 * _PADE_ORDER) * factorial(k) * factorial(_PADE_ORDER - k))
    for k in range(_PADE_ORDER + 1)
])
_SQUARING_THRESHOLD = 0.5


def _as_square(m):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    return m


def matrix_exponential(m):
    """Matrix exponential by scaling and squaring with a diagonal Padé approximant.

    The input is scaled by ``2**-s`` so that its infinity norm is at most 0.5,
    the (8, 8) Padé approximant is evaluated and the result squared ``s`` times.
    """
    m = _as_square(m)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    n = m.shape[0]
    norm = np.linalg.norm(m, np.inf)
    s = 0
    if norm > _SQUARING_THRESHOLD:
        s = int(np.ceil(np.log2(norm / _SQUARING_THRESHOLD)))
    x = m / 2.0**s

    eye = np.eye(n)
    power = eye
    num = _PADE_COEFFS[0] * eye
    den = _PADE_COEFFS[0] * eye
    for k in range(1, _PADE_ORDER + 1):
        power = power @ x
        term = _PADE_COEFFS[k] * power
        num = num + term
        den = den + term if k % 2 == 0 else den - term
    result = np.linalg.solve(den, num)
    for _ in range(s):
        result = result @ result
    return result


def zoh_discretize(a, inputs, ts):
    """Zero-order-hold discretization of ``x' = a x + inputs u``.

    All input columns are discretized jointly from one augmented exponential,
    so ``inputs`` may stack several input channels side by side.

    Returns
    -------
    a_d, inputs_d : ndarray
    """
    a = _as_square(a)
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    if inputs.shape[0] != a.shape[0]:
        raise DimensionError(
            f"input matrix has {inputs.shape[0]} rows, state matrix has {a.shape[0]}")
    if ts <= 0:
        raise ValueError("sampling time must be positive")
    n, m = inputs.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = a
    aug[:n, n:] = inputs
    phi = matrix_exponential(aug * ts)
    return phi[:n, :n], phi[:n, n:]


def cholesky(m, sym_tol=1e-10):
    """Lower Cholesky factor and log-determinant of a symmetric positive-definite matrix.

    No jitter is added here; callers decide how to regularize and retry.
    ``sym_tol=None`` skips the symmetry check for matrices symmetric by construction.
    """
    m = _as_square(m)
    if sym_tol is not None:
        scale = max(1.0, np.max(np.abs(m)))
        if np.max(np.abs(m - m.T)) > sym_tol * scale:
            raise ValueError("matrix is not symmetric")
    try:
        lower = scipy.linalg.cholesky(m, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(str(exc)) from None
    diag = np.diag(lower)
    if not np.all(diag > 0) or not np.all(np.isfinite(diag)):
        raise FactorizationError("matrix is not positive definite")
    return CholeskyFactor(lower=lower, log_det=2.0 * float(np.sum(np.log(diag))))


def solve_linear(a, rhs):
    """Solve ``a x = rhs`` by LU with partial pivoting."""
    a = _as_square(a)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != a.shape[0]:
        raise DimensionError(f"rhs has {rhs.shape[0]} rows, matrix has {a.shape[0]}")
    with warnings.catch_warnings():
        # singularity is reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= np.finfo(float).eps * a.shape[0] * max(pivots.max(), 1e-300):
        raise SingularMatrixError("matrix is singular to working precision")
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
