"""Linear 12-state minipig glucose model, circadian insulin-sensitivity profile,
and the nominal/disturbance split used by the controller.

State layout (0-based index in arrays, deviations from the 110 mg/dL steady state):

====  ===========================================================
 0    plasma glucose [mg/dL]
 1    liver glucose [mg/dL]
 2    muscle/adipose vascular glucose [mg/dL]
 3    muscle/adipose intracellular glucose [mg/dL]
 4    interstitial insulin I_MI [mU/L]
 5    liver glucagon (normalized)
 6    glucagon reduction rate (normalized)
 7    liver insulin (normalized)
 8    inactive subcutaneous insulin [mU/min]
 9    active subcutaneous insulin [mU/min]
10    stomach glucose mass flow [mg/min]
11    intestine glucose mass flow [mg/min]
====  ===========================================================
"""

from dataclasses import dataclass

import numpy as np

from .numerics import zoh_discretize

N_STATES = 12
BG_BASELINE = 110.0
U_BASAL = 0.169
K_IS_NOMINAL = 1.0
PERIOD = 1440.0

IDX_BG = 0
IDX_INTRACELLULAR = 3
IDX_INSULIN = 4
IDX_SC_INACTIVE = 8
IDX_SC_ACTIVE = 9
IDX_STOMACH = 10
IDX_GUT = 11

# row, column of the insulin-sensitivity entry and its nominal coefficient
KIS_ENTRY = (IDX_INTRACELLULAR, IDX_INSULIN)
KIS_COEFF = -0.1

_A_FIXED = np.array([
    [-1.14, 0.494, 0.647, 0, 0, 0, 0, 0, 0, 0, 0.0178, 0],
    [3.68, -4.56, 0, 0, -0.018, 86.5, -96.8, 59.3, 0, -0.073, 0, 0],
    [2.01, 0, -3.3, 1.3, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0.2, -0.2, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, -0.0697, 0, 0, 0, 0, 0.0973, 0, 0],
    [-0.0018, 0, 0, 0, -6.7e-4, -0.371, 0, 0, 0, -0.00272, 0, 0],
    [0, 0, 0, 0, 0, 0.00687, -0.0154, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, -2.08e-4, 0, 0, -0.04, 0, -8.42e-4, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, -0.0166, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0.015, -0.015, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, -0.027, 0.027],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, -0.017],
])
_A_FIXED.setflags(write=False)

_B = np.zeros((N_STATES, 1))
_B[IDX_SC_INACTIVE, 0] = 2.23
_B[IDX_SC_ACTIVE, 0] = 0.99

_C = np.zeros((1, N_STATES))
_C[0, IDX_BG] = 1.0

DEFAULT_BREAKPOINTS = (
    (0.0, 1.30),
    (240.0, 0.70),
    (420.0, 0.55),
    (600.0, 0.80),
    (780.0, 1.00),
    (960.0, 1.10),
    (1140.0, 1.25),
    (1320.0, 1.40),
)


class ParameterError(ValueError):
    pass


def build_continuous_system(k_is):
    """Continuous state matrix ``A(k_is)``; only entry (row 4, col 5) depends on ``k_is``."""
    if not 0.1 <= k_is <= 3.0:
        raise ParameterError(f"k_is={k_is} outside [0.1, 3]")
    a = _A_FIXED.copy()
    a[KIS_ENTRY] = KIS_COEFF * k_is
    return a


def input_matrix():
    return _B.copy()


def output_matrix():
    return _C.copy()


def split_system():
    """Nominal state matrix and the disturbance input column.

    ``A(k) x == a_hat @ x + b_kis * (k - 1) * x[4]``.
    """
    a_hat = build_continuous_system(K_IS_NOMINAL)
    b_kis = np.zeros((N_STATES, 1))
    b_kis[IDX_INTRACELLULAR, 0] = KIS_COEFF
    return a_hat, b_kis


@dataclass(frozen=True)
class IsProfile:
    """Piecewise-linear, periodic insulin-sensitivity profile [mg/(min mU)]."""

    breakpoints: tuple = DEFAULT_BREAKPOINTS
    period: float = PERIOD

    def __post_init__(self):
        pts = tuple((float(t), float(v)) for t, v in self.breakpoints)
        if len(pts) < 1:
            raise ParameterError("profile needs at least one breakpoint")
        times = [t for t, _ in pts]
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise ParameterError("breakpoint times must be strictly increasing")
        if times[0] < 0 or times[-1] >= self.period:
            raise ParameterError("breakpoint times must lie in [0, period)")
        if any(not (0.1 <= v <= 3.0) for _, v in pts):
            raise ParameterError("profile values must lie in [0.1, 3]")
        object.__setattr__(self, "breakpoints", pts)
        t = np.array([p[0] for p in pts] + [pts[0][0] + self.period])
        v = np.array([p[1] for p in pts] + [pts[0][1]])
        # closed cycle so interpolation wraps continuously
        object.__setattr__(self, "_grid_t", t)
        object.__setattr__(self, "_grid_v", v)

    @classmethod
    def constant(cls, value=K_IS_NOMINAL):
        return cls(breakpoints=((0.0, value),))

    def __call__(self, t):
        return is_at(self, t)


def is_at(profile, t):
    """Insulin sensitivity at time ``t`` minutes (scalar or array)."""
    grid_t, grid_v = profile._grid_t, profile._grid_v
    phase = np.mod(np.asarray(t, dtype=float) - grid_t[0], profile.period) + grid_t[0]
    out = np.interp(phase, grid_t, grid_v)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ModelSet:
    a_hat: np.ndarray
    b: np.ndarray
    b_kis: np.ndarray
    c: np.ndarray
    a_hat_d: np.ndarray
    b_d: np.ndarray
    b_kis_d: np.ndarray
    ts: float = 5.0
    bg_baseline: float = BG_BASELINE
    u_basal: float = U_BASAL

    @property
    def n_states(self):
        return self.a_hat.shape[0]


def discretize_model(ts=5.0, u_basal=U_BASAL):
    """ZOH-discretize the nominal model; ``B`` and ``B_kis`` share one exponential."""
    if ts <= 0:
        raise ParameterError("ts must be positive")
    a_hat, b_kis = split_system()
    b = input_matrix()
    a_d, inputs_d = zoh_discretize(a_hat, np.hstack([b, b_kis]), ts)
    for m in (a_hat, b, b_kis, a_d, inputs_d):
        m.setflags(write=False)
    return ModelSet(
        a_hat=a_hat, b=b, b_kis=b_kis, c=output_matrix(),
        a_hat_d=a_d, b_d=inputs_d[:, :1], b_kis_d=inputs_d[:, 1:],
        ts=float(ts), u_basal=float(u_basal),
    )


def insulin_steady_state(u_basal=U_BASAL):
    """Absolute steady-state subcutaneous and interstitial insulin for a constant basal input.

    Solves the insulin subchain (states 9, 10, 5) at equilibrium.

    Returns
    -------
    dict with keys ``x9``, ``x10``, ``i_mi``.
    """
    a = _A_FIXED
    rows = [IDX_SC_INACTIVE, IDX_SC_ACTIVE, IDX_INSULIN]
    sub = a[np.ix_(rows, rows)]
    rhs = -_B[rows, 0] * u_basal
    x9, x10, i_mi = np.linalg.solve(sub, rhs)
    return {"x9": float(x9), "x10": float(x10), "i_mi": float(i_mi)}
