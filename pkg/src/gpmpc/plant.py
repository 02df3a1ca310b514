"""Ground-truth plant: the linear model with a time-varying insulin sensitivity.

The sensitivity multiplies the *absolute* interstitial insulin, so in deviation
coordinates the plant sees an extra input ``(k_IS(t) - 1) * (x[4] + i_mi_basal)``
on the intracellular-glucose row. This keeps the circadian excitation alive even
when the deviation state is zero.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import model as mdl


class SimulationDiverged(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


# state-12 impulse [mg/min] per gram of carbohydrate; see gpmpc.calibration
DEFAULT_MEAL_GAIN = 26.757
DEFAULT_I_MI_BASAL = mdl.insulin_steady_state(mdl.U_BASAL)["i_mi"]
U_MAX = 0.5


@dataclass(frozen=True)
class MealEvent:
    time: float
    grams_cho: float
    announced: bool = True

    def __post_init__(self):
        if self.grams_cho < 0:
            raise ValueError("grams_cho must be non-negative")


@dataclass(frozen=True)
class PlantParams:
    i_mi_basal: float = DEFAULT_I_MI_BASAL
    meal_gain: float = DEFAULT_MEAL_GAIN
    u_basal: float = mdl.U_BASAL
    u_max: float = U_MAX
    max_substep: float = 0.5
    bg_limits: tuple = (0.0, 1000.0)


@dataclass(frozen=True)
class PlantState:
    x: np.ndarray
    t: float = 0.0
    step: int = 0

    @classmethod
    def initial(cls, x0=None):
        x = np.zeros(mdl.N_STATES) if x0 is None else np.asarray(x0, dtype=float).copy()
        if x.shape != (mdl.N_STATES,):
            raise ValueError("state must have 12 entries")
        return cls(x=x, t=0.0, step=0)

    @property
    def bg(self):
        return mdl.BG_BASELINE + self.x[mdl.IDX_BG]


_A_HAT, _B_KIS = mdl.split_system()
_B = mdl.input_matrix()[:, 0]
_B_KIS_VEC = _B_KIS[:, 0]


def truth_disturbance(x, t, profile, i_mi_basal=DEFAULT_I_MI_BASAL):
    """IS-induced disturbance the plant actually experiences at time ``t``."""
    return (mdl.is_at(profile, t) - 1.0) * (x[mdl.IDX_INSULIN] + i_mi_basal)


def _rhs(x, t, u_dev, profile, i_mi_basal):
    d = (mdl.is_at(profile, t) - 1.0) * (x[mdl.IDX_INSULIN] + i_mi_basal)
    return _A_HAT @ x + _B * u_dev + _B_KIS_VEC * d


def _rk4(x, t0, t1, u_dev, profile, params):
    span = t1 - t0
    if span <= 0:
        return x
    n = max(1, int(np.ceil(span / params.max_substep - 1e-12)))
    h = span / n
    t = t0
    for _ in range(n):
        k1 = _rhs(x, t, u_dev, profile, params.i_mi_basal)
        k2 = _rhs(x + 0.5 * h * k1, t + 0.5 * h, u_dev, profile, params.i_mi_basal)
        k3 = _rhs(x + 0.5 * h * k2, t + 0.5 * h, u_dev, profile, params.i_mi_basal)
        k4 = _rhs(x + h * k3, t + h, u_dev, profile, params.i_mi_basal)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return x


def plant_step(state, u_dev, meals, profile, ts=5.0, params=PlantParams()):
    """Advance the plant by one sample with ``u_dev`` held constant.

    ``u_dev`` is the insulin deviation from basal in U per sample. Meals whose
    time falls in ``[t, t + ts)`` are added to the gut state at their instant.
    """
    if ts <= 0:
        raise ValueError("ts must be positive")
    u_abs = u_dev + params.u_basal
    if u_abs < -1e-12 or u_abs > params.u_max + 1e-12:
        raise ValueError(f"absolute insulin {u_abs} outside [0, {params.u_max}]")
    t0, t1 = state.t, state.t + ts
    due = sorted((m for m in meals if t0 <= m.time < t1), key=lambda m: m.time)
    x, t = state.x, t0
    for meal in due:
        x = _rk4(x, t, meal.time, u_dev, profile, params)
        x = x.copy()
        x[mdl.IDX_GUT] += params.meal_gain * meal.grams_cho
        t = meal.time
    x = _rk4(x, t, t1, u_dev, profile, params)
    new = PlantState(x=x, t=t1, step=state.step + 1)
    lo, hi = params.bg_limits
    if not np.all(np.isfinite(x)) or not lo < new.bg < hi:
        raise SimulationDiverged(f"BG {new.bg:.1f} mg/dL out of range", step=new.step)
    return new


def measure(state, noise_sd=0.0, rng=None):
    """Plasma glucose reading in mg/dL, optionally with additive Gaussian noise."""
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    y = state.bg
    if noise_sd > 0:
        if rng is None:
            raise ValueError("a random generator is required when noise_sd > 0")
        y += noise_sd * rng.standard_normal()
    return float(y)


def with_meal_gain(params, meal_gain):
    return replace(params, meal_gain=float(meal_gain))
