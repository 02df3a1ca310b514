"""Calibration of the two plant constants that the model tables do not give.

``i_mi_basal`` comes from the insulin-chain equilibrium at the basal rate;
``meal_gain`` is swept so that a 50 g meal under basal insulin peaks near
180 mg/dL.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import model as mdl
from . import plant as plt

TARGET_PEAK = 180.0
PEAK_TOLERANCE = 15.0


class CalibrationError(RuntimeError):
    def __init__(self, message, sweep=()):
        lines = [message] + [f"  meal_gain={g:.6g} peak={p:.6g}" for g, p in sweep]
        super().__init__("\n".join(lines))
        self.sweep = tuple(sweep)


def basal_interstitial_insulin(u_basal=mdl.U_BASAL):
    """Absolute interstitial insulin at equilibrium under ``u_basal`` U per sample."""
    return mdl.insulin_steady_state(u_basal)["i_mi"]


def meal_response(meal_gain, grams=50.0, horizon=600.0, dt=1.0, u_basal=mdl.U_BASAL):
    """BG trace after a meal at t = 0 with basal insulin and nominal sensitivity.

    Returns
    -------
    times, bg : ndarray
    """
    params = plt.PlantParams(meal_gain=meal_gain, u_basal=u_basal,
                             i_mi_basal=basal_interstitial_insulin(u_basal))
    profile = mdl.IsProfile.constant(mdl.K_IS_NOMINAL)
    meals = (plt.MealEvent(0.0, grams),)
    n = int(round(horizon / dt))
    state = plt.PlantState.initial()
    times, bg = np.empty(n + 1), np.empty(n + 1)
    times[0], bg[0] = 0.0, state.bg
    for k in range(n):
        state = plt.plant_step(state, 0.0, meals, profile, dt, params)
        times[k + 1], bg[k + 1] = state.t, state.bg
    return times, bg


def meal_peak(meal_gain, grams=50.0, **kwargs):
    """Peak BG and its time for one meal; see :func:`meal_response`."""
    times, bg = meal_response(meal_gain, grams, **kwargs)
    i = int(np.argmax(bg))
    return float(bg[i]), float(times[i])


@dataclass(frozen=True)
class CalibrationResult:
    i_mi_basal: float
    meal_gain: float
    peak_bg: float
    peak_time: float
    sweep: tuple = field(default=(), compare=False)

    def fragment(self):
        """Config fragment with the calibrated plant constants."""
        return {"plant": {"i_mi_basal": self.i_mi_basal, "meal_gain": self.meal_gain}}


def calibrate(target=TARGET_PEAK, tolerance=PEAK_TOLERANCE, grams=50.0,
              gains=np.geomspace(1.0, 200.0, 12), u_basal=mdl.U_BASAL):
    """Sweep ``gains`` to bracket ``target`` and refine the gain by root finding.

    Raises
    ------
    CalibrationError
        If no adjacent pair of sweep gains brackets the target peak.
    """
    sweep = []
    for g in gains:
        sweep.append((float(g), meal_peak(g, grams, u_basal=u_basal)[0]))
    bracket = next(((g0, g1) for (g0, p0), (g1, p1) in zip(sweep, sweep[1:])
                    if (p0 - target) * (p1 - target) <= 0), None)
    if bracket is None:
        raise CalibrationError(f"sweep does not bracket a {target} mg/dL peak", sweep)
    gain = brentq(lambda g: meal_peak(g, grams, u_basal=u_basal)[0] - target,
                  *bracket, xtol=1e-10)
    peak, when = meal_peak(gain, grams, u_basal=u_basal)
    if abs(peak - target) > tolerance:
        raise CalibrationError(f"refined peak {peak:.3f} misses {target} +/- {tolerance}", sweep)
    return CalibrationResult(i_mi_basal=basal_interstitial_insulin(u_basal), meal_gain=gain,
                             peak_bg=peak, peak_time=when, sweep=tuple(sweep))
