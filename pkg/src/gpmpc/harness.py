"""Closed-loop orchestration: plant -> UKF -> residual learner -> GP -> MPC.

Per 5-min sample the loop runs measure, filter update, learn, control, advance.
"""

import logging
import time as _time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import estimator as est
from . import gp as gpm
from . import learner as lrn
from . import model as mdl
from . import plant as plt
from .mpc import MpcParams, PredictionMatrices, mpc_step
from .qp import QpSolverError

log = logging.getLogger(__name__)

DAY = 1440.0
CONTROLLERS = ("gp_mpc", "mpc")
KINDS = ("fasting", "announced", "skipped")


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float = 7.0
    gp_activation: float = 2.5
    meals: tuple = ()
    skip: tuple = ()
    controller: str = "gp_mpc"
    seed: int = 0

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}")
        if not self.duration > self.gp_activation:
            raise ValueError("duration must exceed gp_activation")
        for m in self.meals:
            if not 0 <= m.time < self.duration * DAY:
                raise ValueError(f"meal at {m.time} min outside the simulation")

    @property
    def active_meals(self):
        skipped = set(self.skip)
        return tuple(m for i, m in enumerate(self.meals) if i not in skipped)


def make_scenario(kind, controller="gp_mpc", seed=0, duration=7.0, grams=50.0,
                  meal_minute=420.0, skip_day=5, gp_activation=2.5):
    """Standard study scenarios: fasting, daily announced breakfast, or one skipped breakfast.

    ``skip_day`` counts from 1, so the default removes the breakfast of the 5th day.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    meals = ()
    if kind in ("announced", "skipped"):
        meals = tuple(plt.MealEvent(d * DAY + meal_minute, grams, True)
                      for d in range(int(np.ceil(duration)))
                      if d * DAY + meal_minute < duration * DAY)
    scenario = Scenario(name=kind, duration=duration, gp_activation=gp_activation,
                        meals=meals, controller=controller, seed=seed)
    if kind == "skipped":
        scenario = replace(scenario, meals=tuple(
            m for i, m in enumerate(meals) if i != skip_day - 1))
    return scenario


def _default_ukf():
    return est.UkfConfig(meal_gain=plt.DEFAULT_MEAL_GAIN)


@dataclass(frozen=True)
class SimConfig:
    """Everything besides the scenario that shapes a run."""

    profile: mdl.IsProfile = field(default_factory=mdl.IsProfile)
    plant: plt.PlantParams = field(default_factory=plt.PlantParams)
    ukf: est.UkfConfig = field(default_factory=_default_ukf)
    mpc: MpcParams = field(default_factory=MpcParams)
    gp_init: gpm.Hyperparams = field(default_factory=gpm.Hyperparams)
    refit_every: int = 72
    buffer_capacity: int = 720
    filter_window: int = lrn.FILTER_WINDOW
    noise_sd: float = 0.0
    ts: float = 5.0

    def __post_init__(self):
        if self.refit_every < 1:
            raise ValueError("refit_every must be at least 1 sample")
        if self.buffer_capacity < lrn.MIN_TRAIN_POINTS:
            raise ValueError("buffer_capacity too small")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if self.ts <= 0:
            raise ValueError("ts must be positive")
        if not np.isclose(self.ukf.meal_gain, self.plant.meal_gain):
            log.warning("UKF meal gain %s differs from plant meal gain %s",
                        self.ukf.meal_gain, self.plant.meal_gain)


@dataclass
class StepRecord:
    t: float
    bg_true: float
    bg_meas: float
    u_applied: float
    k_is_true: float
    u_truth: float
    u_kis_raw: float
    u_kis_filtered: float
    u_kis_predicted: float
    u_kis_pred_var: float
    x_hat: np.ndarray
    x_true: np.ndarray
    qp_status: str
    qp_iterations: int
    kkt_residual: float
    active_set_size: int
    gp_active: bool
    theta_sq: float
    l_p: float


STATE_COLUMNS = ("x_hat", "x_true")


def record_columns():
    """Flat CSV column names, vectors expanded as ``x_hat_1 .. x_hat_12``."""
    cols = []
    for f in fields(StepRecord):
        if f.name in STATE_COLUMNS:
            cols.extend(f"{f.name}_{i + 1}" for i in range(mdl.N_STATES))
        else:
            cols.append(f.name)
    return cols


def record_row(rec):
    row = []
    for f in fields(StepRecord):
        v = getattr(rec, f.name)
        if f.name in STATE_COLUMNS:
            row.extend(float(x) for x in v)
        else:
            row.append(v)
    return row


@dataclass
class SimResult:
    scenario: Scenario
    records: list
    status: str = "ok"
    error: str = ""
    wall_time: float = 0.0

    def array(self, name):
        return np.array([getattr(r, name) for r in self.records])


def run_closed_loop(scenario, config=SimConfig(), step_hook=None):
    """Simulate ``scenario`` and return a :class:`SimResult` with one record per sample.

    Plant divergence or a QP failure stops the run early; the partial records
    are kept and ``status`` names the failure.
    """
    ts = config.ts
    model = mdl.discretize_model(ts, config.mpc.u_basal)
    pred = PredictionMatrices.build(model, config.mpc.horizon)
    rng = np.random.Generator(np.random.Philox(scenario.seed))
    meals = scenario.active_meals
    announced = {m.time: m.grams_cho for m in meals if m.announced}

    state = plt.PlantState.initial()
    ukf = est.UkfState.initial(cov=config.ukf.q_process.copy())
    buffer = lrn.TrainingBuffer(config.buffer_capacity, ts, config.filter_window)
    hp = config.gp_init
    learned = gpm.InactiveGp(hp)
    fitted_at = None
    x_prev, u_prev = None, 0.0
    activation = scenario.gp_activation * DAY
    use_gp = scenario.controller == "gp_mpc"
    n_steps = int(round(scenario.duration * DAY / ts))

    records = []
    status, error = "ok", ""
    started = _time.perf_counter()
    try:
        for k in range(n_steps):
            t = k * ts
            bg_true = state.bg
            y = plt.measure(state, config.noise_sd, rng)
            ukf = est.ukf_update(ukf, y, config.ukf, model)

            raw = np.nan
            gp_on = use_gp and t >= activation
            if x_prev is not None:
                raw = lrn.compute_residual(ukf.mean, x_prev, u_prev, model)
                refit = gp_on and (fitted_at is None or k - fitted_at >= config.refit_every)
                learned, hp = lrn.push_and_train(buffer, t - ts, raw, hp, refit,
                                                 init=config.gp_init, rebuild=gp_on)
                if refit:
                    fitted_at = k
            gp_used = learned if gp_on else gpm.InactiveGp(hp)

            decision = mpc_step(ukf.mean, gp_used, t, config.mpc, model, pred)
            u_dev = decision.u - config.mpc.u_basal

            k_is = mdl.is_at(config.profile, t)
            records.append(StepRecord(
                t=t, bg_true=bg_true, bg_meas=y, u_applied=decision.u, k_is_true=k_is,
                u_truth=plt.truth_disturbance(state.x, t, config.profile, config.plant.i_mi_basal),
                u_kis_raw=raw,
                u_kis_filtered=buffer.filtered[-1] if len(buffer) else np.nan,
                u_kis_predicted=float(decision.preview[0]),
                u_kis_pred_var=float(decision.preview_var[0]),
                x_hat=ukf.mean.copy(), x_true=state.x.copy(),
                qp_status="soft" if decision.status.soft_terminal else "ok",
                qp_iterations=decision.status.iterations,
                kkt_residual=decision.status.kkt_residual,
                active_set_size=decision.status.active_set_size,
                gp_active=bool(gp_used.active), theta_sq=hp.theta_sq, l_p=hp.l_p,
            ))
            if step_hook is not None:
                step_hook(k, records[-1], ukf, decision)

            x_prev, u_prev = ukf.mean, u_dev
            meal_now = sum(g for tm, g in announced.items() if t <= tm < t + ts)
            ukf = est.ukf_predict(ukf, u_dev, meal_now or None, config.ukf, model)
            state = plt.plant_step(state, u_dev, meals, config.profile, ts, config.plant)
    except plt.SimulationDiverged as exc:
        status, error = "diverged", str(exc)
    except QpSolverError as exc:
        status, error = "solver-failure", str(exc)
    except (est.EstimatorError, gpm.GpError) as exc:
        status, error = "estimator-failure", str(exc)
    if status != "ok":
        log.error("%s run stopped: %s", scenario.name, error)
    return SimResult(scenario=scenario, records=records, status=status, error=error,
                     wall_time=_time.perf_counter() - started)


@dataclass(frozen=True)
class ZoneStatistics:
    mean_bg: float
    sd_bg: float
    pct_below_70: float
    pct_safe_70_180: float
    pct_tight_80_140: float
    pct_above_180: float
    bg_at_0700: float

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def compute_statistics(records, from_time=2.5 * DAY, bg_key="bg_true", ts=5.0):
    """Summary statistics over records with ``t >= from_time``.

    Accepts a list of :class:`StepRecord` or a mapping of column arrays.
    """
    if isinstance(records, dict):
        t = np.asarray(records["t"], dtype=float)
        bg = np.asarray(records[bg_key], dtype=float)
    else:
        t = np.array([r.t for r in records], dtype=float)
        bg = np.array([getattr(r, bg_key) for r in records], dtype=float)
    sel = t >= from_time - 1e-9
    if not sel.any():
        raise ValueError("no records at or after from_time")
    t, bg = t[sel], bg[sel]
    n = bg.size

    def pct(mask):
        return 100.0 * np.count_nonzero(mask) / n

    minute = np.mod(t, DAY)
    morning = bg[np.abs(minute - 420.0) < ts / 2]
    return ZoneStatistics(
        mean_bg=float(bg.mean()),
        sd_bg=float(bg.std()),
        pct_below_70=pct(bg < 70),
        pct_safe_70_180=pct((bg >= 70) & (bg <= 180)),
        pct_tight_80_140=pct((bg >= 80) & (bg <= 140)),
        pct_above_180=pct(bg > 180),
        bg_at_0700=float(morning.mean()) if morning.size else float("nan"),
    )


def input_lag(t, u, k_is, from_time=3 * DAY, max_lag=144, ts=5.0):
    """Lag of the strongest anticorrelation between insulin and insulin sensitivity.

    Pairs ``u(t + L)`` with ``k_is(t)`` for ``|L| <= max_lag`` samples and returns
    ``(L_minutes, corr)`` at the most negative Pearson correlation. Insulin
    falls when sensitivity rises, so the extremum is a minimum; a negative lag
    means the input moves ahead of the sensitivity.
    """
    t = np.asarray(t, dtype=float)
    sel = t >= from_time - 1e-9
    u = np.asarray(u, dtype=float)[sel]
    k = np.asarray(k_is, dtype=float)[sel]
    n = u.size
    if n <= 2 * max_lag:
        raise ValueError("series too short for the requested lag range")
    best = (0.0, np.inf)
    for lag in range(-max_lag, max_lag + 1):
        a = u[lag:] if lag >= 0 else u[:n + lag]
        b = k[:n - lag] if lag >= 0 else k[-lag:]
        c = np.corrcoef(a, b)[0, 1]
        if c < best[1]:
            best = (lag * ts, float(c))
    return best
