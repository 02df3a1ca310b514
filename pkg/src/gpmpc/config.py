"""Run configuration: TOML file plus command-line overrides, validated up front.

Layout::

    scenario = "fasting"        # fasting | announced | skipped
    controller = "gp_mpc"       # gp_mpc | mpc ("gp-mpc" accepted)
    seed = 0
    duration = 7.0              # days
    gp_activation = 2.5         # days

    [plant]    i_mi_basal, meal_gain, noise_sd, max_substep
    [profile]  breakpoints = [[minute, k_is], ...], period
    [mpc]      horizon, q, r, u_max, u_basal, terminal_mode, terminal_weight
    [gp]       theta_sq, l_se, l_p, lam, refit_every, buffer_capacity, filter_window
    [ukf]      alpha, beta, kappa, r_meas, q_disturbance, q_floor
"""

from dataclasses import asdict, dataclass, field, fields, replace

import tomli
import tomli_w

from . import estimator as est
from . import gp as gpm
from . import harness as hrn
from . import learner as lrn
from . import model as mdl
from . import plant as plt
from .mpc import MpcParams


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class PlantSection:
    i_mi_basal: float = plt.DEFAULT_I_MI_BASAL
    meal_gain: float = plt.DEFAULT_MEAL_GAIN
    noise_sd: float = 0.0
    max_substep: float = 0.5

    def __post_init__(self):
        if self.i_mi_basal < 0:
            raise ValueError("i_mi_basal must be non-negative")
        if self.meal_gain < 0:
            raise ValueError("meal_gain must be non-negative")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")
        if not 0 < self.max_substep <= 5.0:
            raise ValueError("max_substep must lie in (0, 5] minutes")


@dataclass(frozen=True)
class GpSection:
    theta_sq: float = 1.0
    l_se: float = 1e9
    l_p: float = 1.0
    lam: float = mdl.PERIOD
    refit_every: int = 72
    buffer_capacity: int = 720
    filter_window: int = lrn.FILTER_WINDOW

    def __post_init__(self):
        gpm.Hyperparams(self.theta_sq, self.l_se, self.l_p, self.lam)
        if self.refit_every < 1:
            raise ValueError("refit_every must be at least 1 sample")
        if self.buffer_capacity < lrn.MIN_TRAIN_POINTS:
            raise ValueError(f"buffer_capacity must be at least {lrn.MIN_TRAIN_POINTS}")
        if self.filter_window < 3:
            raise ValueError("filter_window must be at least 3 samples")


@dataclass(frozen=True)
class UkfSection:
    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0
    r_meas: float = 1.0
    q_disturbance: float = est.Q_DISTURBANCE
    q_floor: float = est.Q_FLOOR

    def __post_init__(self):
        if self.q_disturbance < 0 or self.q_floor <= 0:
            raise ValueError("q_disturbance must be non-negative and q_floor positive")


SECTIONS = {
    "plant": PlantSection,
    "profile": mdl.IsProfile,
    "mpc": MpcParams,
    "gp": GpSection,
    "ukf": UkfSection,
}


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "fasting"
    controller: str = "gp_mpc"
    seed: int = 0
    duration: float = 7.0
    gp_activation: float = 2.5
    plant: PlantSection = field(default_factory=PlantSection)
    profile: mdl.IsProfile = field(default_factory=mdl.IsProfile)
    mpc: MpcParams = field(default_factory=MpcParams)
    gp: GpSection = field(default_factory=GpSection)
    ukf: UkfSection = field(default_factory=UkfSection)

    def make_scenario(self):
        try:
            return hrn.make_scenario(self.scenario, self.controller, self.seed, self.duration,
                                     gp_activation=self.gp_activation)
        except ValueError as exc:
            raise ConfigError(_guess_path("", exc, ("scenario", "controller", "duration",
                                                    "gp_activation")), str(exc)) from None

    def sim_config(self):
        model = mdl.discretize_model(u_basal=self.mpc.u_basal)
        try:
            q = est.disturbance_process_noise(model, self.ukf.q_disturbance, self.ukf.q_floor)
            ukf = est.UkfConfig(alpha=self.ukf.alpha, beta=self.ukf.beta, kappa=self.ukf.kappa,
                                q_process=q, r_meas=self.ukf.r_meas,
                                meal_gain=self.plant.meal_gain)
        except ValueError as exc:
            raise ConfigError(_guess_path("ukf", exc, _names(UkfSection)), str(exc)) from None
        plant = plt.PlantParams(i_mi_basal=self.plant.i_mi_basal,
                                meal_gain=self.plant.meal_gain, u_basal=self.mpc.u_basal,
                                u_max=self.mpc.u_max, max_substep=self.plant.max_substep)
        hp = gpm.Hyperparams(self.gp.theta_sq, self.gp.l_se, self.gp.l_p, self.gp.lam)
        return hrn.SimConfig(profile=self.profile, plant=plant, ukf=ukf, mpc=self.mpc,
                             gp_init=hp, refit_every=self.gp.refit_every,
                             buffer_capacity=self.gp.buffer_capacity,
                             filter_window=self.gp.filter_window,
                             noise_sd=self.plant.noise_sd)

    def validate(self):
        """Build every run object once so that errors surface before any run starts."""
        self.make_scenario()
        self.sim_config()
        return self

    def to_mapping(self):
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in SECTIONS:
                value = asdict(value)
                if f.name == "profile":
                    value["breakpoints"] = [list(p) for p in value["breakpoints"]]
            out[f.name] = value
        return out

    def dumps(self):
        return tomli_w.dumps(self.to_mapping())


def _names(cls):
    return tuple(f.name for f in fields(cls))


def _guess_path(section, exc, candidates):
    msg = str(exc)
    hits = [c for c in candidates if c in msg]
    prefix = f"{section}." if section else ""
    if not hits and len(candidates) == 1:
        hits = list(candidates)
    if hits:
        return ",".join(prefix + h for h in hits)
    return section or "<root>"


def _coerce(path, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    return value


def _parse_section(name, current, data):
    cls = type(current)
    if not isinstance(data, dict):
        raise ConfigError(name, "expected a table")
    known = _names(cls)
    changes = {}
    for key, value in data.items():
        path = f"{name}.{key}"
        if key not in known:
            raise ConfigError(path, "unknown field")
        if name == "profile" and key == "breakpoints":
            if not isinstance(value, (list, tuple)) or not all(
                    isinstance(p, (list, tuple)) and len(p) == 2 for p in value):
                raise ConfigError(path, "expected a list of [minute, value] pairs")
            changes[key] = tuple((float(t), float(v)) for t, v in value)
        else:
            changes[key] = _coerce(path, value, getattr(current, key))
    try:
        return replace(current, **changes)
    except ValueError as exc:
        raise ConfigError(_guess_path(name, exc, tuple(changes) or known), str(exc)) from None


def _normalize_controller(name):
    return name.replace("-", "_") if isinstance(name, str) else name


def parse_config(data, base=None):
    """Apply a nested mapping of overrides to ``base`` and validate the result."""
    cfg = base if base is not None else RunConfig()
    changes = {}
    top = {f.name: f for f in fields(RunConfig)}
    for key, value in data.items():
        if key not in top:
            raise ConfigError(key, "unknown field")
        if key in SECTIONS:
            changes[key] = _parse_section(key, getattr(cfg, key), value)
        else:
            if key == "controller":
                value = _normalize_controller(value)
            changes[key] = _coerce(key, value, getattr(cfg, key))
    cfg = replace(cfg, **changes)
    if cfg.scenario not in hrn.KINDS:
        raise ConfigError("scenario", f"must be one of {hrn.KINDS}")
    if cfg.controller not in hrn.CONTROLLERS:
        raise ConfigError("controller", f"must be one of {hrn.CONTROLLERS}")
    return cfg.validate()


def loads_config(text, base=None):
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"not valid TOML: {exc}") from None
    return parse_config(data, base)


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return loads_config(fh.read(), base)
