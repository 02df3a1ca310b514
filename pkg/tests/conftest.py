from dataclasses import replace

import numpy as np
import pytest

from gpmpc import estimator as est
from gpmpc import harness as hrn
from gpmpc import model as mdl

ACCEPTANCE_LINES = []


class Monitor:
    """Step hook that runs a Kalman filter beside the UKF and logs the GP previews."""

    def __init__(self, scenario, config):
        self.config = config
        self.model = mdl.discretize_model(config.ts, config.mpc.u_basal)
        self.announced = {m.time: m.grams_cho for m in scenario.active_meals if m.announced}
        self.kf_pred = est.UkfState.initial(cov=config.ukf.q_process.copy())
        self.kf_mean_gap = 0.0
        self.kf_cov_gap = 0.0
        self.cov_asym = 0.0
        self.gut_gap = 0.0
        self.previews = []

    def __call__(self, k, rec, ukf, decision):
        cfg, ts = self.config, self.config.ts
        kf = est.kf_update(self.kf_pred, rec.bg_meas, cfg.ukf, self.model)
        self.kf_mean_gap = max(self.kf_mean_gap, np.abs(ukf.mean - kf.mean).max())
        self.kf_cov_gap = max(self.kf_cov_gap, np.abs(ukf.cov - kf.cov).max())
        self.cov_asym = max(self.cov_asym, np.abs(ukf.cov - ukf.cov.T).max())
        self.gut_gap = max(self.gut_gap, abs(ukf.mean[mdl.IDX_GUT] - rec.x_true[mdl.IDX_GUT]))
        self.previews.append(decision.preview.copy())
        meal = sum(g for tm, g in self.announced.items() if rec.t <= tm < rec.t + ts)
        u_dev = rec.u_applied - cfg.mpc.u_basal
        self.kf_pred = est.kf_predict(kf, u_dev, meal or None, cfg.ukf, self.model)


class Study:
    """Lazily computed closed-loop runs shared by the whole session."""

    def __init__(self):
        self._runs = {}

    def run(self, kind, controller, **config_changes):
        key = (kind, controller, tuple(sorted(config_changes.items())))
        if key not in self._runs:
            scenario = hrn.make_scenario(kind, controller)
            config = replace(hrn.SimConfig(), **config_changes)
            monitor = Monitor(scenario, config)
            result = hrn.run_closed_loop(scenario, config, step_hook=monitor)
            self._runs[key] = (result, monitor)
        return self._runs[key]


@pytest.fixture(scope="session")
def study():
    return Study()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
