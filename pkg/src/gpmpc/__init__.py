"""Glucose control with a Gaussian-process preview of circadian insulin sensitivity.

Modules
-------
numerics     matrix exponential, ZOH discretization, Cholesky and LU helpers
model        12-state linear model, sensitivity profile, discretization
plant        simulated subject with time-varying sensitivity and meals
estimator    unscented Kalman filter (and a linear KF reference)
gp           periodic GP regression and hyperparameter fitting
learner      disturbance residuals, zero-phase filtering, training buffer
qp, mpc      condensed MPC with an active-set QP solver
harness      closed-loop runs, scenarios and zone statistics
calibration  plant constants not given by the model tables
config, cli  TOML run configuration and the ``gpmpc`` command
"""

from .harness import (SimConfig, Scenario, compute_statistics, make_scenario,
                      run_closed_loop)
from .model import IsProfile, discretize_model

__all__ = [
    "SimConfig", "Scenario", "compute_statistics", "make_scenario", "run_closed_loop",
    "IsProfile", "discretize_model",
]
__version__ = "0.1.0"
