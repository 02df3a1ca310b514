# %%
# Learning a daily disturbance: residuals from the sampled model, the
# zero-phase filter, and a periodic GP predicting a day ahead.
import numpy as np

from gpmpc import gp
from gpmpc import learner as lrn
from gpmpc import model as mdl
from gpmpc import plant as plt

ms = mdl.discretize_model()
profile = mdl.IsProfile()

# %%
# Run the plant at basal insulin for 2.5 days and recover the disturbance from
# consecutive states.
state = plt.PlantState.initial()
buffer = lrn.TrainingBuffer()
truth = []
for k in range(720):
    nxt = plt.plant_step(state, 0.0, (), profile)
    buffer.push(state.t, lrn.compute_residual(nxt.x, state.x, 0.0, ms))
    truth.append(plt.truth_disturbance(state.x, state.t, profile))
    state = nxt
truth = np.array(truth)
err = buffer.raw - truth
print(f"residual vs truth: RMS error {np.sqrt(np.mean(err[288:] ** 2)):.3f}, "
      f"disturbance RMS {np.sqrt(np.mean(truth[288:] ** 2)):.3f}")

# %%
# Fit the periodic kernel on the filtered buffer and look one day ahead.
hp = gp.fit_hyperparams(buffer.times, buffer.filtered)
print(f"theta^2 = {hp.theta_sq:.3g}, l_p = {hp.l_p:.3g}")
model = gp.build_gp(buffer.times, buffer.filtered, hp)
ahead = buffer.times[-1] + 5.0 + 5.0 * np.arange(288)
mean, var = gp.predict(model, ahead)
future = []
for _ in range(288):
    future.append(plt.truth_disturbance(state.x, state.t, profile))
    state = plt.plant_step(state, 0.0, (), profile)
future = np.array(future)
print(f"24 h ahead: RMS error {np.sqrt(np.mean((mean - future) ** 2)):.3f} "
      f"against a peak-to-peak swing of {np.ptp(future):.1f}")
