# %%
# The 12-state minipig model, its sampled-data form, and the simulated plant
# responding to a meal and to the daily insulin-sensitivity rhythm.
import numpy as np

from gpmpc import model as mdl
from gpmpc import plant as plt

ms = mdl.discretize_model()
print("discrete A_hat spectral radius:", np.abs(np.linalg.eigvals(ms.a_hat_d)).max())
print("sensitivity column (rows 1-5):", np.round(ms.b_kis_d[:5, 0], 4))

# %%
# Insulin sensitivity over one day: low in the morning, high at night.
profile = mdl.IsProfile()
for hour in (0, 4, 7, 10, 13, 16, 19, 22):
    print(f"{hour:02d}:00  k_IS = {mdl.is_at(profile, hour * 60.0):.3f}")

# %%
# A 50 g breakfast on the open-loop plant at basal insulin, k_IS held at 1.
nominal = mdl.IsProfile.constant(1.0)
state = plt.PlantState.initial()
meals = (plt.MealEvent(0.0, 50.0),)
bg = [state.bg]
for _ in range(120):
    state = plt.plant_step(state, 0.0, meals, nominal)
    bg.append(state.bg)
bg = np.array(bg)
print(f"peak {bg.max():.1f} mg/dL at {5 * bg.argmax()} min, back to {bg[-1]:.1f} after 10 h")

# %%
# The same plant with the daily rhythm and no meals drifts away from 110.
state = plt.PlantState.initial()
trace = []
for _ in range(288):
    state = plt.plant_step(state, 0.0, (), profile)
    trace.append(state.bg)
print(f"open-loop fasting day: min {min(trace):.1f}, max {max(trace):.1f} mg/dL")
