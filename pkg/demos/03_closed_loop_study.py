# %%
# Fasting week with and without the learned preview. The GP-MPC run takes a
# couple of minutes on one core; the plain MPC run takes seconds.
from gpmpc import cli
from gpmpc import harness as hrn
from gpmpc import model as mdl

rows = []
runs = {}
for controller in ("mpc", "gp_mpc"):
    result = hrn.run_closed_loop(hrn.make_scenario("fasting", controller))
    runs[controller] = result
    rows.append(("fasting", controller, hrn.compute_statistics(result.records)))
    print(f"{controller}: {result.status} in {result.wall_time:.0f} s")
print(cli.format_table(rows))

# %%
# Where does the insulin sit relative to the sensitivity swing? A negative lag
# means the input moves first.
for controller, result in runs.items():
    lag, corr = hrn.input_lag(result.array("t"), result.array("u_applied") - mdl.U_BASAL,
                              result.array("k_is_true"))
    print(f"{controller}: strongest anticorrelation at {lag:+.0f} min (r = {corr:.3f})")

# %%
# Morning glucose per day: the learned preview removes the dawn rise.
for controller, result in runs.items():
    bg = result.array("bg_true")
    mornings = [f"{bg[int((d * 1440 + 420) / 5)]:.1f}" for d in range(7)]
    print(controller, " ".join(mornings))
