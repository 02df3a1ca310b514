# %%
# Deriving the two plant constants that the published model leaves open, then
# driving a short run through the command-line front end.
import tempfile
from pathlib import Path

from gpmpc import calibration as cal
from gpmpc import cli

result = cal.calibrate()
print(f"basal interstitial insulin {result.i_mi_basal:.6f}")
print(f"meal gain {result.meal_gain:.6f}: peak {result.peak_bg:.2f} mg/dL at {result.peak_time:.0f} min")
for gain, peak in result.sweep[:6]:
    print(f"  sweep gain {gain:8.3f} -> peak {peak:7.2f}")

# %%
# A two-day announced-meal run from a config file, then its statistics
# recomputed from the CSV alone.
out = Path(tempfile.mkdtemp())
(out / "short.toml").write_text(
    'scenario = "announced"\ncontroller = "mpc"\nduration = 2.0\ngp_activation = 0.5\n')
cli.main(["simulate", "--config", str(out / "short.toml"), "--out", str(out)])
cli.main(["stats", str(out / "announced_mpc.csv"), "--from-time", "720"])
