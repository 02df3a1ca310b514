import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpmpc import calibration as cal
from gpmpc import cli
from gpmpc import harness as hrn
from gpmpc import model as mdl
from gpmpc.config import ConfigError, RunConfig, load_config, loads_config, parse_config

SHORT = """
scenario = "announced"
controller = "gp-mpc"
duration = 1.0
gp_activation = 0.5
seed = 7

[plant]
noise_sd = 1.0

[gp]
refit_every = 36
"""


def test_default_config_round_trips():
    cfg = RunConfig()
    assert loads_config(cfg.dumps()) == cfg


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(hrn.KINDS), st.sampled_from(hrn.CONTROLLERS), st.integers(0, 2**31),
       st.floats(0.2, 0.9), st.floats(1.0, 1e6), st.integers(1, 500),
       st.floats(0.0, 5.0), st.floats(10.0, 60.0))
def test_config_round_trip_is_exact(kind, controller, seed, u_max, r, refit, noise, gain):
    cfg = parse_config({
        "scenario": kind, "controller": controller, "seed": seed,
        "mpc": {"u_max": u_max, "r": r}, "gp": {"refit_every": refit},
        "plant": {"noise_sd": noise, "meal_gain": gain},
        "profile": {"breakpoints": [[0.0, 0.9], [600.0, 1.2]]},
    })
    again = loads_config(cfg.dumps())
    assert again == cfg
    assert again.mpc.u_max == u_max and again.plant.meal_gain == gain


def test_controller_spelling_is_normalized():
    assert parse_config({"controller": "gp-mpc"}).controller == "gp_mpc"


@pytest.mark.parametrize("data, path", [
    ({"mpc": {"u_max": -1}}, "mpc.u_max"),
    ({"mpc": {"bogus": 1}}, "mpc.bogus"),
    ({"gp": {"refit_every": "often"}}, "gp.refit_every"),
    ({"controller": "pid"}, "controller"),
    ({"plant": {"noise_sd": -1.0}}, "plant.noise_sd"),
    ({"ukf": {"r_meas": 0.0}}, "ukf.r_meas"),
    ({"bogus": 1}, "bogus"),
])
def test_validation_errors_carry_field_paths(data, path):
    with pytest.raises(ConfigError) as info:
        parse_config(data).validate()
    assert info.value.path == path
    assert str(info.value).startswith(path)


def test_file_loading_and_overrides(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(SHORT, encoding="utf-8")
    cfg = load_config(path)
    assert cfg.controller == "gp_mpc" and cfg.duration == 1.0 and cfg.gp.refit_every == 36
    sim = cfg.sim_config()
    assert sim.noise_sd == 1.0 and sim.refit_every == 36
    assert parse_config({"seed": 3}, cfg).seed == 3


def test_simulate_rejects_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text("[mpc]\nu_max = -1.0\n", encoding="utf-8")
    code = cli.main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_BAD_CONFIG
    assert "mpc.u_max" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


@pytest.fixture(scope="module")
def short_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "run.toml").write_text(SHORT, encoding="utf-8")
    code = cli.main(["simulate", "--config", str(root / "run.toml"), "--out", str(root / "out")])
    return root, code


def test_simulate_writes_csv_and_summary(short_run, capsys):
    root, code = short_run
    assert code == cli.EXIT_OK
    csv_path = root / "out" / "announced_gp_mpc.csv"
    raw = csv_path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0].split(",") == hrn.record_columns()
    assert len(lines) == 1 + 288
    summary = json.loads((root / "out" / "announced_gp_mpc.json").read_text())
    assert summary["status"] == "ok"
    assert set(summary) >= {"mean_bg", "sd_bg", "pct_below_70", "pct_safe_70_180",
                            "pct_tight_80_140", "pct_above_180", "bg_at_0700"}


def test_csv_holds_full_precision(short_run):
    root, _ = short_run
    columns = cli.read_run_csv(root / "out" / "announced_gp_mpc.csv")
    cfg = load_config(root / "run.toml")
    result = cli.run_one(cfg)
    for name in ("t", "bg_true", "bg_meas", "u_applied", "u_kis_predicted", "kkt_residual"):
        np.testing.assert_array_equal(columns[name], result.array(name))
    np.testing.assert_array_equal(columns["x_hat_12"], result.array("x_hat")[:, 11])


def test_stats_recomputes_summary_from_csv(short_run, capsys):
    root, _ = short_run
    capsys.readouterr()
    code = cli.main(["stats", str(root / "out" / "announced_gp_mpc.csv"), "--from-time", "720"])
    assert code == cli.EXIT_OK
    recomputed = json.loads(capsys.readouterr().out)
    saved = json.loads((root / "out" / "announced_gp_mpc.json").read_text())
    for key, value in recomputed.items():
        assert saved[key] == value


def test_stats_on_missing_file(tmp_path):
    assert cli.main(["stats", str(tmp_path / "none.csv")]) != cli.EXIT_OK


def test_format_table_layout():
    stats = hrn.compute_statistics({"t": np.arange(10) * 5.0, "bg_true": np.full(10, 110.0)},
                                   from_time=0.0)
    table = cli.format_table([("fasting", "gp_mpc", stats), ("fasting", "mpc", stats)])
    assert "GP-MPC" in table and "MPC" in table and "110.0" in table


def test_basal_interstitial_insulin_hand_solution():
    u = mdl.U_BASAL
    x9 = 2.23 * u / 0.0166
    x10 = x9 + 0.99 * u / 0.015
    assert cal.basal_interstitial_insulin(u) == pytest.approx(0.0973 / 0.0697 * x10, rel=1e-12)
    assert cal.basal_interstitial_insulin(2 * u) == pytest.approx(
        2 * cal.basal_interstitial_insulin(u), rel=1e-12)


@pytest.fixture(scope="module")
def calibration():
    return cal.calibrate()


def test_calibrated_gain_reproduces_its_peak(calibration):
    assert abs(calibration.peak_bg - cal.TARGET_PEAK) < cal.PEAK_TOLERANCE
    peak, _ = cal.meal_peak(calibration.meal_gain)
    assert abs(peak - cal.TARGET_PEAK) < cal.PEAK_TOLERANCE
    assert calibration.meal_gain == pytest.approx(26.757, rel=1e-4)


def test_calibration_fragment_round_trips(calibration):
    cfg = parse_config(calibration.fragment())
    assert cfg.plant.meal_gain == calibration.meal_gain
    assert cfg.plant.i_mi_basal == calibration.i_mi_basal
    assert loads_config(cfg.dumps()) == cfg


def test_calibration_reports_unbracketed_sweep():
    with pytest.raises(cal.CalibrationError) as info:
        cal.calibrate(gains=np.array([1.0, 2.0, 3.0]))
    assert len(info.value.sweep) == 3
    assert "meal_gain=" in str(info.value)


def test_calibrate_command_writes_fragment(tmp_path, capsys):
    out = tmp_path / "plant.toml"
    assert cli.main(["calibrate", "--out", str(out)]) == cli.EXIT_OK
    cfg = load_config(out)
    assert cfg.plant.meal_gain == pytest.approx(26.757, rel=1e-4)
    assert replace(cfg, plant=RunConfig().plant) == RunConfig()
