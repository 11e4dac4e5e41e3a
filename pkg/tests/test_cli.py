from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from omcavity import io as fio
from omcavity.cli import LOCK_NAME, run
from omcavity.omresponse import omia_depth
from omcavity.plots import read_series_csv

TWO_PI = 2 * math.pi

NETWORK = {"shunt_c_f": 29.8e-15, "series_l_h": 5.4e-9, "branches": []}
CAVITY = {"omega_c_hz": 6.0e9, "kappa_int_hz": 281e3, "kappa_in_hz": 100e3,
          "kappa_out_hz": 100e3, "amp_scale": 0.5}
DRUM = {"omega_m_hz": 5.3e6, "gamma_m_hz": 250.0, "g0_hz": 8.0}
COOPS = [0.5, 1, 2, 4, 8, 15, 25, 40]
TUNE_MODEL = {"f0_hz": 5.23e6,
              "geometry": {"diameter_m": 22e-6, "gap_m": 300e-9, "film_thickness_m": 100e-9,
                           "density_kg_per_m3": 2700.0, "n_drums": 2}}


def write_config(path: Path, data: dict) -> Path:
    path.write_text(json.dumps(data))
    return path


def snapshot(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


@pytest.fixture
def sim_dir(tmp_path):
    """Eight noisy pump-power traces."""
    cfg = write_config(tmp_path / "sim.json", {
        "cavity": CAVITY, "mechanics": [DRUM],
        "pump": {"attenuation_db": 60, "coops": COOPS}, "seed": 7, "snr_db": 30})
    assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")]) == 0
    return tmp_path


class TestModes:
    def test_coupled_mode(self, tmp_path):
        cfg = write_config(tmp_path / "m.json", {"network": NETWORK, "c_m_f": 23e-15})
        assert run(["modes", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        report = fio.read_json(tmp_path / "o" / "modes.json")
        row = report["modes"][0]
        assert row["f0_ghz"] == pytest.approx(9.4, abs=0.1)
        assert row["participation"] == pytest.approx(23 / 52.8, rel=1e-6)
        assert set(row) >= {"f0_ghz", "z_ohm", "c_p_ff", "l_p_nh", "participation"}
        assert not (tmp_path / "o" / LOCK_NAME).exists()

    def test_flag_zero_gives_bare_network(self, tmp_path):
        cfg = write_config(tmp_path / "m.json", {"network": NETWORK, "c_m_f": 23e-15})
        assert run(["modes", "--config", str(cfg), "--out", str(tmp_path / "o"), "--c-m-f", "0"]) == 0
        row = fio.read_json(tmp_path / "o" / "modes.json")["modes"][0]
        f_bare = 1 / (TWO_PI * math.sqrt(5.4e-9 * 29.8e-15)) / 1e9
        assert row["f0_ghz"] == pytest.approx(f_bare, rel=1e-8)
        assert row["participation"] == 0.0

    def test_network_from_file_and_admittance_round_trip(self, tmp_path):
        (tmp_path / "net.json").write_text(json.dumps(NETWORK))
        cfg = write_config(tmp_path / "m.json", {"network_path": "net.json", "c_m_f": 23e-15})
        assert run(["modes", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
        # the tabulated susceptance already includes c_m; re-run from it with none added
        cfg2 = write_config(tmp_path / "m2.json", {"admittance_path": "a/admittance.csv", "c_m_f": 0})
        assert run(["modes", "--config", str(cfg2), "--out", str(tmp_path / "b")]) == 0
        f_a = fio.read_json(tmp_path / "a" / "modes.json")["modes"][0]["f0_ghz"]
        f_b = fio.read_json(tmp_path / "b" / "modes.json")["modes"][0]["f0_ghz"]
        assert f_b == pytest.approx(f_a, rel=1e-6)

    def test_malformed_json(self, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text('{"network": {"shunt_c_f": 1e-14,, }')
        assert run(["modes", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_bad_key_named(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "m.json", {"network": {"shunt_c_f": "big", "series_l_h": 5e-9}})
        assert run(["modes", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "shunt_c_f" in capsys.readouterr().err

    def test_missing_path_named(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "m.json", {"network_path": "absent.json"})
        assert run(["modes", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "network_path" in capsys.readouterr().err

    def test_negative_capacitance(self, tmp_path):
        cfg = write_config(tmp_path / "m.json", {"network": NETWORK})
        assert run(["modes", "--config", str(cfg), "--out", str(tmp_path / "o"), "--c-m-f", "-1e-15"]) == 1


class TestSimulate:
    def test_same_seed_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path / "s.json", {
            "cavity": CAVITY, "mechanics": [DRUM], "pump": {"attenuation_db": 60, "coops": [1, 4, 9]},
            "seed": 11, "snr_db": 25})
        for d in ("a", "b"):
            assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
        assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = write_config(tmp_path / "s.json", {"cavity": CAVITY, "seed": 1, "snr_db": 20})
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"]) == 0
        assert snapshot(tmp_path / "a")["trace_000.csv"] != snapshot(tmp_path / "b")["trace_000.csv"]

    def test_infinite_snr_is_noiseless(self, tmp_path):
        cfg = write_config(tmp_path / "s.json", {"cavity": CAVITY, "seed": 3})
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--snr-db", "inf"]) == 0
        tr = fio.read_trace_csv(tmp_path / "o" / "trace_000.csv")
        cav = fio.cavity_from_dict(CAVITY)
        expected = cav.amp_scale / (1 - 2j * (TWO_PI * tr.freqs - cav.omega_c) / cav.kappa)
        np.testing.assert_allclose(tr.s21, expected, rtol=1e-12)
        assert fio.read_json(tmp_path / "o" / "simulate.json")["noiseless"] is True

    def test_coop_40_depth(self, tmp_path):
        cfg = write_config(tmp_path / "s.json", {
            "cavity": CAVITY, "mechanics": [DRUM], "pump": {"attenuation_db": 60, "coops": [40]}})
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        tr = fio.read_trace_csv(tmp_path / "o" / "trace_000.csv")
        depth = tr.magnitude.min() / CAVITY["amp_scale"]
        assert depth == pytest.approx(omia_depth(40.0), rel=1e-3)
        assert depth == pytest.approx(1 / 41, rel=1e-3)

    def test_generator_metadata(self, sim_dir):
        tr = fio.read_trace_csv(sim_dir / "sim" / "trace_003.csv")
        assert tr.meta["gen_coop"] == COOPS[3]
        assert tr.meta["gen_g0_hz"] == pytest.approx(8.0)
        assert tr.meta["seed"] == 7 and tr.meta["snr_db"] == 30
        assert {"pump_dbm", "pump_hz", "atten_db", "gen_n_d"} <= set(tr.meta)

    def test_schema_violation(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "s.json", {"cavity": {"omega_c_hz": 6e9}})
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "kappa_int_hz" in capsys.readouterr().err

    def test_bad_seed(self, tmp_path):
        cfg = write_config(tmp_path / "s.json", {"cavity": CAVITY, "seed": -1})
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"),
                    "--seed", str(2**64)]) == 1


class TestFit:
    def test_batch_recovers_g0(self, sim_dir):
        cfg = write_config(sim_dir / "fit.json", {"mode": "batch", "traces": ["sim/trace_*.csv"],
                                                  "kappa_in_hz": 100e3, "kappa_out_hz": 100e3})
        assert run(["fit", "--config", str(cfg), "--out", str(sim_dir / "fit")]) == 0
        report = fio.read_json(sim_dir / "fit" / "fitreport.json")
        assert report["g0"]["g0_hz"] == pytest.approx(8.0, rel=0.02)
        pts = fio.read_coop_points_csv(sim_dir / "fit" / "coop_points.csv")
        assert len(pts) == len(COOPS)
        assert [p.n_d for p in pts] == sorted(p.n_d for p in pts)
        assert report["traces"][0]["trace"] == "sim/trace_000.csv"

    def test_single_trace_insufficient(self, sim_dir):
        cfg = write_config(sim_dir / "fit.json", {"mode": "batch", "traces": ["sim/trace_000.csv"],
                                                  "kappa_in_hz": 100e3, "kappa_out_hz": 100e3})
        assert run(["fit", "--config", str(cfg), "--out", str(sim_dir / "fit")]) == 4

    def test_missing_metadata_header(self, sim_dir):
        src = (sim_dir / "sim" / "trace_002.csv").read_text().splitlines()
        stripped = [ln for ln in src if not ln.startswith("#pump_hz")]
        (sim_dir / "nohdr.csv").write_text("\n".join(stripped) + "\n")
        cfg = write_config(sim_dir / "fit.json", {"mode": "omia", "traces": ["nohdr.csv"],
                                                  "cavity": CAVITY})
        assert run(["fit", "--config", str(cfg), "--out", str(sim_dir / "fit")]) == 1

    def test_not_converged_exit_and_partial_report(self, sim_dir):
        cfg = write_config(sim_dir / "fit.json", {"mode": "bare", "traces": ["sim/trace_000.csv"],
                                                  "max_iter": 1})
        assert run(["fit", "--config", str(cfg), "--out", str(sim_dir / "fit")]) == 3
        report = fio.read_json(sim_dir / "fit" / "fitreport.json")
        assert report["fits"][0]["converged"] is False

    def test_bare_fit(self, tmp_path):
        cfg = write_config(tmp_path / "s.json", {"cavity": CAVITY, "seed": 5, "snr_db": 30})
        assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")]) == 0
        fcfg = write_config(tmp_path / "f.json", {"mode": "bare", "traces": "sim/trace_000.csv"})
        assert run(["fit", "--config", str(fcfg), "--out", str(tmp_path / "fit")]) == 0
        fit = fio.read_json(tmp_path / "fit" / "fitreport.json")["fits"][0]
        kappa_hz = CAVITY["kappa_int_hz"] + CAVITY["kappa_in_hz"] + CAVITY["kappa_out_hz"]
        assert fit["kappa_hz"] == pytest.approx(kappa_hz, rel=0.01)
        assert read_series_csv(tmp_path / "fit" / "residuals.csv")

    def test_omia_fit_from_bare_estimate(self, sim_dir):
        cfg = write_config(sim_dir / "fit.json", {"mode": "omia", "traces": ["sim/trace_007.csv"],
                                                  "kappa_in_hz": 100e3, "kappa_out_hz": 100e3})
        assert run(["fit", "--config", str(cfg), "--out", str(sim_dir / "fit")]) == 0
        fit = fio.read_json(sim_dir / "fit" / "fitreport.json")["fits"][0]
        # a dip 1/41 deep at 30 dB SNR leaves about 10% uncertainty on C
        assert abs(fit["coop"] - COOPS[7]) <= 3 * fit["coop_sigma"]
        assert fit["coop_sigma"] < 0.15 * COOPS[7]

    def test_unknown_mode(self, sim_dir):
        cfg = write_config(sim_dir / "fit.json", {"mode": "magic", "traces": ["sim/trace_000.csv"]})
        assert run(["fit", "--config", str(cfg), "--out", str(sim_dir / "fit")]) == 1

    def test_glob_matches_nothing(self, tmp_path):
        cfg = write_config(tmp_path / "fit.json", {"mode": "bare", "traces": ["none_*.csv"]})
        assert run(["fit", "--config", str(cfg), "--out", str(tmp_path / "fit")]) == 1


class TestTune:
    def forward(self, tmp_path, volts, **extra):
        cfg = write_config(tmp_path / "t.json", {"mode": "forward", "model": TUNE_MODEL,
                                                 "volts": volts, **extra})
        return run(["tune", "--config", str(cfg), "--out", str(tmp_path / "fwd")])

    def test_zero_bias_echo(self, tmp_path):
        assert self.forward(tmp_path, [0.0]) == 0
        report = fio.read_json(tmp_path / "fwd" / "tunereport.json")
        assert report["points"][0]["freq_hz"] == pytest.approx(5.23e6, rel=1e-15)

    def test_noiseless_round_trip(self, tmp_path):
        assert self.forward(tmp_path, {"v_min": -0.5, "v_max": 0.5, "points": 21}) == 0
        fwd = fio.read_json(tmp_path / "fwd" / "tunereport.json")
        cfg = write_config(tmp_path / "fit.json", {"mode": "fit", "vsweep_path": "fwd/vsweep.csv",
                                                   "spring_k_n_per_m": fwd["spring_k_n_per_m"]})
        assert run(["tune", "--config", str(cfg), "--out", str(tmp_path / "fit")]) == 0
        fit = fio.read_json(tmp_path / "fit" / "tunereport.json")
        assert fit["curvature_hz_per_v2"] == pytest.approx(fwd["curvature_hz_per_v2"], rel=1e-3)
        assert fit["c_dprime_f_per_m2"] == pytest.approx(fwd["c_dprime_f_per_m2"], rel=1e-3)
        # the quartic term of the exact curve shifts the intercept by ~f0 x**2 / 8
        assert fit["f0_hz"] == pytest.approx(5.23e6, rel=1e-6)

    def test_noisy_sweep_curvature(self, tmp_path):
        assert self.forward(tmp_path, {"v_min": -5, "v_max": 5, "points": 41},
                            noise_rel_excursion=0.01, seed=4) == 0
        fwd = fio.read_json(tmp_path / "fwd" / "tunereport.json")
        cfg = write_config(tmp_path / "fit.json", {"mode": "fit", "vsweep_path": "fwd/vsweep.csv"})
        assert run(["tune", "--config", str(cfg), "--out", str(tmp_path / "fit")]) == 0
        fit = fio.read_json(tmp_path / "fit" / "tunereport.json")
        assert fit["curvature_hz_per_v2"] == pytest.approx(fwd["curvature_hz_per_v2"], rel=0.05)

    def test_pull_in(self, tmp_path):
        assert self.forward(tmp_path, [0.0, 100.0]) == 2

    def test_plot_has_data_and_parabola(self, tmp_path):
        assert self.forward(tmp_path, {"v_min": -1, "v_max": 1, "points": 11}) == 0
        cfg = write_config(tmp_path / "fit.json", {"mode": "fit", "vsweep_path": "fwd/vsweep.csv"})
        assert run(["tune", "--config", str(cfg), "--out", str(tmp_path / "fit")]) == 0
        kinds = {s.kind for s in read_series_csv(tmp_path / "fit" / "tune_plot.csv")}
        assert kinds == {"scatter", "line"}


class TestContract:
    def test_determinism_every_command(self, tmp_path):
        configs = {
            "modes": {"network": NETWORK, "c_m_f": 23e-15},
            "simulate": {"cavity": CAVITY, "mechanics": [DRUM],
                         "pump": {"attenuation_db": 60, "coops": [1, 5, 20]}, "seed": 9, "snr_db": 30},
            "tune": {"mode": "forward", "model": TUNE_MODEL, "volts": {"v_min": -3, "v_max": 3, "points": 13},
                     "noise_rel_excursion": 0.01, "seed": 2},
        }
        for cmd, data in configs.items():
            cfg = write_config(tmp_path / f"{cmd}.json", data)
            for d in ("a", "b"):
                assert run([cmd, "--config", str(cfg), "--out", str(tmp_path / f"{cmd}_{d}")]) == 0
            assert snapshot(tmp_path / f"{cmd}_a") == snapshot(tmp_path / f"{cmd}_b")
        fit = write_config(tmp_path / "fit.json", {"mode": "batch", "traces": ["simulate_a/trace_*.csv"],
                                                   "kappa_in_hz": 100e3, "kappa_out_hz": 100e3})
        for d in ("a", "b"):
            assert run(["fit", "--config", str(fit), "--out", str(tmp_path / f"fit_{d}")]) == 0
        assert snapshot(tmp_path / "fit_a") == snapshot(tmp_path / "fit_b")

    def test_outputs_reparse(self, sim_dir):
        out = sim_dir / "sim"
        for p in out.glob("trace_*.csv"):
            fio.read_trace_csv(p)
        cfg = write_config(sim_dir / "fit.json", {"mode": "batch", "traces": ["sim/trace_*.csv"],
                                                  "kappa_in_hz": 100e3, "kappa_out_hz": 100e3})
        assert run(["fit", "--config", str(cfg), "--out", str(sim_dir / "fit")]) == 0
        for p in (sim_dir / "fit").glob("*.json"):
            fio.read_json(p)
        fio.read_coop_points_csv(sim_dir / "fit" / "coop_points.csv")
        for p in (sim_dir / "fit").glob("*_plot.csv"):
            assert read_series_csv(p)

    def test_argparse_errors_are_input_errors(self, tmp_path):
        assert run(["modes"]) == 1
        assert run(["bogus"]) == 1

    def test_log_level_from_environment(self, tmp_path, monkeypatch, capsys):
        cfg = write_config(tmp_path / "m.json", {"network": NETWORK, "c_m_f": 23e-15})
        monkeypatch.setenv("OMCAVITY_LOG", "info")
        assert run(["modes", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        assert "found 1 mode" in capsys.readouterr().err
        monkeypatch.setenv("OMCAVITY_LOG", "error")
        assert run(["modes", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        assert capsys.readouterr().err == ""

    def test_busy_output_directory(self, tmp_path):
        from filelock import FileLock

        cfg = write_config(tmp_path / "m.json", {"network": NETWORK, "c_m_f": 23e-15})
        out = tmp_path / "o"
        out.mkdir()
        with FileLock(str(out / LOCK_NAME)):
            assert run(["modes", "--config", str(cfg), "--out", str(out)]) == 1

    def test_console_entry_point(self, tmp_path):
        cfg = write_config(tmp_path / "m.json", {"network": NETWORK, "c_m_f": 23e-15})
        proc = subprocess.run([sys.executable, "-m", "omcavity", "modes", "--config", str(cfg),
                               "--out", str(tmp_path / "o")], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
