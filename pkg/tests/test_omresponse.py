from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from omcavity.errors import (
    InputError,
    MissingAttenuation,
    MissingMass,
    NegativeCooperativity,
    NonPositiveRate,
    SidebandWarning,
)
from omcavity.fitkit.extract import fit_omia
from omcavity.omresponse import (
    HBAR,
    CavityParams,
    DrumGeometry,
    MechMode,
    PumpConfig,
    cooperativity,
    effective_mech_linewidth,
    estimate_g0,
    omia_depth,
    photons_from_power,
    power_for_photons,
    s21_bare,
    s21_two_tone,
    zero_point_motion,
)
from omcavity.synth import sweep_grid

TWO_PI = 2 * math.pi

# 4 g0^2 n_d / (kappa gamma) for g0 = 8 Hz, n_d = 1.88e7, 481 kHz, 250 Hz
COOP_OPERATING = 40.0232848232848232848232848233
# (w_m^2 + (kappa/2)^2) / (kappa/2)^2 for 5.23 MHz and 481 kHz
ND_DETUNING_RATIO = 473.904249203625503001802378102
# 0.27 rho t pi (11 um)^2 with rho = 2700, t = 100 nm; x_zpf at 5.23 MHz;
# (w_c / 2) eta x_zpf / d for 6.31 GHz, eta = 0.436, d = 300 nm
MASS_AL_DRUM = 2.77116746380502071771551310196e-14
XZPF_AL_DRUM = 7.60940883470629207748891121577e-15
G0_ESTIMATE_HZ = 34.891168682817604186507321634


def al_drum() -> DrumGeometry:
    return DrumGeometry(diameter=22e-6, gap_d=300e-9, film_thickness=100e-9, density=2700.0)


class TestTypes:
    def test_cavity_total(self, cavity):
        assert cavity.kappa == pytest.approx(TWO_PI * 481e3, rel=1e-12)

    def test_cavity_rejects(self):
        with pytest.raises(NonPositiveRate):
            CavityParams(1.0, 0.0, 1.0, 1.0)
        with pytest.raises(InputError):
            CavityParams(1.0, 1.0, 1.0, 1.0, amp_scale=1.5)

    def test_from_total_needs_internal_loss(self):
        with pytest.raises(NonPositiveRate):
            CavityParams.from_total(1e10, 1e5, 1.0, 6e4, 5e4)

    def test_mech_ordering(self):
        with pytest.raises(InputError):
            MechMode(omega_m=10.0, gamma_m=20.0)

    def test_pump_exactly_one_source(self):
        with pytest.raises(InputError):
            PumpConfig(1e10)
        with pytest.raises(InputError):
            PumpConfig(1e10, n_d=1.0, power_w=1.0)

    def test_geometry_area_consistency(self):
        g = al_drum()
        assert g.plate_area == pytest.approx(math.pi * (11e-6) ** 2, rel=1e-15)
        with pytest.raises(InputError):
            DrumGeometry(22e-6, 300e-9, 100e-9, 2700.0, plate_area=1e-9)


class TestCooperativity:
    def test_zero_pump(self):
        assert cooperativity(TWO_PI * 8, 0.0, TWO_PI * 481e3, TWO_PI * 250) == 0.0

    def test_operating_point(self):
        c = cooperativity(TWO_PI * 8.0, 1.88e7, TWO_PI * 481e3, TWO_PI * 250)
        assert c == pytest.approx(COOP_OPERATING, rel=1e-12)
        assert c == pytest.approx(40, rel=0.01)

    def test_quadratic_in_g0(self):
        c1 = cooperativity(1.0, 100.0, 3.0, 2.0)
        assert cooperativity(2.0, 100.0, 3.0, 2.0) == pytest.approx(4 * c1, rel=1e-15)

    def test_rejects_non_positive_rates(self):
        with pytest.raises(NonPositiveRate):
            cooperativity(1.0, 1.0, 0.0, 1.0)
        with pytest.raises(NonPositiveRate):
            cooperativity(1.0, 1.0, 1.0, -1.0)


class TestTransmission:
    def test_bare_peak(self, cavity):
        assert s21_bare(cavity, [0.0])[0] == pytest.approx(cavity.amp_scale, rel=1e-15)
        unit = CavityParams(cavity.omega_c, cavity.kappa_int, cavity.kappa_in, cavity.kappa_out, 1.0)
        assert s21_bare(unit, [0.0])[0] == 1.0

    def test_bare_half_width(self, cavity):
        s = s21_bare(cavity, [-cavity.kappa / 2, cavity.kappa / 2])
        np.testing.assert_allclose(np.abs(s), cavity.amp_scale / math.sqrt(2), rtol=1e-14)

    def test_bare_power_fwhm_from_dense_scan(self, cavity):
        d = np.linspace(-2 * cavity.kappa, 2 * cavity.kappa, 400001)
        p = np.abs(s21_bare(cavity, d)) ** 2
        above = d[p >= p.max() / 2]
        assert above[-1] - above[0] == pytest.approx(TWO_PI * 481e3, rel=1e-4)

    @pytest.mark.parametrize("c", [0.0, 1.0, 10.0, 40.0, 100.0])
    def test_depth_at_resonance(self, cavity, drum, c):
        s = s21_two_tone(cavity, drum, c, [0.0])
        assert abs(s[0]) / cavity.amp_scale == pytest.approx(omia_depth(c), rel=1e-12)

    def test_zero_coop_matches_bare(self, cavity, drum):
        d = np.linspace(-3 * cavity.kappa, 3 * cavity.kappa, 1001)
        np.testing.assert_allclose(s21_two_tone(cavity, drum, 0.0, d), s21_bare(cavity, d),
                                   rtol=1e-15, atol=0)

    def test_far_detuned(self, cavity, drum):
        s = s21_two_tone(cavity, drum, 40.0, [1e6 * cavity.kappa])
        assert abs(s[0]) < 1e-6 * cavity.amp_scale

    @given(c=st.floats(0, 200), x=st.floats(0, 50))
    def test_even_and_bounded(self, c, x):
        cav = CavityParams(TWO_PI * 6.31e9, TWO_PI * 55e3, TWO_PI * 96e3, TWO_PI * 330e3, 0.7)
        mech = MechMode(TWO_PI * 5.23e6, TWO_PI * 250.0)
        d = np.array([x * cav.kappa, -x * cav.kappa, x * mech.gamma_m, -x * mech.gamma_m])
        s = np.abs(s21_two_tone(cav, mech, c, d))
        assert s[0] == pytest.approx(s[1], rel=1e-12)
        assert s[2] == pytest.approx(s[3], rel=1e-9)
        b = np.abs(s21_bare(cav, d))
        assert b[0] == pytest.approx(b[1], rel=1e-15)
        assert np.all(s <= cav.amp_scale * (1 + 1e-15))

    def test_negative_coop(self, cavity, drum):
        with pytest.raises(NegativeCooperativity):
            s21_two_tone(cavity, drum, -1.0, [0.0])

    def test_sideband_warning(self, cavity):
        slow = MechMode(cavity.kappa / 2, 10.0)
        with pytest.warns(SidebandWarning):
            s21_two_tone(cavity, slow, 1.0, [0.0])

    def test_no_warning_when_resolved(self, cavity, drum):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            s21_two_tone(cavity, drum, 1.0, [0.0])

    def test_second_mode_adds_own_window(self, cavity, drum):
        second = MechMode(TWO_PI * 7.35e6, TWO_PI * 300.0)
        pump = -drum.omega_m
        d2 = pump + second.omega_m
        s = s21_two_tone(cavity, [drum, second], [5.0, 2.0], [0.0, d2], pump_detuning=pump)
        bare = s21_bare(cavity, [0.0, d2])
        assert abs(s[0]) == pytest.approx(cavity.amp_scale / 6, rel=1e-3)
        # on the second window: a = bare denominator, plus C2 from its own term
        expected = cavity.amp_scale / (cavity.amp_scale / bare[1] + 2.0)
        assert abs(s[1]) == pytest.approx(abs(expected), rel=1e-3)


class TestDepthAndWidth:
    def test_depth_values(self):
        assert omia_depth(0.0) == 1.0
        assert omia_depth(1.0) == 0.5
        assert omia_depth(40.0) == pytest.approx(1 / 41, rel=1e-15)
        with pytest.raises(NegativeCooperativity):
            omia_depth(-0.1)

    def test_width_identity_and_affine(self):
        g = TWO_PI * 250.0
        assert effective_mech_linewidth(g, 0.0) == g
        widths = [effective_mech_linewidth(g, c) for c in (0.0, 1.0, 2.0, 3.0)]
        assert np.allclose(np.diff(widths), g, rtol=1e-14)

    def test_width_at_forty_from_fit(self, cavity, drum):
        """Fit the window of a noiseless trace and compare its broadened width."""
        from omcavity.synth import simulate_trace

        pump_hz = (cavity.omega_c - drum.omega_m) / TWO_PI
        dip_hz = cavity.omega_c / TWO_PI
        grid = sweep_grid([{"around": "dip", "half_span": 6, "unit": "width", "points": 801}],
                          cavity.omega_c / TWO_PI, cavity.kappa / TWO_PI, dip_hz, 250 * 41.0, 250.0)
        tr = simulate_trace(cavity, grid, [drum], [40.0], pump_hz)
        rep = fit_omia(tr, cavity)
        assert rep.extra["gamma_eff_hz"] == pytest.approx(10250.0, rel=1e-6)
        assert effective_mech_linewidth(drum.gamma_m, 40.0) / TWO_PI == pytest.approx(10250.0, rel=1e-12)


class TestPhotons:
    def test_zero_power(self, cavity):
        pump = PumpConfig(cavity.omega_c, power_w=0.0, attenuation_db=60)
        assert photons_from_power(cavity, pump) == 0.0

    def test_detuning_ratio(self, cavity, drum):
        on = photons_from_power(cavity, PumpConfig(cavity.omega_c, power_w=1e-6, attenuation_db=60))
        off_w = cavity.omega_c - TWO_PI * 5.23e6
        off = photons_from_power(cavity, PumpConfig(off_w, power_w=1e-6, attenuation_db=60))
        # the flux also scales with 1/omega_d
        assert on / off * cavity.omega_c / off_w == pytest.approx(ND_DETUNING_RATIO, rel=1e-9)

    def test_three_db_doubles(self, cavity):
        a = photons_from_power(cavity, PumpConfig(cavity.omega_c, power_w=1e-6, attenuation_db=63))
        b = photons_from_power(cavity, PumpConfig(cavity.omega_c, power_w=1e-6, attenuation_db=60))
        assert b / a == pytest.approx(10 ** 0.3, rel=1e-12)
        assert b / a == pytest.approx(2.0, rel=3e-3)

    def test_formula(self, cavity):
        p_src, att = 1e-3, 70.0
        w = cavity.omega_c - TWO_PI * 5.23e6
        p_in = p_src * 10 ** (-att / 10)
        expect = p_in * cavity.kappa_in / (HBAR * w) / ((w - cavity.omega_c) ** 2 + (cavity.kappa / 2) ** 2)
        assert photons_from_power(cavity, PumpConfig(w, power_w=p_src, attenuation_db=att)) == \
            pytest.approx(expect, rel=1e-14)

    def test_missing_attenuation(self, cavity):
        with pytest.raises(MissingAttenuation):
            photons_from_power(cavity, PumpConfig(cavity.omega_c, power_w=1e-6))

    @given(p=st.floats(1e-12, 1e-3), f=st.floats(1.5, 20))
    def test_coop_linear_in_power(self, p, f):
        cav = CavityParams(TWO_PI * 6.31e9, TWO_PI * 55e3, TWO_PI * 96e3, TWO_PI * 330e3, 0.5)
        w = cav.omega_c - TWO_PI * 5.23e6
        c1 = cooperativity(TWO_PI * 8, photons_from_power(cav, PumpConfig(w, power_w=p, attenuation_db=60)),
                           cav.kappa, TWO_PI * 250)
        c2 = cooperativity(TWO_PI * 8, photons_from_power(cav, PumpConfig(w, power_w=f * p, attenuation_db=60)),
                           cav.kappa, TWO_PI * 250)
        assert c2 == pytest.approx(f * c1, rel=1e-12)

    def test_power_inverse(self, cavity):
        w = cavity.omega_c - TWO_PI * 5.23e6
        p = power_for_photons(cavity, w, 1.88e7, 60.0)
        assert photons_from_power(cavity, PumpConfig(w, power_w=p, attenuation_db=60.0)) == \
            pytest.approx(1.88e7, rel=1e-12)


class TestEstimateG0:
    def setup_method(self):
        self.cav = CavityParams(TWO_PI * 6.31e9, TWO_PI * 55e3, TWO_PI * 96e3, TWO_PI * 330e3, 0.5)
        self.mech = MechMode(TWO_PI * 5.23e6, TWO_PI * 250.0)

    def test_mass_and_xzpf(self):
        m = al_drum().mass_eff(0.27)
        assert m == pytest.approx(MASS_AL_DRUM, rel=1e-12)
        assert zero_point_motion(m, self.mech.omega_m) == pytest.approx(XZPF_AL_DRUM, rel=1e-12)

    def test_value_and_order_of_magnitude(self):
        g0 = estimate_g0(self.cav, self.mech, al_drum(), 0.436) / TWO_PI
        assert g0 == pytest.approx(G0_ESTIMATE_HZ, rel=1e-12)
        # same decade as the simulated 8.9 Hz
        assert 8.9 / 10 < g0 < 8.9 * 10

    def test_gap_scaling(self):
        g = al_drum()
        g2 = DrumGeometry(g.diameter, 2 * g.gap_d, g.film_thickness, g.density)
        assert estimate_g0(self.cav, self.mech, g2, 0.4) == \
            pytest.approx(estimate_g0(self.cav, self.mech, g, 0.4) / 2, rel=1e-14)

    def test_decoupled(self):
        assert estimate_g0(self.cav, self.mech, al_drum(), 0.0) == 0.0

    def test_explicit_mass_wins(self):
        mech = MechMode(self.mech.omega_m, self.mech.gamma_m, mass_eff=MASS_AL_DRUM)
        a = estimate_g0(self.cav, mech, al_drum(), 0.436, mass_factor=None)
        assert a / TWO_PI == pytest.approx(G0_ESTIMATE_HZ, rel=1e-12)

    def test_missing_mass(self):
        with pytest.raises(MissingMass):
            estimate_g0(self.cav, self.mech, al_drum(), 0.436, mass_factor=None)
