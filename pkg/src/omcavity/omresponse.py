"""Forward model of the pumped optomechanical cavity.

Rates and frequencies are angular (rad/s). With a red-detuned pump at
``omega_d`` and a weak probe at ``omega_p`` the transmitted probe amplitude is

    S21 = A / [ (1 - 2i*Delta/kappa) + sum_k C_k / (1 - 2i*delta_k/gamma_k) ]

where ``Delta = omega_p - omega_c`` and ``delta_k = omega_p - omega_d - omega_mk``.
For a pump sitting exactly on the lower sideband of the first mode,
``delta_1 == Delta``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    InputError,
    MissingAttenuation,
    MissingMass,
    NegativeCooperativity,
    NonPositiveRate,
    SidebandWarning,
)

HBAR = 1.054571817e-34
EPS0 = 8.8541878128e-12
DEFAULT_MASS_FACTOR = 0.27
TWO_PI = 2 * math.pi


def _positive(name: str, value: float) -> float:
    if not (value > 0 and math.isfinite(value)):
        raise NonPositiveRate(f"{name} must be > 0, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class CavityParams:
    omega_c: float
    kappa_int: float
    kappa_in: float
    kappa_out: float
    amp_scale: float = 1.0

    def __post_init__(self):
        _positive("omega_c", self.omega_c)
        _positive("kappa_int", self.kappa_int)
        _positive("kappa_in", self.kappa_in)
        _positive("kappa_out", self.kappa_out)
        if not 0 < self.amp_scale <= 1:
            raise InputError(f"amp_scale must lie in (0, 1], got {self.amp_scale!r}")

    @property
    def kappa(self) -> float:
        return self.kappa_int + self.kappa_in + self.kappa_out

    @classmethod
    def from_total(cls, omega_c: float, kappa: float, amp_scale: float,
                   kappa_in: float, kappa_out: float) -> "CavityParams":
        """Split a fitted total linewidth using known port coupling rates."""
        kappa_int = kappa - kappa_in - kappa_out
        if kappa_int <= 0:
            raise NonPositiveRate(
                f"total kappa {kappa:.6g} does not exceed kappa_in + kappa_out "
                f"({kappa_in + kappa_out:.6g}); internal loss would be non-positive"
            )
        return cls(omega_c, kappa_int, kappa_in, kappa_out, amp_scale)


@dataclass(frozen=True)
class MechMode:
    omega_m: float
    gamma_m: float
    g0: float = 0.0
    mass_eff: float | None = None

    def __post_init__(self):
        _positive("gamma_m", self.gamma_m)
        if not self.omega_m > self.gamma_m:
            raise InputError("mechanical mode needs omega_m > gamma_m > 0")
        if self.g0 < 0:
            raise InputError("g0 must be >= 0")


@dataclass(frozen=True)
class PumpConfig:
    """Pump tone. Either ``n_d`` or ``power_w`` is the source of truth.

    ``power_w`` is the power at the top of the input chain; the power that
    reaches the cavity is ``power_w * 10**(-attenuation_db / 10)``.
    """

    omega_d: float
    n_d: float | None = None
    power_w: float | None = None
    attenuation_db: float | None = None

    def __post_init__(self):
        if (self.n_d is None) == (self.power_w is None):
            raise InputError("specify exactly one of n_d or power_w for the pump")
        if self.n_d is not None and self.n_d < 0:
            raise InputError("n_d must be >= 0")
        if self.power_w is not None and self.power_w < 0:
            raise InputError("power_w must be >= 0")

    @classmethod
    def from_dbm(cls, omega_d: float, power_dbm: float, attenuation_db: float | None) -> "PumpConfig":
        return cls(omega_d=omega_d, power_w=1e-3 * 10 ** (power_dbm / 10), attenuation_db=attenuation_db)


@dataclass(frozen=True)
class DrumGeometry:
    """Parallel-plate drumhead. ``plate_area`` defaults to the disc area."""

    diameter: float
    gap_d: float
    film_thickness: float
    density: float
    plate_area: float | None = None

    def __post_init__(self):
        for name in ("diameter", "gap_d", "film_thickness", "density"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be > 0")
        disc = math.pi * (self.diameter / 2) ** 2
        if self.plate_area is None:
            object.__setattr__(self, "plate_area", disc)
        elif abs(self.plate_area - disc) > 1e-12 * disc:
            raise InputError("plate_area inconsistent with diameter")

    def mass_eff(self, factor: float = DEFAULT_MASS_FACTOR) -> float:
        return factor * self.density * self.film_thickness * self.plate_area


def cooperativity(g0: float, n_d: float, kappa: float, gamma_m: float) -> float:
    """``4 g0^2 n_d / (kappa gamma_m)``."""
    _positive("g0", g0)
    _positive("kappa", kappa)
    _positive("gamma_m", gamma_m)
    if n_d < 0:
        raise InputError("n_d must be >= 0")
    return 4.0 * g0 * g0 * n_d / (kappa * gamma_m)


def s21_bare(cav: CavityParams, probe_offsets) -> np.ndarray:
    """Lorentzian transmission of the empty cavity at ``Delta = omega_p - omega_c``."""
    delta = np.asarray(probe_offsets, dtype=float)
    return cav.amp_scale / (1.0 - 2j * delta / cav.kappa)


def s21_two_tone(cav: CavityParams, mech: MechMode | Sequence[MechMode], coop,
                 probe_offsets, pump_detuning: float | None = None) -> np.ndarray:
    """Probe transmission with a red-detuned pump (OMIA configuration).

    Parameters
    ----------
    cav : CavityParams
    mech : MechMode or sequence of MechMode
        One entry per mechanical mode contributing a window.
    coop : float or sequence of float
        Cooperativity of each mode, same length as ``mech``.
    probe_offsets : array_like
        ``Delta = omega_p - omega_c`` in rad/s.
    pump_detuning : float, optional
        ``omega_d - omega_c``. Defaults to ``-omega_m`` of the first mode.

    Returns
    -------
    ndarray of complex
    """
    modes = [mech] if isinstance(mech, MechMode) else list(mech)
    coops = np.atleast_1d(np.asarray(coop, dtype=float))
    if coops.size != len(modes):
        raise InputError("need one cooperativity per mechanical mode")
    if np.any(coops < 0):
        raise NegativeCooperativity(f"cooperativity must be >= 0, got {coops.tolist()}")
    if pump_detuning is None:
        pump_detuning = -modes[0].omega_m
    kappa = cav.kappa
    if any(m.omega_m <= kappa for m in modes):
        warnings.warn("omega_m <= kappa: outside the sideband-resolved regime", SidebandWarning,
                      stacklevel=2)
    delta = np.asarray(probe_offsets, dtype=float)
    denom = 1.0 - 2j * delta / kappa
    for m, c in zip(modes, coops):
        d_mech = delta - pump_detuning - m.omega_m
        denom = denom + c / (1.0 - 2j * d_mech / m.gamma_m)
    return cav.amp_scale / denom


def omia_depth(coop: float) -> float:
    """Transmission at the window centre relative to the bare peak, ``1/(1+C)``."""
    if coop < 0:
        raise NegativeCooperativity(f"cooperativity must be >= 0, got {coop!r}")
    return 1.0 / (1.0 + coop)


def effective_mech_linewidth(gamma_m: float, coop: float) -> float:
    """Back-action broadened linewidth ``gamma_m (1 + C)`` for a red-detuned pump."""
    _positive("gamma_m", gamma_m)
    if coop < 0:
        raise NegativeCooperativity(f"cooperativity must be >= 0, got {coop!r}")
    return gamma_m * (1.0 + coop)


def photons_from_power(cav: CavityParams, pump: PumpConfig) -> float:
    """Intracavity pump photons from input power.

    ``n_d = (P_in kappa_in / (hbar omega_d)) / (Delta_d^2 + (kappa/2)^2)``
    with ``Delta_d = omega_d - omega_c``.
    """
    if pump.n_d is not None:
        return float(pump.n_d)
    if pump.attenuation_db is None:
        raise MissingAttenuation("pump given by power needs attenuation_db of the input chain")
    p_in = pump.power_w * 10 ** (-pump.attenuation_db / 10)
    det = pump.omega_d - cav.omega_c
    flux = p_in * cav.kappa_in / (HBAR * pump.omega_d)
    return flux / (det * det + (cav.kappa / 2) ** 2)


def power_for_photons(cav: CavityParams, omega_d: float, n_d: float, attenuation_db: float) -> float:
    """Source power (W) needed for ``n_d`` intracavity photons; inverse of the above."""
    det = omega_d - cav.omega_c
    p_in = n_d * (det * det + (cav.kappa / 2) ** 2) * HBAR * omega_d / cav.kappa_in
    return p_in * 10 ** (attenuation_db / 10)


def zero_point_motion(mass_eff: float, omega_m: float) -> float:
    return math.sqrt(HBAR / (2.0 * mass_eff * omega_m))


def estimate_g0(cav: CavityParams, mech: MechMode, geom: DrumGeometry, eta: float,
                mass_factor: float | None = DEFAULT_MASS_FACTOR) -> float:
    """Single-photon coupling from a parallel-plate pull, ``(omega_c/2) eta x_zpf / d``.

    The effective mass is taken from ``mech.mass_eff`` when set, otherwise
    from the drum geometry with ``mass_factor``; pass ``mass_factor=None`` to
    require an explicit mass.
    """
    if mech.mass_eff is not None:
        mass = mech.mass_eff
    elif mass_factor is not None:
        mass = geom.mass_eff(mass_factor)
    else:
        raise MissingMass("no effective mass on the mechanical mode and no mass factor given")
    if not 0 <= eta <= 1:
        raise InputError("participation ratio must lie in [0, 1]")
    x_zpf = zero_point_motion(mass, mech.omega_m)
    return 0.5 * cav.omega_c * eta * x_zpf / geom.gap_d
