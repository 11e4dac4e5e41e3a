"""DC-bias tuning of a capacitively coupled drum.

A bias ``V`` across a compliant capacitor ``C(x)`` drives the drum with
force ``C' V_dc V_ac`` and softens its spring to ``k - V**2 C'' / 2``,
pulling the resonance down parabolically for small ``V``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InputError, PositiveCurvatureWarning, PullInExceeded, TooFewPoints
from .omresponse import EPS0, DrumGeometry

_K_REL_TOL = 1e-9


@dataclass(frozen=True)
class TuneModel:
    """Lumped rigid-plate drum under DC bias.

    ``omega_m0`` in rad/s, ``spring_k`` in N/m, ``d2c_dx2`` in F/m**2 and
    ``mass_eff`` in kg.  ``spring_k`` must equal ``mass_eff * omega_m0**2``.
    """

    omega_m0: float
    spring_k: float
    d2c_dx2: float
    mass_eff: float

    def __post_init__(self):
        for name in ("omega_m0", "spring_k", "mass_eff"):
            if not getattr(self, name) > 0:
                raise InputError(f"TuneModel.{name} must be > 0")
        if not math.isfinite(self.d2c_dx2):
            raise InputError("TuneModel.d2c_dx2 must be finite")
        expected = self.mass_eff * self.omega_m0**2
        if abs(self.spring_k - expected) > _K_REL_TOL * expected:
            raise InputError(
                f"spring_k = {self.spring_k:.6g} N/m inconsistent with "
                f"mass_eff * omega_m0**2 = {expected:.6g} N/m")

    @classmethod
    def from_mass(cls, omega_m0: float, mass_eff: float, d2c_dx2: float) -> "TuneModel":
        return cls(omega_m0, mass_eff * omega_m0**2, d2c_dx2, mass_eff)

    @property
    def pull_in_voltage(self) -> float:
        """Bias at which the linearized spring constant reaches zero."""
        if self.d2c_dx2 <= 0:
            return math.inf
        return math.sqrt(2 * self.spring_k / self.d2c_dx2)


@dataclass(frozen=True)
class VSweep:
    """Resonance frequency (rad/s) measured against bias voltage (V)."""

    volts: np.ndarray
    freqs: np.ndarray

    def __post_init__(self):
        v = np.array(self.volts, dtype=float)
        f = np.array(self.freqs, dtype=float)
        if v.ndim != 1 or v.shape != f.shape:
            raise InputError("VSweep volts and freqs must be 1-D and of equal length")
        if v.size < 3:
            raise TooFewPoints(f"VSweep needs at least 3 points, got {v.size}")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(f))):
            raise InputError("VSweep contains non-finite values")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "volts", v)
        object.__setattr__(self, "freqs", f)


@dataclass(frozen=True)
class ParabolaFit:
    """``omega(V) = omega_m0 + curvature * V**2`` with 1-sigma errors."""

    omega_m0: float
    curvature: float
    omega_m0_sigma: float
    curvature_sigma: float
    d2c_dx2: float | None = None
    d2c_dx2_sigma: float | None = None
    positive_curvature: bool = False

    def to_dict(self) -> dict:
        out = {
            "f0_hz": self.omega_m0 / (2 * math.pi),
            "f0_hz_sigma": self.omega_m0_sigma / (2 * math.pi),
            "curvature_hz_per_v2": self.curvature / (2 * math.pi),
            "curvature_hz_per_v2_sigma": self.curvature_sigma / (2 * math.pi),
            "c_dprime_f_per_m2": self.d2c_dx2,
            "c_dprime_f_per_m2_sigma": self.d2c_dx2_sigma,
        }
        if self.positive_curvature:
            out["flags"] = ["positive_curvature"]
        return out


def drive_force(c_m_prime: float, v_dc: float, v_ac: float) -> float:
    """Amplitude of the resonant electrostatic force, ``C' V_dc V_ac`` (N)."""
    return c_m_prime * v_dc * v_ac


def softened_frequency(model: TuneModel, v_dc):
    """Resonance under bias, ``omega_m0 * sqrt(1 - V**2 C'' / (2 k))``.

    Accepts a scalar or an array of voltages.

    Raises
    ------
    PullInExceeded
        If any voltage puts the linearized spring at or below zero.
    """
    v = np.asarray(v_dc, dtype=float)
    radicand = 1.0 - v * v * model.d2c_dx2 / (2 * model.spring_k)
    if np.any(radicand <= 0):
        vmax = float(np.max(np.abs(v)))
        raise PullInExceeded(
            f"|V| = {vmax:.6g} V reaches pull-in of the linearized model "
            f"({model.pull_in_voltage:.6g} V)")
    out = model.omega_m0 * np.sqrt(radicand)
    return float(out) if out.ndim == 0 else out


def fit_parabola(sweep: VSweep, spring_k: float | None = None) -> ParabolaFit:
    """Linear least-squares fit of ``omega = omega_m0 + c2 * V**2``.

    With ``spring_k`` given, also infers ``C'' = -4 k c2 / omega_m0``.
    A positive ``c2`` is flagged and warned about rather than rejected.

    Raises
    ------
    TooFewPoints
        Fewer than 3 distinct voltages.
    """
    v = sweep.volts
    if np.unique(v).size < 3:
        raise TooFewPoints("parabola fit needs at least 3 distinct voltages")
    # centre the frequencies and normalise V**2 so the solve keeps full precision
    ref = float(np.mean(sweep.freqs))
    y = sweep.freqs - ref
    v2 = v * v
    v2_scale = float(np.max(v2))
    design = np.column_stack([np.ones_like(v), v2 / v2_scale])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    w0, c2 = ref + float(coef[0]), float(coef[1]) / v2_scale
    dof = v.size - 2
    var = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = np.linalg.inv(design.T @ design) * var
    s_w0 = float(math.sqrt(max(cov[0, 0], 0.0)))
    s_c2 = float(math.sqrt(max(cov[1, 1], 0.0))) / v2_scale
    positive = c2 > 0
    if positive:
        warnings.warn(f"positive tuning curvature {c2:.6g} rad/s/V^2; "
                      "stiffening is outside the softening model", PositiveCurvatureWarning,
                      stacklevel=2)
    d2c = d2c_sigma = None
    if spring_k is not None:
        if not spring_k > 0:
            raise InputError("spring_k must be > 0")
        d2c = -4 * spring_k * c2 / w0
        # first-order propagation; the c2 term dominates
        d2c_sigma = 4 * spring_k * math.hypot(s_c2 / w0, c2 * s_w0 / w0**2)
    return ParabolaFit(w0, c2, s_w0, s_c2, d2c, d2c_sigma, positive)


def parallel_plate_derivatives(geom: DrumGeometry) -> dict[str, float]:
    """Parallel-plate ``C``, ``dC/dx`` and ``d2C/dx2`` at the rest gap.

    Magnitudes for a gap closing with displacement: ``C = eps0 A / d``,
    ``C' = eps0 A / d**2``, ``C'' = 2 eps0 A / d**3``.
    """
    a, d = geom.plate_area, geom.gap_d
    if not d > 0:
        raise InputError("gap_d must be > 0")
    return {"c_m": EPS0 * a / d, "c_prime": EPS0 * a / d**2, "c_dprime": 2 * EPS0 * a / d**3}
