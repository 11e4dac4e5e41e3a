"""Lossless one-port admittance and Foster-form mode extraction.

All frequencies are angular (rad/s). A resonant mode of the port is a zero
of the imaginary part of the total admittance crossed with positive slope.
For each mode the slope fixes an equivalent parallel LC:

    Z = 2 / (omega0 * dY/domega),   C = 1 / (Z * omega0),   L = Z / omega0

so that C = slope / 2 and omega0 = 1 / sqrt(L * C).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    EmptyNetwork,
    GridAtPole,
    GridTooCoarse,
    InputError,
    NoModeFound,
    NonPositiveCp,
)

POLE_REL_TOL = 1e-6
ROOT_REL_TOL = 1e-10
SLOPE_WINDOW = 5
# relative rms misfit of the local quadratic above which a bracket is
# considered to hide a pole
_FIT_MISFIT_MAX = 0.05


@dataclass(frozen=True)
class AdmittanceTrace:
    """Tabulated susceptance Im[Y(omega)] seen from a port.

    Parameters
    ----------
    freqs : array_like
        Angular frequency grid in rad/s, strictly increasing and positive.
    y_imag : array_like
        Imaginary part of the admittance at each grid point, in siemens.
    """

    freqs: np.ndarray
    y_imag: np.ndarray

    def __post_init__(self):
        freqs = np.array(self.freqs, dtype=float)
        y = np.array(self.y_imag, dtype=float)
        if freqs.ndim != 1 or y.ndim != 1:
            raise InputError("admittance trace arrays must be one dimensional")
        if freqs.shape != y.shape:
            raise InputError("freqs and y_imag must have equal length")
        if freqs.size < 3:
            raise InputError("admittance trace needs at least 3 points")
        if not (np.all(np.isfinite(freqs)) and np.all(np.isfinite(y))):
            raise InputError("admittance trace contains non-finite values")
        if np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
            raise InputError("freqs must be positive and strictly increasing")
        freqs.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "y_imag", y)

    def __len__(self) -> int:
        return self.freqs.size


@dataclass(frozen=True)
class FosterNetwork:
    """Canonical lossless admittance: shunt C, series L and LC branches.

    ``Im[Y] = w*C - 1/(w*L) + sum_k w*C_k / (1 - w**2 * L_k * C_k)``.
    ``series_l`` may be ``None`` when the port has no DC path.
    """

    shunt_c: float = 0.0
    series_l: float | None = None
    branches: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        branches = tuple((float(l), float(c)) for l, c in self.branches)
        object.__setattr__(self, "branches", branches)
        if not math.isfinite(self.shunt_c) or self.shunt_c < 0:
            raise InputError(f"shunt_c must be >= 0, got {self.shunt_c!r}")
        if self.series_l is not None and not (self.series_l > 0 and math.isfinite(self.series_l)):
            raise InputError(f"series_l must be > 0 when given, got {self.series_l!r}")
        for l, c in branches:
            if not (l > 0 and c > 0 and math.isfinite(l) and math.isfinite(c)):
                raise InputError(f"branch elements must be positive, got L={l!r}, C={c!r}")
        poles = np.sort(self.poles)
        if poles.size > 1 and np.any(np.diff(poles) <= 1e-12 * poles[1:]):
            raise InputError("branch resonant frequencies must be pairwise distinct")

    @property
    def poles(self) -> np.ndarray:
        """Branch resonant frequencies in rad/s (poles of Im[Y])."""
        return np.array([1.0 / math.sqrt(l * c) for l, c in self.branches])

    @property
    def is_empty(self) -> bool:
        return self.shunt_c == 0 and self.series_l is None and not self.branches

    def susceptance(self, omega) -> np.ndarray:
        """Evaluate Im[Y] without any pole checks."""
        w = np.asarray(omega, dtype=float)
        y = w * self.shunt_c
        if self.series_l is not None:
            y = y - 1.0 / (w * self.series_l)
        for l, c in self.branches:
            y = y + w * c / (1.0 - w * w * l * c)
        return y

    @classmethod
    def from_dict(cls, data: dict) -> "FosterNetwork":
        """Build from the ``{shunt_c_f, series_l_h, branches: [{l_h, c_f}]}`` layout."""
        if not isinstance(data, dict):
            raise InputError("network description must be a JSON object")
        try:
            shunt_c = float(data.get("shunt_c_f", 0.0) or 0.0)
        except (TypeError, ValueError):
            raise InputError("network key 'shunt_c_f' must be a number") from None
        series_l = data.get("series_l_h")
        if series_l is not None:
            try:
                series_l = float(series_l)
            except (TypeError, ValueError):
                raise InputError("network key 'series_l_h' must be a number or null") from None
        raw_branches = data.get("branches", []) or []
        if not isinstance(raw_branches, list):
            raise InputError("network key 'branches' must be a list")
        branches = []
        for k, br in enumerate(raw_branches):
            try:
                branches.append((float(br["l_h"]), float(br["c_f"])))
            except KeyError as exc:
                raise InputError(f"network key 'branches[{k}]' is missing {exc.args[0]!r}") from None
            except (TypeError, ValueError):
                raise InputError(f"network key 'branches[{k}]' must hold numeric l_h and c_f") from None
        return cls(shunt_c=shunt_c, series_l=series_l, branches=tuple(branches))

    def to_dict(self) -> dict:
        return {
            "shunt_c_f": self.shunt_c,
            "series_l_h": self.series_l,
            "branches": [{"l_h": l, "c_f": c} for l, c in self.branches],
        }


@dataclass(frozen=True)
class ModeParams:
    """One electromagnetic mode extracted from a positive-slope zero crossing.

    ``impedance_z`` follows the slope convention ``Z = 2 / (omega0 * slope)``,
    which for a plain LC equals ``sqrt(L / C_total)`` with ``C_total`` the full
    capacitance seen at the port (environment plus any added ``c_m``).  The
    alternative convention that references only the added capacitance,
    ``sqrt(l_p / c_m)``, is available through :meth:`impedance_over`.
    ``c_p`` and ``l_p`` are likewise the total equivalent elements of the mode.
    """

    omega0: float
    slope: float
    impedance_z: float
    c_p: float
    l_p: float

    @classmethod
    def from_slope(cls, omega0: float, slope: float) -> "ModeParams":
        z = 2.0 / (omega0 * slope)
        return cls(omega0=omega0, slope=slope, impedance_z=z, c_p=1.0 / (z * omega0), l_p=z / omega0)

    @property
    def freq_hz(self) -> float:
        return self.omega0 / (2 * math.pi)

    def environment_c(self, c_m: float = 0.0) -> float:
        """Capacitance left to the environment once ``c_m`` is removed."""
        return self.c_p - c_m

    def impedance_over(self, c: float) -> float:
        """``sqrt(l_p / c)``, the impedance referenced to a chosen capacitance."""
        return math.sqrt(self.l_p / c)


def synthesize_admittance(network: FosterNetwork, grid) -> AdmittanceTrace:
    """Sample the closed-form Foster admittance on ``grid`` (rad/s)."""
    if network.is_empty:
        raise EmptyNetwork("network has no elements")
    grid = np.asarray(grid, dtype=float)
    for pole in network.poles:
        near = np.abs(grid - pole) <= POLE_REL_TOL * pole
        if np.any(near):
            bad = grid[near][0]
            raise GridAtPole(
                f"grid point {bad / (2 * math.pi):.9g} Hz lies within {POLE_REL_TOL:g} "
                f"(relative) of a branch pole at {pole / (2 * math.pi):.9g} Hz"
            )
    return AdmittanceTrace(grid, network.susceptance(grid))


def total_admittance(trace: AdmittanceTrace, c_m: float) -> AdmittanceTrace:
    """Add the susceptance ``omega * c_m`` of a shunt capacitor."""
    if not c_m >= 0:
        raise InputError(f"c_m must be >= 0, got {c_m!r}")
    if c_m == 0:
        return AdmittanceTrace(trace.freqs, trace.y_imag.copy())
    return AdmittanceTrace(trace.freqs, trace.y_imag + trace.freqs * c_m)


def _segments(y: np.ndarray) -> np.ndarray:
    """Indices j where Im[Y] steps from >= 0 to < 0 (poles or falling zeros)."""
    return np.flatnonzero((y[:-1] >= 0) & (y[1:] < 0))


def _refine_root(x: np.ndarray, y: np.ndarray, i: int, lo: int, hi: int) -> float:
    """Root inside [x[i], x[i+1]] from a local cubic interpolant.

    Bisection down to ``ROOT_REL_TOL`` followed by a single inverse quadratic
    interpolation step.
    """
    idx = np.arange(max(i - 1, lo), min(i + 2, hi) + 1)
    h = x[i + 1] - x[i]
    t = (x[idx] - x[i]) / h
    coef = np.polyfit(t, y[idx], idx.size - 1)

    def f(s):
        return float(np.polyval(coef, s))

    a, b = 0.0, 1.0
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return float(x[i])
    if fb == 0.0:
        return float(x[i + 1])
    tol = ROOT_REL_TOL * x[i] / h
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return float(x[i] + m * h)
        if fm < 0:
            a, fa = m, fm
        else:
            b, fb = m, fm
    m = 0.5 * (a + b)
    fm = f(m)
    s = m
    if fa != fm and fb != fm and fa != fb:
        s_iqi = (
            a * fm * fb / ((fa - fm) * (fa - fb))
            + m * fa * fb / ((fm - fa) * (fm - fb))
            + b * fa * fm / ((fb - fa) * (fb - fm))
        )
        if a <= s_iqi <= b:
            s = s_iqi
    return float(x[i] + s * h)


def _local_slope(x: np.ndarray, y: np.ndarray, root: float, i: int, lo: int, hi: int,
                 window: int) -> float:
    # nearest `window` grid points to the root, restricted to the segment
    cand = np.arange(lo, hi + 1)
    if cand.size < window:
        raise GridTooCoarse(
            f"only {cand.size} grid points between poles around {root / (2 * math.pi):.6g} Hz; "
            f"slope estimate needs {window}"
        )
    order = np.argsort(np.abs(x[cand] - root), kind="stable")
    idx = np.sort(cand[order[:window]])
    h = x[i + 1] - x[i]
    u = (x[idx] - root) / h
    coef, res, *_ = np.polyfit(u, y[idx], 2, full=True)
    slope_u = coef[1]
    fitted = np.polyval(coef, u)
    misfit = np.sqrt(np.mean((fitted - y[idx]) ** 2))
    scale = abs(slope_u) * (u.max() - u.min())
    if slope_u <= 0 or not np.isfinite(slope_u) or misfit > _FIT_MISFIT_MAX * scale:
        raise GridTooCoarse(
            f"crossing near {root / (2 * math.pi):.6g} Hz is not resolved by the grid "
            "(bracket probably spans a pole)"
        )
    return float(slope_u / h)


def find_modes(trace: AdmittanceTrace, window: int = SLOPE_WINDOW) -> list[ModeParams]:
    """Locate positive-slope zero crossings of ``trace`` and extract LC equivalents.

    Crossings are bracketed on the grid, refined on a local cubic
    interpolant, and the slope is taken from a least-squares quadratic over
    the ``window`` grid points closest to the root.  Brackets are never
    extended across a falling sign change (a pole of the Foster form).

    Raises
    ------
    NoModeFound
        If no negative-to-positive sign change exists.
    GridTooCoarse
        If a crossing cannot be resolved without straddling a pole.
    """
    if window < 5:
        raise InputError("slope window must contain at least 5 points")
    x, y = trace.freqs, trace.y_imag
    rising = np.flatnonzero((y[:-1] < 0) & (y[1:] >= 0))
    if rising.size == 0:
        raise NoModeFound("no positive-slope zero crossing in admittance trace")
    falls = _segments(y)
    modes = []
    for i in rising:
        prev = falls[falls < i]
        nxt = falls[falls > i]
        lo = int(prev[-1]) + 1 if prev.size else 0
        hi = int(nxt[0]) if nxt.size else x.size - 1
        root = _refine_root(x, y, int(i), lo, hi)
        slope = _local_slope(x, y, root, int(i), lo, hi, window)
        modes.append(ModeParams.from_slope(root, slope))
    modes.sort(key=lambda m: m.omega0)
    return modes


def participation_ratio(c_m: float, c_p: float) -> float:
    """Fraction ``c_m / (c_m + c_p)`` of mode capacitance in the added capacitor."""
    if not c_p > 0:
        raise NonPositiveCp(f"c_p must be > 0, got {c_p!r}")
    if not c_m >= 0:
        raise InputError(f"c_m must be >= 0, got {c_m!r}")
    return c_m / (c_m + c_p)


def default_grid(network: FosterNetwork, c_m: float = 0.0, points: int = 20001) -> np.ndarray:
    """Log-spaced grid spanning every characteristic frequency of ``network``.

    Points closer than ten times the pole tolerance to a branch pole are
    dropped.
    """
    if network.is_empty:
        raise EmptyNetwork("network has no elements")
    chars = list(network.poles)
    c_low = network.shunt_c + c_m + sum(c for _, c in network.branches)
    if network.series_l is not None and c_low > 0:
        chars.append(1.0 / math.sqrt(network.series_l * c_low))
    if network.series_l is not None and network.shunt_c + c_m > 0:
        chars.append(1.0 / math.sqrt(network.series_l * (network.shunt_c + c_m)))
    if not chars:
        chars = [2 * math.pi * 1e9]
    grid = np.geomspace(0.1 * min(chars), 10.0 * max(chars), points)
    return _drop_near_poles(grid, network.poles)


def _drop_near_poles(grid: np.ndarray, poles: np.ndarray) -> np.ndarray:
    keep = np.ones(grid.size, dtype=bool)
    for p in poles:
        keep &= np.abs(grid - p) > 10 * POLE_REL_TOL * p
    return grid[keep]


def network_modes(network: FosterNetwork, c_m: float = 0.0, grid=None,
                  refine: bool = True) -> list[ModeParams]:
    """All modes of ``network`` loaded by a shunt ``c_m``.

    With ``refine`` each crossing found on the coarse grid is re-extracted
    from a dense local grid synthesized around it.
    """
    if grid is None:
        grid = default_grid(network, c_m)
    trace = total_admittance(synthesize_admittance(network, grid), c_m)
    modes = find_modes(trace)
    if not refine:
        return modes
    poles = network.poles
    refined = []
    for mode in modes:
        w0 = mode.omega0
        half = 1e-2
        if poles.size:
            half = min(half, 0.25 * float(np.min(np.abs(poles - w0) / w0)))
        local = _drop_near_poles(np.linspace(w0 * (1 - half), w0 * (1 + half), 401), poles)
        local_trace = total_admittance(synthesize_admittance(network, local), c_m)
        try:
            candidates = find_modes(local_trace)
        except (NoModeFound, GridTooCoarse):
            refined.append(mode)
            continue
        refined.append(min(candidates, key=lambda m: abs(m.omega0 - w0)))
    return refined


def coupled_mode_frequency(network: FosterNetwork, c_m: float) -> float:
    """Lowest mode frequency (rad/s) of ``network`` with a shunt ``c_m`` added."""
    return network_modes(network, c_m)[0].omega0


def modes_summary(modes: Sequence[ModeParams], c_m: float) -> list[dict]:
    """Rows of the mode table written by the command line front end."""
    rows = []
    for m in modes:
        c_env = m.environment_c(c_m)
        rows.append({
            "f0_ghz": m.freq_hz / 1e9,
            "z_ohm": m.impedance_z,
            "c_mode_ff": m.c_p * 1e15,
            "c_p_ff": c_env * 1e15,
            "l_p_nh": m.l_p * 1e9,
            "participation": participation_ratio(c_m, c_env) if c_env > 0 else None,
        })
    return rows
