"""Three-stage parameter extraction.

1. :func:`fit_bare_cavity` gives the cavity resonance, linewidth and scale.
2. :func:`fit_omia` fits the mechanical window of each pumped sweep with the
   cavity held fixed.
3. :func:`fit_coop_linear` turns cooperativity against photon number into g0.

:func:`batch_extract` chains the three over a power series.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import (
    DegenerateFit,
    InputError,
    MissingMetadata,
    NegativeSlope,
    NoDipFound,
    NoResonanceFound,
    OmCavityError,
    SublinearWarning,
    TooFewPoints,
)
from ..omresponse import CavityParams, PumpConfig, photons_from_power
from . import models
from .lsq import MAX_ITER
from .lsq import FitReport, least_squares

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
CLIP_SIGMA = 4.0
MIN_DIP_SIGNIFICANCE = 5.0
DEGENERATE_COOP = 0.01


@dataclass
class Trace:
    """Probe sweep.

    ``freqs`` in Hz. ``s21`` is complex unless ``magnitude_only``, in which
    case it holds linear magnitudes and no phase. ``meta`` carries header
    values such as ``pump_dbm``, ``atten_db``, ``pump_hz`` and ``vdc_v``.
    """

    freqs: np.ndarray
    s21: np.ndarray
    magnitude_only: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        if self.magnitude_only:
            s = np.asarray(self.s21)
            if np.iscomplexobj(s):
                raise InputError("magnitude-only trace must not carry phase")
            self.s21 = s.astype(float)
        else:
            self.s21 = np.asarray(self.s21, dtype=complex)
        if self.freqs.ndim != 1 or self.freqs.shape != self.s21.shape:
            raise InputError("trace frequency and S21 arrays must be 1-D and of equal length")
        if self.freqs.size < 3:
            raise InputError("trace needs at least 3 points")
        if np.any(np.diff(self.freqs) <= 0):
            raise InputError("trace frequencies must be strictly increasing")

    @property
    def omega(self) -> np.ndarray:
        return TWO_PI * self.freqs

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.s21)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.freqs)) and np.all(np.isfinite(self.s21)))

    def select(self, mask: np.ndarray) -> "Trace":
        return Trace(self.freqs[mask], self.s21[mask], self.magnitude_only, dict(self.meta))

    def meta_float(self, key: str) -> float:
        if key not in self.meta:
            raise MissingMetadata(f"trace metadata lacks '{key}'")
        try:
            return float(self.meta[key])
        except (TypeError, ValueError):
            raise MissingMetadata(f"trace metadata '{key}' is not numeric: {self.meta[key]!r}") from None


@dataclass(frozen=True)
class CoopPoint:
    n_d: float
    coop: float
    coop_sigma: float

    def __post_init__(self):
        if not self.n_d > 0:
            raise InputError("CoopPoint needs n_d > 0")
        if self.coop < 0 or self.coop_sigma < 0:
            raise InputError("CoopPoint needs coop >= 0 and coop_sigma >= 0")


def _check_finite(trace: Trace):
    if not trace.is_finite():
        raise InputError("trace contains non-finite values")


def _running_median(y: np.ndarray, width: int) -> np.ndarray:
    width = max(1, width | 1)
    if width == 1 or y.size < width:
        return y.copy()
    half = width // 2
    padded = np.pad(y, half, mode="edge")
    return np.median(np.lib.stride_tricks.sliding_window_view(padded, width), axis=1)


def _robust_sigma(r: np.ndarray) -> float:
    return 1.4826 * float(np.median(np.abs(r - np.median(r))))


def _noise_from_diffs(z: np.ndarray) -> float:
    """Per-quadrature noise estimate from point-to-point differences."""
    d = np.diff(z)
    parts = [d.real, d.imag] if np.iscomplexobj(d) else [d]
    return _robust_sigma(np.concatenate(parts)) / math.sqrt(2)


def _bare_guess(trace: Trace) -> tuple[float, float, float]:
    f = trace.freqs
    power = trace.magnitude**2
    fu = np.linspace(f[0], f[-1], 4096)
    pu = _running_median(np.interp(fu, f, power), 41)
    med = float(np.median(pu))
    k = int(np.argmax(pu))
    peak = float(pu[k])
    if not peak >= 2.0 * med or peak <= 0:
        raise NoResonanceFound("no peak 3 dB above the median level of the trace")
    below = pu < peak / 2
    left = np.flatnonzero(below[:k])
    right = np.flatnonzero(below[k:])
    if left.size and right.size:
        width = fu[k + right[0]] - fu[left[-1]]
    elif left.size:
        width = 2 * (fu[k] - fu[left[-1]])
    elif right.size:
        width = 2 * (fu[k + right[0]] - fu[k])
    else:
        raise NoResonanceFound("trace does not reach the half-power level on either side of the peak")
    return TWO_PI * fu[k], TWO_PI * width, math.sqrt(peak)


def _residual_builder(omega, data, magnitude_only, model, jac_model):
    """Residual and Jacobian callables for complex or magnitude-only fitting."""
    if magnitude_only:
        target = np.abs(data)

        def fun(p):
            return np.abs(model(omega, *p)) - target

        def jac(p):
            return models.magnitude_jac(model(omega, *p), jac_model(omega, *p))
    else:
        def fun(p):
            return models.stack_complex(model(omega, *p) - data)

        def jac(p):
            return models.stack_complex(jac_model(omega, *p))
    return fun, jac


def _outlier_mask(resid_pts: np.ndarray, freqs: np.ndarray, clip: float) -> np.ndarray:
    """Points to drop: each run of outliers widened to four times its half-span."""
    sigma = _robust_sigma(resid_pts.ravel())
    drop = np.zeros(freqs.size, dtype=bool)
    if sigma == 0:
        return drop
    score = np.max(np.abs(resid_pts), axis=0)
    bad = score > clip * sigma
    if not bad.any():
        return drop
    idx = np.flatnonzero(bad)
    # runs of outliers allowing gaps of up to 3 clean points
    splits = np.flatnonzero(np.diff(idx) > 4) + 1
    spacing = np.min(np.diff(freqs))
    for run in np.split(idx, splits):
        centre = freqs[run[np.argmax(score[run])]]
        half = np.max(np.abs(freqs[run] - centre)) + spacing
        drop |= np.abs(freqs - centre) <= 4.0 * half
    return drop


def fit_bare_cavity(trace: Trace, *, complex_fit: bool | None = None,
                    clip_sigma: float | None = CLIP_SIGMA, max_clip_passes: int = 3,
                    max_iter: int = MAX_ITER) -> FitReport:
    """Fit a Lorentzian cavity response: ``omega_c``, ``kappa``, ``amp_scale``.

    Initial values come from the peak of a median-smoothed, uniformly
    resampled power trace and its half-power width.  Narrow features that
    stand out by more than ``clip_sigma`` robust standard deviations (an
    OMIA window, a glitch) are masked together with their surroundings and
    the fit is repeated.
    """
    _check_finite(trace)
    complex_fit = (not trace.magnitude_only) if complex_fit is None else complex_fit
    if complex_fit and trace.magnitude_only:
        raise InputError("complex fit requested on a magnitude-only trace")
    wc0, k0, a0 = _bare_guess(trace)
    keep = np.ones(trace.freqs.size, dtype=bool)
    x0 = [wc0, k0, a0]
    report = None
    passes = 0
    while True:
        omega = trace.omega[keep]
        data = trace.s21[keep]
        fun, jac = _residual_builder(omega, data, not complex_fit, models.bare, models.bare_jac)
        report = least_squares(
            fun, x0, bounds=([-np.inf, 1e-12 * k0, 0.0], [np.inf, np.inf, np.inf]), jac=jac,
            names=["omega_c", "kappa", "amp_scale"],
            units={"omega_c": "rad/s", "kappa": "rad/s", "amp_scale": "1"},
            x_scale=[k0, k0, a0], max_iter=max_iter,
        )
        if clip_sigma is None or passes >= max_clip_passes:
            break
        p = [report.params[n] for n in ("omega_c", "kappa", "amp_scale")]
        r = fun(p)
        pts = r.reshape(2, -1) if complex_fit else r[None, :]
        drop = _outlier_mask(pts, trace.freqs[keep], clip_sigma)
        if not drop.any():
            break
        idx = np.flatnonzero(keep)
        keep[idx[drop]] = False
        if keep.sum() < 10:
            raise NoResonanceFound("too few points left after masking narrow features")
        x0 = p
        passes += 1
    report.extra.update({"n_points": int(keep.sum()), "n_masked": int((~keep).sum()),
                         "fit_domain": "complex" if complex_fit else "magnitude"})
    return report


def _dip_guess(trace: Trace, cav: CavityParams, omega_d: float):
    omega = trace.omega
    s_b = models.bare(omega, cav.omega_c, cav.kappa, cav.amp_scale)
    if trace.magnitude_only:
        feature = 1.0 - trace.s21 / np.abs(s_b)
        deviation = np.abs(s_b) - trace.s21
    else:
        feature = 1.0 - trace.s21 / s_b
        deviation = s_b - trace.s21
    sigma = _noise_from_diffs(trace.s21)
    if sigma == 0:
        sigma = 1e-12 * cav.amp_scale
    signif = _running_median(np.abs(deviation) / sigma, 3)
    i = int(np.argmax(signif))
    if signif[i] < MIN_DIP_SIGNIFICANCE:
        raise NoDipFound(
            f"largest deviation from the bare cavity is {signif[i]:.2f} sigma "
            f"(< {MIN_DIP_SIGNIFICANCE:g})"
        )
    depth2 = _running_median(np.abs(feature) ** 2, 3)
    peak = float(depth2[i])
    p = min(max(math.sqrt(peak), 0.01), 0.995)
    coop0 = p / (1 - p)
    lo = i
    while lo > 0 and depth2[lo - 1] > peak / 2:
        lo -= 1
    hi = i
    while hi < omega.size - 1 and depth2[hi + 1] > peak / 2:
        hi += 1
    width = omega[min(hi + 1, omega.size - 1)] - omega[max(lo - 1, 0)]
    if hi == lo:
        width = 0.5 * width
    return omega[i] - omega_d, width / (1 + coop0), coop0


def fit_omia(trace: Trace, fixed: CavityParams, *, pump_omega: float | None = None,
             window_hz: tuple[float, float] | None = None,
             complex_fit: bool | None = None, max_iter: int = MAX_ITER) -> FitReport:
    """Fit ``omega_m``, ``gamma_m`` and ``coop`` of an OMIA window.

    The pump frequency comes from ``pump_omega`` or the ``pump_hz`` header.
    ``window_hz`` restricts the fit to a frequency range.  The initial
    mechanical frequency is the point of largest deviation from the fixed
    bare-cavity response.  The broadened width ``gamma_m (1 + C)`` is
    reported in ``extra`` alongside its uncertainty.

    Raises
    ------
    NoDipFound
        No point deviates significantly from the bare response.
    DegenerateFit
        Fitted cooperativity below 0.01, where linewidth and cooperativity
        cannot be separated.  The report is attached to the exception.
    """
    _check_finite(trace)
    if pump_omega is None:
        pump_omega = TWO_PI * trace.meta_float("pump_hz")
    if window_hz is not None:
        trace = trace.select((trace.freqs >= window_hz[0]) & (trace.freqs <= window_hz[1]))
    complex_fit = (not trace.magnitude_only) if complex_fit is None else complex_fit
    if complex_fit and trace.magnitude_only:
        raise InputError("complex fit requested on a magnitude-only trace")
    wm0, g0_, c0 = _dip_guess(trace, fixed, pump_omega)
    kw = dict(omega_c=fixed.omega_c, kappa=fixed.kappa, amp=fixed.amp_scale, omega_d=pump_omega)

    def model(w, wm, gm, c):
        return models.omia(w, wm, gm, c, **kw)

    def jac_model(w, wm, gm, c):
        return models.omia_jac(w, wm, gm, c, **kw)

    fun, jac = _residual_builder(trace.omega, trace.s21, not complex_fit, model, jac_model)
    report = least_squares(
        fun, [wm0, g0_, c0], bounds=([-np.inf, 1e-9 * g0_, 0.0], [np.inf, np.inf, np.inf]), jac=jac,
        names=["omega_m", "gamma_m", "coop"],
        units={"omega_m": "rad/s", "gamma_m": "rad/s", "coop": "1"},
        x_scale=[g0_ * (1 + c0), g0_, max(c0, 0.1)], max_iter=max_iter,
    )
    gm, c = report.params["gamma_m"], report.params["coop"]
    cov = report.covariance
    # d(gamma (1+C)) = (1+C) d gamma + gamma dC
    grad = np.array([0.0, 1.0 + c, gm])
    width_sigma = math.sqrt(max(float(grad @ cov @ grad), 0.0)) if np.all(np.isfinite(cov)) else math.inf
    report.extra.update({
        "gamma_eff_hz": gm * (1 + c) / TWO_PI,
        "gamma_eff_hz_sigma": width_sigma / TWO_PI,
        "pump_hz": pump_omega / TWO_PI,
        "fit_domain": "complex" if complex_fit else "magnitude",
    })
    if c < DEGENERATE_COOP:
        report.flags.append("degenerate")
        raise DegenerateFit(f"fitted cooperativity {c:.3g} < {DEGENERATE_COOP}: gamma_m and C "
                            "are not separately identifiable", report)
    return report


def refine_cavity(trace: Trace, cav: CavityParams, window_fit: FitReport, *,
                  pump_omega: float | None = None, complex_fit: bool | None = None) -> FitReport:
    """Refit ``omega_c``, ``kappa``, ``amp_scale`` with a fitted OMIA window held fixed.

    Uses every point of a pumped trace, so the estimate is not limited by the
    points masked in :func:`fit_bare_cavity`.
    """
    _check_finite(trace)
    if pump_omega is None:
        pump_omega = TWO_PI * trace.meta_float("pump_hz")
    complex_fit = (not trace.magnitude_only) if complex_fit is None else complex_fit
    omega = trace.omega
    wm, gm, c = (window_fit.params[k] for k in ("omega_m", "gamma_m", "coop"))
    window = c / (1.0 - 2j * (omega - pump_omega - wm) / gm)

    def model(w, wc, k, a):
        return models.loaded(w, wc, k, a, window=window)

    def jac_model(w, wc, k, a):
        return models.loaded_jac(w, wc, k, a, window=window)

    fun, jac = _residual_builder(omega, trace.s21, not complex_fit, model, jac_model)
    report = least_squares(
        fun, [cav.omega_c, cav.kappa, cav.amp_scale],
        bounds=([-np.inf, 1e-12 * cav.kappa, 0.0], [np.inf, np.inf, np.inf]), jac=jac,
        names=["omega_c", "kappa", "amp_scale"],
        units={"omega_c": "rad/s", "kappa": "rad/s", "amp_scale": "1"},
        x_scale=[cav.kappa, cav.kappa, cav.amp_scale],
    )
    report.extra.update({"n_points": int(omega.size), "n_masked": 0,
                         "fit_domain": "complex" if complex_fit else "magnitude",
                         "window_held_fixed": True})
    return report


def fit_coop_linear(points: Sequence[CoopPoint], kappa: float, gamma_m: float, *,
                    kappa_sigma: float = 0.0, gamma_sigma: float = 0.0) -> FitReport:
    """Weighted fit ``C = s * n_d`` through the origin; ``g0 = sqrt(s kappa gamma_m) / 2``.

    Weights are ``1/coop_sigma**2``; when every sigma is zero the points are
    weighted equally and the slope uncertainty comes from the scatter.  The
    slope uncertainty is inflated by sqrt(reduced chi^2) when that exceeds 1.
    ``kappa_sigma`` and ``gamma_sigma`` are added in quadrature to the g0
    uncertainty.
    """
    if len(points) < 3:
        raise TooFewPoints(f"linear cooperativity fit needs >= 3 points, got {len(points)}")
    n = np.array([p.n_d for p in points])
    c = np.array([p.coop for p in points])
    sig = np.array([p.coop_sigma for p in points])
    if np.all(sig > 0):
        w = 1.0 / sig**2
        weighted = True
    elif np.all(sig == 0):
        w = np.ones_like(n)
        weighted = False
    else:
        raise InputError("coop_sigma must be either all positive or all zero")
    snn = float(np.sum(w * n * n))
    slope = float(np.sum(w * n * c)) / snn
    resid = c - slope * n
    dof = n.size - 1
    chi2_red = float(np.sum(w * resid**2)) / dof
    slope_sigma = math.sqrt((max(chi2_red, 1.0) if weighted else chi2_red) / snn)
    if slope < 0:
        raise NegativeSlope(f"cooperativity decreases with photon number (slope {slope:.3g})")
    flags = []
    if slope == 0:
        g0 = 0.0
        g0_sigma = math.inf
        flags.append("zero_slope")
    else:
        g0 = 0.5 * math.sqrt(slope * kappa * gamma_m)
        rel = math.sqrt((slope_sigma / slope) ** 2 + (kappa_sigma / kappa) ** 2
                        + (gamma_sigma / gamma_m) ** 2)
        g0_sigma = 0.5 * g0 * rel
    return FitReport(
        params={"g0": g0},
        sigmas={"g0": g0_sigma},
        residual_norm=math.sqrt(chi2_red),
        converged=True,
        iterations=1,
        units={"g0": "rad/s"},
        reason="closed_form",
        flags=flags,
        extra={"slope_per_photon": slope, "slope_per_photon_sigma": slope_sigma,
               "chi2_reduced": chi2_red, "n_points": int(n.size)},
    )


@dataclass
class TraceOutcome:
    index: int
    pump_dbm: float | None
    n_d: float | None = None
    report: FitReport | None = None
    error: OmCavityError | None = None
    in_linear_regime: bool = False

    @property
    def ok(self) -> bool:
        return self.error is None and self.report is not None


@dataclass
class BatchResult:
    bare: FitReport
    cavity: CavityParams
    outcomes: list[TraceOutcome]
    points: list[CoopPoint]
    gamma_m: float
    gamma_m_sigma: float
    g0: FitReport | None = None
    g0_error: OmCavityError | None = None
    flags: list[str] = field(default_factory=list)


def _weighted_mean(values: np.ndarray, sigmas: np.ndarray) -> tuple[float, float]:
    good = np.isfinite(sigmas) & (sigmas > 0)
    if not good.any():
        return float(np.mean(values)), math.inf
    w = 1.0 / sigmas[good] ** 2
    return float(np.sum(w * values[good]) / np.sum(w)), float(1.0 / math.sqrt(np.sum(w)))


def batch_extract(traces: Sequence[Trace], kappa_in: float, kappa_out: float, *,
                  attenuation_db: float | None = None,
                  linear_max_nd: float | None = None, refine_passes: int = 2) -> BatchResult:
    """Run the full chain over sweeps taken at increasing pump power.

    Each trace needs ``pump_dbm`` and ``pump_hz`` headers and, unless
    ``attenuation_db`` is given, ``atten_db``.  The bare cavity is fitted on
    the lowest-power trace with its OMIA window masked, then refined over
    ``refine_passes`` rounds in which the window is fitted and held fixed while
    the cavity is refitted on all points.  Per-trace failures
    are recorded in the outcomes and the remaining traces are still used.
    Points with ``n_d`` above ``linear_max_nd`` are excluded from the g0 fit
    and only checked for a sub-linear trend.
    """
    if not traces:
        raise TooFewPoints("no traces given")
    outcomes = []
    usable = []
    for k, tr in enumerate(traces):
        try:
            _check_finite(tr)
            pdbm = tr.meta_float("pump_dbm")
            tr.meta_float("pump_hz")
            if attenuation_db is None:
                tr.meta_float("atten_db")
            outcomes.append(TraceOutcome(k, pdbm))
            usable.append(k)
        except OmCavityError as exc:
            outcomes.append(TraceOutcome(k, None, error=exc))
    if not usable:
        raise outcomes[0].error
    usable.sort(key=lambda k: (outcomes[k].pump_dbm, k))
    lowest = traces[usable[0]]
    bare = fit_bare_cavity(lowest)
    cav = CavityParams.from_total(bare["omega_c"], bare["kappa"], bare["amp_scale"], kappa_in, kappa_out)
    # alternate window and cavity fits on the lowest-power trace
    for _ in range(refine_passes):
        try:
            window_fit = fit_omia(lowest, cav)
        except (NoDipFound, DegenerateFit):
            break
        bare = refine_cavity(lowest, cav, window_fit)
        cav = CavityParams.from_total(bare["omega_c"], bare["kappa"], bare["amp_scale"],
                                      kappa_in, kappa_out)

    for k in usable:
        tr = traces[k]
        out = outcomes[k]
        try:
            rep = fit_omia(tr, cav)
            atten = attenuation_db if attenuation_db is not None else tr.meta_float("atten_db")
            pump = PumpConfig.from_dbm(TWO_PI * tr.meta_float("pump_hz"), out.pump_dbm, atten)
            out.n_d = photons_from_power(cav, pump)
            out.report = rep
        except OmCavityError as exc:
            logger.info("trace %d flagged: %s", k, exc)
            out.error = exc
    good = [o for o in outcomes if o.ok]
    for o in good:
        o.in_linear_regime = linear_max_nd is None or o.n_d <= linear_max_nd
    linear = [o for o in good if o.in_linear_regime]
    points = [CoopPoint(o.n_d, o.report["coop"], o.report.sigma("coop")) for o in good]
    gam, gam_sig = _weighted_mean(np.array([o.report["gamma_m"] for o in linear] or [math.nan]),
                                  np.array([o.report.sigma("gamma_m") for o in linear] or [math.nan]))
    result = BatchResult(bare=bare, cavity=cav, outcomes=outcomes, points=points,
                         gamma_m=gam, gamma_m_sigma=gam_sig)
    try:
        lin_points = [CoopPoint(o.n_d, o.report["coop"], o.report.sigma("coop")) for o in linear]
        result.g0 = fit_coop_linear(lin_points, cav.kappa, gam,
                                    kappa_sigma=bare.sigma("kappa"), gamma_sigma=gam_sig)
    except OmCavityError as exc:
        result.g0_error = exc
        return result
    slope = result.g0.extra["slope_per_photon"]
    slope_sig = result.g0.extra["slope_per_photon_sigma"]
    for o in good:
        if o.in_linear_regime:
            continue
        expected = slope * o.n_d
        spread = math.hypot(o.report.sigma("coop"), slope_sig * o.n_d)
        if o.report["coop"] < expected - 3 * spread:
            result.flags.append(f"sublinear:trace{o.index}")
    if result.flags:
        warnings.warn(f"{len(result.flags)} high-power point(s) fall > 3 sigma below the "
                      "low-power cooperativity line", SublinearWarning, stacklevel=2)
    return result
