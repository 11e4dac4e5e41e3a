"""Synthetic probe sweeps for round-trip checks.

Frequencies here are ordinary (Hz) because they end up in trace files.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import InputError
from .fitkit.extract import Trace
from .omresponse import CavityParams, MechMode, power_for_photons, s21_bare, s21_two_tone

TWO_PI = 2 * math.pi

# coarse cavity scan, the window and its core
DEFAULT_SEGMENTS = (
    {"around": "cavity", "half_span": 4.0, "unit": "kappa", "points": 401},
    {"around": "dip", "half_span": 6.0, "unit": "width", "points": 401},
    {"around": "dip", "half_span": 2.0, "unit": "gamma", "points": 101},
)


def sweep_grid(segments: Sequence[dict], f_c: float, kappa_hz: float, dip_hz: float | None = None,
               width_hz: float | None = None, gamma_hz: float | None = None) -> np.ndarray:
    """Union of uniform segments, like a segmented analyzer sweep.

    Each segment is ``{"around": "cavity"|"dip", "half_span": x,
    "unit": "kappa"|"width"|"gamma"|"hz", "points": n}``.  Segments around the
    dip are skipped when no dip is given.
    """
    units = {"kappa": kappa_hz, "width": width_hz, "gamma": gamma_hz, "hz": 1.0}
    parts = []
    for seg in segments:
        try:
            around = seg.get("around", "cavity")
            unit = seg.get("unit", "kappa")
            half = float(seg["half_span"]) * units[unit] if units.get(unit) is not None else None
            points = int(seg["points"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad sweep segment {seg!r}: {exc}") from None
        if around == "dip":
            if dip_hz is None:
                continue
            centre = dip_hz
        elif around == "cavity":
            centre = f_c
        else:
            raise InputError(f"sweep segment 'around' must be 'cavity' or 'dip', got {around!r}")
        if half is None:
            raise InputError(f"sweep unit {unit!r} is undefined for this trace")
        if points < 2 or not half > 0:
            raise InputError(f"sweep segment needs >= 2 points and positive span: {seg!r}")
        parts.append(np.linspace(centre - half, centre + half, points))
    if not parts:
        raise InputError("sweep has no segments")
    return np.unique(np.concatenate(parts))


def add_noise(s21: np.ndarray, amp_scale: float, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian noise with total power ``amp_scale**2 * 10**(-snr_db/10)``."""
    if math.isinf(snr_db):
        return s21.copy()
    sigma = amp_scale * 10 ** (-snr_db / 20) / math.sqrt(2)
    noise = rng.normal(0.0, sigma, s21.size) + 1j * rng.normal(0.0, sigma, s21.size)
    return s21 + noise


def simulate_trace(cav: CavityParams, freqs_hz, mechs: Sequence[MechMode] = (),
                   coops: Sequence[float] = (), pump_hz: float | None = None,
                   snr_db: float = math.inf, rng: np.random.Generator | None = None,
                   meta: dict | None = None) -> Trace:
    """Bare (no mechanics) or pumped probe sweep with optional noise."""
    freqs = np.asarray(freqs_hz, dtype=float)
    delta = TWO_PI * freqs - cav.omega_c
    if mechs:
        if pump_hz is None:
            pump_hz = (cav.omega_c - mechs[0].omega_m) / TWO_PI
        s = s21_two_tone(cav, list(mechs), list(coops), delta,
                         pump_detuning=TWO_PI * pump_hz - cav.omega_c)
    else:
        s = s21_bare(cav, delta)
    if rng is None:
        rng = np.random.default_rng(0)
    s = add_noise(s, cav.amp_scale, snr_db, rng)
    info = dict(meta or {})
    if pump_hz is not None:
        info.setdefault("pump_hz", pump_hz)
    return Trace(freqs, s, False, info)


def power_series_traces(cav: CavityParams, mech: MechMode, coops: Sequence[float], *,
                        attenuation_db: float, snr_db: float, seed: int,
                        segments: Sequence[dict] = DEFAULT_SEGMENTS,
                        extra_mechs: Sequence[tuple[MechMode, float]] = ()) -> list[Trace]:
    """One pumped sweep per cooperativity, pump on the lower sideband of ``mech``.

    Pump powers are derived from the photon numbers that give each
    cooperativity with ``mech.g0``.  ``extra_mechs`` adds further modes with
    a cooperativity proportional to the first one.
    """
    if not mech.g0 > 0:
        raise InputError("power series needs a mechanical mode with g0 > 0")
    children = np.random.default_rng(np.random.SeedSequence(seed)).spawn(len(coops))
    pump_omega = cav.omega_c - mech.omega_m
    traces = []
    for c, rng in zip(coops, children):
        n_d = c * cav.kappa * mech.gamma_m / (4 * mech.g0**2)
        p_w = power_for_photons(cav, pump_omega, n_d, attenuation_db)
        width = mech.gamma_m * (1 + c)
        dip_hz = (pump_omega + mech.omega_m) / TWO_PI
        grid = sweep_grid(segments, cav.omega_c / TWO_PI, cav.kappa / TWO_PI, dip_hz,
                          width / TWO_PI, mech.gamma_m / TWO_PI)
        mechs = [mech] + [m for m, _ in extra_mechs]
        cs = [c] + [c * r for _, r in extra_mechs]
        meta = {"pump_dbm": 10 * math.log10(p_w / 1e-3), "atten_db": attenuation_db,
                "gen_n_d": n_d, "gen_coop": c}
        traces.append(simulate_trace(cav, grid, mechs, cs, pump_omega / TWO_PI, snr_db, rng, meta))
    return traces
