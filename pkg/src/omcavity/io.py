"""File formats: CSV traces with ``#key=value`` headers and versioned JSON.

Files always hold ordinary frequencies (Hz); conversion to rad/s happens in
the ``*_from_dict`` helpers.  Writers are deterministic: floats use 17
significant digits and JSON keys are sorted.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .electrotune import VSweep
from .errors import InputError
from .fitkit.extract import CoopPoint, Trace
from .netfoster import AdmittanceTrace
from .omresponse import CavityParams, MechMode

SCHEMA_VERSION = 1
TWO_PI = 2 * math.pi

ADMITTANCE_COLUMNS = ("freq_hz", "y_imag_siemens")
TRACE_COLUMNS = ("freq_hz", "mag_db", "phase_rad")
VSWEEP_COLUMNS = ("vdc_v", "freq_hz")


def fmt(x) -> str:
    """Shortest text that is stable across runs for a float or int."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _parse_meta_value(text: str):
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        return text


def _read_table(path: str | os.PathLike, columns: Sequence[str], required: int):
    """Rows of a headed CSV with ``#`` comment lines; returns (meta, arrays)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    meta: dict = {}
    body = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            entry = stripped[1:].strip()
            if "=" in entry:
                key, value = entry.split("=", 1)
                meta[key.strip()] = _parse_meta_value(value)
            continue
        body.append(line)
    if not body:
        raise InputError(f"{path}: no header row")
    reader = csv.reader(body)
    header = [h.strip() for h in next(reader)]
    if tuple(header[:required]) != tuple(columns[:required]) or \
            tuple(header) != tuple(columns[:len(header)]):
        raise InputError(f"{path}: expected columns {','.join(columns[:required])}"
                         f"{' [' + ','.join(columns[required:]) + ']' if len(columns) > required else ''}"
                         f", got {','.join(header)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise InputError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
        try:
            rows.append([float(v) for v in row])
        except ValueError:
            raise InputError(f"{path}: non-numeric value in row {lineno}") from None
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return meta, {name: data[:, j] for j, name in enumerate(header)}


def _write_table(path: str | os.PathLike, columns: Sequence[str], arrays: Sequence[Iterable],
                 meta: dict | None = None) -> None:
    buf = io.StringIO()
    for key in sorted(meta or {}):
        value = meta[key]
        text = fmt(value) if isinstance(value, (int, float, np.integer, np.floating)) else str(value)
        if "\n" in text or "=" in key:
            raise InputError(f"metadata entry {key!r} cannot be written as a header line")
        buf.write(f"#{key}={text}\n")
    buf.write(",".join(columns) + "\n")
    for row in zip(*arrays):
        buf.write(",".join(fmt(v) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


# admittance traces

def read_admittance_csv(path) -> AdmittanceTrace:
    """``freq_hz,y_imag_siemens`` table as an admittance trace in rad/s."""
    _, cols = _read_table(path, ADMITTANCE_COLUMNS, 2)
    return AdmittanceTrace(TWO_PI * cols["freq_hz"], cols["y_imag_siemens"])


def write_admittance_csv(path, trace: AdmittanceTrace, meta: dict | None = None) -> None:
    _write_table(path, ADMITTANCE_COLUMNS, [trace.freqs / TWO_PI, trace.y_imag], meta)


# probe traces

def read_trace_csv(path) -> Trace:
    """``freq_hz,mag_db[,phase_rad]`` table; without phase the trace is magnitude-only."""
    meta, cols = _read_table(path, TRACE_COLUMNS, 2)
    mag = 10 ** (cols["mag_db"] / 20)
    if "phase_rad" in cols:
        return Trace(cols["freq_hz"], mag * np.exp(1j * cols["phase_rad"]), False, meta)
    return Trace(cols["freq_hz"], mag, True, meta)


def write_trace_csv(path, trace: Trace) -> None:
    with np.errstate(divide="ignore"):
        mag_db = 20 * np.log10(trace.magnitude)
    if trace.magnitude_only:
        _write_table(path, TRACE_COLUMNS[:2], [trace.freqs, mag_db], trace.meta)
    else:
        _write_table(path, TRACE_COLUMNS, [trace.freqs, mag_db, np.angle(trace.s21)], trace.meta)


# bias sweeps

def read_vsweep_csv(path) -> VSweep:
    """``vdc_v,freq_hz`` table as a sweep in rad/s."""
    _, cols = _read_table(path, VSWEEP_COLUMNS, 2)
    return VSweep(cols["vdc_v"], TWO_PI * cols["freq_hz"])


def write_vsweep_csv(path, sweep: VSweep, meta: dict | None = None) -> None:
    _write_table(path, VSWEEP_COLUMNS, [sweep.volts, sweep.freqs / TWO_PI], meta)


# JSON

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; write null
        return x if math.isfinite(x) else None
    return obj


def dumps(obj: dict) -> str:
    data = {"schema_version": SCHEMA_VERSION, **_jsonable(obj)}
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def write_json(path, obj: dict) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path) -> dict:
    """Parse a JSON object, accepting ``schema_version`` 1 or none."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: top level must be a JSON object")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise InputError(f"{path}: unsupported schema_version {version!r}")
    return data


def _number(data: dict, key: str, where: str, default=None, required=True) -> float:
    if key not in data:
        if required and default is None:
            raise InputError(f"{where}: missing key '{key}'")
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"{where}: key '{key}' must be a number, got {value!r}")
    return float(value)


def cavity_from_dict(data: dict, where: str = "cavity") -> CavityParams:
    """``{omega_c_hz, kappa_int_hz, kappa_in_hz, kappa_out_hz[, amp_scale]}``."""
    if not isinstance(data, dict):
        raise InputError(f"{where}: expected an object")
    return CavityParams(
        TWO_PI * _number(data, "omega_c_hz", where),
        TWO_PI * _number(data, "kappa_int_hz", where),
        TWO_PI * _number(data, "kappa_in_hz", where),
        TWO_PI * _number(data, "kappa_out_hz", where),
        _number(data, "amp_scale", where, default=1.0),
    )


def cavity_to_dict(cav: CavityParams) -> dict:
    return {"omega_c_hz": cav.omega_c / TWO_PI, "kappa_int_hz": cav.kappa_int / TWO_PI,
            "kappa_in_hz": cav.kappa_in / TWO_PI, "kappa_out_hz": cav.kappa_out / TWO_PI,
            "amp_scale": cav.amp_scale}


def mech_from_dict(data: dict, where: str = "mechanics") -> MechMode:
    """``{omega_m_hz, gamma_m_hz[, g0_hz, mass_eff_kg]}``."""
    if not isinstance(data, dict):
        raise InputError(f"{where}: expected an object")
    mass = _number(data, "mass_eff_kg", where, required=False)
    return MechMode(TWO_PI * _number(data, "omega_m_hz", where),
                    TWO_PI * _number(data, "gamma_m_hz", where),
                    TWO_PI * _number(data, "g0_hz", where, default=0.0), mass)


def mech_to_dict(mech: MechMode) -> dict:
    out = {"omega_m_hz": mech.omega_m / TWO_PI, "gamma_m_hz": mech.gamma_m / TWO_PI,
           "g0_hz": mech.g0 / TWO_PI}
    if mech.mass_eff is not None:
        out["mass_eff_kg"] = mech.mass_eff
    return out


# cooperativity points

def write_coop_points_csv(path, points) -> None:
    """``n_d,coop,coop_sigma`` table sorted by photon number."""
    pts = sorted(points, key=lambda p: p.n_d)
    _write_table(path, ("n_d", "coop", "coop_sigma"),
                 [[p.n_d for p in pts], [p.coop for p in pts], [p.coop_sigma for p in pts]])


def read_coop_points_csv(path) -> list[CoopPoint]:
    _, cols = _read_table(path, ("n_d", "coop", "coop_sigma"), 3)
    return [CoopPoint(float(n), float(c), float(s))
            for n, c, s in zip(cols["n_d"], cols["coop"], cols["coop_sigma"])]
