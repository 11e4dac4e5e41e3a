"""Command line front end: ``omcavity modes|simulate|fit|tune``.

Each command reads a JSON config (paths inside it are relative to the
config file), writes its results into ``--out`` and exits with
0 success, 1 input error, 2 domain error, 3 convergence failure,
4 insufficient data.
"""

from __future__ import annotations

import argparse
import glob
import logging
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from filelock import FileLock, Timeout

from . import io as fio
from .electrotune import TuneModel, VSweep, fit_parabola, parallel_plate_derivatives, softened_frequency
from .errors import InputError, NoModeFound, NotConverged, OmCavityError, TooFewPoints
from .fitkit import models
from .fitkit.extract import Trace, batch_extract, fit_bare_cavity, fit_omia, refine_cavity
from .fitkit.lsq import MAX_ITER
from .netfoster import (
    FosterNetwork,
    default_grid,
    find_modes,
    modes_summary,
    network_modes,
    synthesize_admittance,
    total_admittance,
)
from .omresponse import DEFAULT_MASS_FACTOR, CavityParams, DrumGeometry, MechMode, cooperativity
from .plots import PlotSeries, write_plot
from .synth import DEFAULT_SEGMENTS, power_series_traces, simulate_trace, sweep_grid

logger = logging.getLogger("omcavity")

TWO_PI = 2 * math.pi
U64_MAX = 2**64 - 1
PLOT_MAX_POINTS = 2000
LOCK_NAME = ".omcavity.lock"


@dataclass
class RunConfig:
    """Parsed command configuration with paths resolved against ``base_dir``."""

    command: str
    data: dict
    base_dir: Path
    out_dir: Path
    seed: int | None = None
    snr_db: float | None = None
    linear_max_nd: float | None = None
    extra: dict = field(default_factory=dict)

    def path(self, key: str, required: bool = True) -> Path | None:
        value = self.data.get(key)
        if value is None:
            if required:
                raise InputError(f"config: missing key '{key}'")
            return None
        if not isinstance(value, str):
            raise InputError(f"config: key '{key}' must be a path string")
        p = self.base_dir / value
        if not p.exists():
            raise InputError(f"config: '{key}' path does not exist: {value}")
        return p

    def paths(self, key: str) -> list[tuple[str, Path]]:
        """Expand a list of paths or glob patterns, sorted within each pattern."""
        entries = self.data.get(key)
        if entries is None:
            raise InputError(f"config: missing key '{key}'")
        if isinstance(entries, str):
            entries = [entries]
        if not isinstance(entries, list) or not all(isinstance(e, str) for e in entries):
            raise InputError(f"config: key '{key}' must be a path or list of paths")
        out = []
        for pattern in entries:
            hits = sorted(glob.glob(str(self.base_dir / pattern)))
            if not hits:
                raise InputError(f"config: '{key}' entry matches no file: {pattern}")
            for h in hits:
                out.append((os.path.relpath(h, self.base_dir), Path(h)))
        return out

    def number(self, key: str, default=None, required: bool = False):
        if key not in self.data or self.data[key] is None:
            if required:
                raise InputError(f"config: missing key '{key}'")
            return default
        value = self.data[key]
        if isinstance(value, str) and value.lower() in ("inf", "+inf", "infinity"):
            return math.inf
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InputError(f"config: key '{key}' must be a number, got {value!r}")
        return float(value)


def _decimate(n: int, limit: int = PLOT_MAX_POINTS) -> slice:
    return slice(None, None, max(1, math.ceil(n / limit)))


# modes

def cmd_modes(cfg: RunConfig) -> int:
    c_m = cfg.extra.get("c_m_f")
    if c_m is None:
        c_m = cfg.number("c_m_f", default=0.0)
    if not c_m >= 0:
        raise InputError("c_m_f must be >= 0")
    adm_path = cfg.path("admittance_path", required=False)
    network = None
    if adm_path is not None:
        trace = total_admittance(fio.read_admittance_csv(adm_path), c_m)
        modes = find_modes(trace)
    else:
        if "network" in cfg.data:
            net_data = cfg.data["network"]
        else:
            net_data = fio.read_json(cfg.path("network_path"))
        network = FosterNetwork.from_dict(net_data)
        grid = _modes_grid(cfg, network, c_m)
        modes = network_modes(network, c_m, grid)
        trace = total_admittance(synthesize_admittance(network, grid), c_m)
    if not modes:
        raise NoModeFound("no modes found")
    rows = modes_summary(modes, c_m)
    report = {"c_m_f": c_m, "modes": rows}
    if network is not None:
        report["network"] = network.to_dict()
    fio.write_json(cfg.out_dir / "modes.json", report)
    fio.write_admittance_csv(cfg.out_dir / "admittance.csv", trace, {"c_m_f": c_m})
    sl = _decimate(len(trace))
    y = trace.y_imag[sl] * 1e3
    # poles make the curve unbounded; clip for display
    lim = 10 * float(np.median(np.abs(y))) or 1.0
    series = [PlotSeries(trace.freqs[sl] / TWO_PI / 1e9, np.clip(y, -lim, lim),
                         "frequency (GHz)", "Im Y (mS)", "line", "Im Y"),
              PlotSeries([r["f0_ghz"] for r in rows], [0.0] * len(rows),
                         "frequency (GHz)", "Im Y (mS)", "scatter", "modes")]
    write_plot(cfg.out_dir / "admittance_plot", series, "port susceptance")
    logger.info("found %d mode(s); lowest at %.6g GHz", len(rows), rows[0]["f0_ghz"])
    return 0


def _modes_grid(cfg: RunConfig, network: FosterNetwork, c_m: float) -> np.ndarray:
    spec = cfg.data.get("grid")
    if spec is None:
        return default_grid(network, c_m)
    if not isinstance(spec, dict):
        raise InputError("config: 'grid' must be an object {f_min_hz, f_max_hz, points}")
    sub = RunConfig(cfg.command, spec, cfg.base_dir, cfg.out_dir)
    f0 = sub.number("f_min_hz", required=True)
    f1 = sub.number("f_max_hz", required=True)
    n = int(sub.number("points", default=20001))
    if not 0 < f0 < f1 or n < 3:
        raise InputError("grid needs 0 < f_min_hz < f_max_hz and points >= 3")
    if spec.get("spacing", "log") == "linear":
        grid = np.linspace(f0, f1, n)
    else:
        grid = np.geomspace(f0, f1, n)
    return TWO_PI * grid


# simulate

def cmd_simulate(cfg: RunConfig) -> int:
    cav = fio.cavity_from_dict(cfg.data.get("cavity"))
    mech_list = cfg.data.get("mechanics", []) or []
    if not isinstance(mech_list, list):
        raise InputError("config: 'mechanics' must be a list")
    mechs = [fio.mech_from_dict(m, f"mechanics[{k}]") for k, m in enumerate(mech_list)]
    seed = cfg.seed if cfg.seed is not None else int(cfg.number("seed", default=0))
    snr = cfg.snr_db if cfg.snr_db is not None else cfg.number("snr_db", default=math.inf)
    segments = cfg.data.get("sweep", {}).get("segments", DEFAULT_SEGMENTS) \
        if isinstance(cfg.data.get("sweep", {}), dict) else None
    if segments is None:
        raise InputError("config: 'sweep' must be an object with 'segments'")
    gen = {"gen_" + k: v for k, v in fio.cavity_to_dict(cav).items()}
    gen.update({"seed": seed, "snr_db": snr})
    pump = cfg.data.get("pump")
    written = []
    if pump is None or not mechs:
        grid = sweep_grid(segments, cav.omega_c / TWO_PI, cav.kappa / TWO_PI)
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        trace = simulate_trace(cav, grid, snr_db=snr, rng=rng, meta=gen)
        name = "trace_000.csv"
        fio.write_trace_csv(cfg.out_dir / name, trace)
        written.append({"file": name})
    else:
        if not isinstance(pump, dict):
            raise InputError("config: 'pump' must be an object")
        psub = RunConfig(cfg.command, pump, cfg.base_dir, cfg.out_dir)
        atten = psub.number("attenuation_db", required=True)
        mech = mechs[0]
        coops = _pump_coops(pump, cav, mech)
        # further modes scale with g0**2 / gamma_m relative to the first
        ref = mech.g0**2 / mech.gamma_m
        extra = [(m, (m.g0**2 / m.gamma_m) / ref) for m in mechs[1:]]
        traces = power_series_traces(cav, mech, coops, attenuation_db=atten, snr_db=snr,
                                     seed=seed, segments=segments, extra_mechs=extra)
        for k, tr in enumerate(traces):
            tr.meta.update(gen)
            tr.meta.update({"gen_" + key: v for key, v in fio.mech_to_dict(mech).items()})
            name = f"trace_{k:03d}.csv"
            fio.write_trace_csv(cfg.out_dir / name, tr)
            written.append({"file": name, "gen_coop": tr.meta["gen_coop"],
                            "gen_n_d": tr.meta["gen_n_d"], "pump_dbm": tr.meta["pump_dbm"]})
    manifest = {"cavity": fio.cavity_to_dict(cav),
                "mechanics": [fio.mech_to_dict(m) for m in mechs],
                "seed": seed, "snr_db": None if math.isinf(snr) else snr,
                "noiseless": math.isinf(snr), "traces": written}
    fio.write_json(cfg.out_dir / "simulate.json", manifest)
    logger.info("wrote %d trace(s)", len(written))
    return 0


def _pump_coops(pump: dict, cav: CavityParams, mech: MechMode) -> list[float]:
    if "coops" in pump:
        values = pump["coops"]
        kind = "coops"
    elif "n_d" in pump:
        values = pump["n_d"]
        kind = "n_d"
    else:
        raise InputError("config: 'pump' needs 'coops' or 'n_d'")
    if not isinstance(values, list) or not values or \
            not all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in values):
        raise InputError(f"config: 'pump.{kind}' must be a non-empty list of positive numbers")
    if not mech.g0 > 0:
        raise InputError("config: pumped simulation needs mechanics[0].g0_hz > 0")
    if kind == "coops":
        return [float(v) for v in values]
    return [cooperativity(mech.g0, float(n), cav.kappa, mech.gamma_m) for n in values]


# fit

def cmd_fit(cfg: RunConfig) -> int:
    mode = cfg.data.get("mode", "batch")
    if mode not in ("bare", "omia", "batch"):
        raise InputError(f"config: 'mode' must be bare, omia or batch, got {mode!r}")
    files = cfg.paths("traces")
    traces = [fio.read_trace_csv(p) for _, p in files]
    names = [n for n, _ in files]
    if mode == "bare":
        return _fit_bare(cfg, names, traces)
    if mode == "omia":
        return _fit_omia(cfg, names, traces)
    return _fit_batch(cfg, names, traces)


def _magnitude_plot(cfg: RunConfig, names, traces, model_curves, stem: str, title: str):
    series = []
    for k, (name, tr, model) in enumerate(zip(names, traces, model_curves)):
        sl = _decimate(tr.freqs.size)
        label = f"t{k}"
        series.append(PlotSeries(tr.freqs[sl], tr.magnitude[sl], "probe frequency (Hz)", "|S21|",
                                 "scatter", f"{label} data"))
        series.append(PlotSeries(tr.freqs[sl], np.abs(model)[sl], "probe frequency (Hz)", "|S21|",
                                 "line", f"{label} fit"))
    write_plot(cfg.out_dir / stem, series, title)
    resid = [PlotSeries(tr.freqs[_decimate(tr.freqs.size)],
                        (tr.magnitude - np.abs(m))[_decimate(tr.freqs.size)],
                        "probe frequency (Hz)", "|S21| residual", "scatter", f"t{k}")
             for k, (tr, m) in enumerate(zip(traces, model_curves))]
    write_plot(cfg.out_dir / "residuals", resid, "fit residuals")


def _max_iter(cfg: RunConfig) -> int:
    value = cfg.number("max_iter", default=MAX_ITER)
    if not (value >= 1 and value == int(value)):
        raise InputError("config: 'max_iter' must be a positive integer")
    return int(value)


def _fit_bare(cfg, names, traces) -> int:
    fits, curves = [], []
    max_iter = _max_iter(cfg)
    for name, tr in zip(names, traces):
        try:
            rep = fit_bare_cavity(tr, max_iter=max_iter)
        except NotConverged as exc:
            # keep what was fitted so far, then report the failure
            fits.append({"trace": name, **exc.report.to_dict()})
            fio.write_json(cfg.out_dir / "fitreport.json", {"mode": "bare", "fits": fits})
            raise
        fits.append({"trace": name, **rep.to_dict()})
        curves.append(models.bare(tr.omega, rep["omega_c"], rep["kappa"], rep["amp_scale"]))
    fio.write_json(cfg.out_dir / "fitreport.json", {"mode": "bare", "fits": fits})
    _magnitude_plot(cfg, names, traces, curves, "fit_plot", "bare cavity fit")
    return 0


def _cavity_for(cfg: RunConfig, tr: Trace) -> CavityParams:
    if "cavity" in cfg.data:
        return fio.cavity_from_dict(cfg.data["cavity"])
    k_in = TWO_PI * cfg.number("kappa_in_hz", required=True)
    k_out = TWO_PI * cfg.number("kappa_out_hz", required=True)
    bare = fit_bare_cavity(tr)
    cav = CavityParams.from_total(bare["omega_c"], bare["kappa"], bare["amp_scale"], k_in, k_out)
    for _ in range(2):
        window = fit_omia(tr, cav)
        bare = refine_cavity(tr, cav, window)
        cav = CavityParams.from_total(bare["omega_c"], bare["kappa"], bare["amp_scale"], k_in, k_out)
    return cav


def _fit_omia(cfg, names, traces) -> int:
    fits, curves = [], []
    for name, tr in zip(names, traces):
        cav = _cavity_for(cfg, tr)
        rep = fit_omia(tr, cav, max_iter=_max_iter(cfg))
        fits.append({"trace": name, "cavity": fio.cavity_to_dict(cav), **rep.to_dict()})
        curves.append(models.omia(tr.omega, rep["omega_m"], rep["gamma_m"], rep["coop"],
                                  omega_c=cav.omega_c, kappa=cav.kappa, amp=cav.amp_scale,
                                  omega_d=TWO_PI * tr.meta_float("pump_hz")))
    fio.write_json(cfg.out_dir / "fitreport.json", {"mode": "omia", "fits": fits})
    _magnitude_plot(cfg, names, traces, curves, "fit_plot", "OMIA window fit")
    return 0


def _fit_batch(cfg, names, traces) -> int:
    if len(traces) < 3:
        raise TooFewPoints(f"batch fit needs at least 3 traces, got {len(traces)}")
    k_in = TWO_PI * cfg.number("kappa_in_hz", required=True)
    k_out = TWO_PI * cfg.number("kappa_out_hz", required=True)
    atten = cfg.number("attenuation_db")
    lin_max = cfg.linear_max_nd if cfg.linear_max_nd is not None else cfg.number("linear_max_nd")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = batch_extract(traces, k_in, k_out, attenuation_db=atten, linear_max_nd=lin_max)
    for w in caught:
        logger.warning("%s", w.message)
    outcomes = []
    for o in result.outcomes:
        entry = {"trace": names[o.index], "pump_dbm": o.pump_dbm, "n_d": o.n_d,
                 "in_linear_regime": o.in_linear_regime}
        if o.report is not None:
            entry.update(o.report.to_dict())
        if o.error is not None:
            entry["error"] = f"{type(o.error).__name__}: {o.error}"
        outcomes.append(entry)
    report = {"mode": "batch", "bare": result.bare.to_dict(),
              "cavity": fio.cavity_to_dict(result.cavity),
              "gamma_m_hz": result.gamma_m / TWO_PI, "gamma_m_hz_sigma": result.gamma_m_sigma / TWO_PI,
              "linear_max_nd": lin_max, "traces": outcomes, "flags": list(result.flags)}
    if result.g0 is not None:
        report["g0"] = result.g0.to_dict()
    if result.g0_error is not None:
        report["g0_error"] = f"{type(result.g0_error).__name__}: {result.g0_error}"
    pts = sorted(result.points, key=lambda p: p.n_d)
    fio.write_coop_points_csv(cfg.out_dir / "coop_points.csv", pts)
    fio.write_json(cfg.out_dir / "fitreport.json", report)
    if pts:
        series = [PlotSeries([p.n_d for p in pts], [p.coop for p in pts], "pump photons n_d",
                             "cooperativity", "scatter", "fitted C")]
        if result.g0 is not None:
            n = np.linspace(0, pts[-1].n_d, 50)
            series.append(PlotSeries(n, result.g0.extra["slope_per_photon"] * n, "pump photons n_d",
                                     "cooperativity", "line", "linear fit"))
        write_plot(cfg.out_dir / "coop_plot", series, "cooperativity against pump photons")
    if result.g0_error is not None:
        raise result.g0_error
    logger.info("g0 = %.6g Hz", result.g0["g0"] / TWO_PI)
    return 0


# tune

def cmd_tune(cfg: RunConfig) -> int:
    mode = cfg.data.get("mode", "fit")
    if mode == "forward":
        return _tune_forward(cfg)
    if mode != "fit":
        raise InputError(f"config: 'mode' must be fit or forward, got {mode!r}")
    sweep = fio.read_vsweep_csv(cfg.path("vsweep_path"))
    spring_k = cfg.number("spring_k_n_per_m")
    if spring_k is None and isinstance(cfg.data.get("model"), dict):
        spring_k = _tune_model(cfg).spring_k
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit = fit_parabola(sweep, spring_k)
    for w in caught:
        logger.warning("%s", w.message)
    report = {"mode": "fit", **fit.to_dict()}
    fio.write_json(cfg.out_dir / "tunereport.json", report)
    v = np.linspace(sweep.volts.min(), sweep.volts.max(), 201)
    series = [PlotSeries(sweep.volts, sweep.freqs / TWO_PI, "bias (V)", "frequency (Hz)", "scatter", "data"),
              PlotSeries(v, (fit.omega_m0 + fit.curvature * v * v) / TWO_PI, "bias (V)", "frequency (Hz)",
                         "line", "parabola")]
    write_plot(cfg.out_dir / "tune_plot", series, "frequency against bias")
    return 0


def _tune_model(cfg: RunConfig) -> TuneModel:
    spec = cfg.data.get("model")
    if not isinstance(spec, dict):
        raise InputError("config: 'model' must be an object")
    sub = RunConfig(cfg.command, spec, cfg.base_dir, cfg.out_dir)
    omega0 = TWO_PI * sub.number("f0_hz", required=True)
    geom_spec = spec.get("geometry")
    geom = None
    if geom_spec is not None:
        if not isinstance(geom_spec, dict):
            raise InputError("config: 'model.geometry' must be an object")
        gs = RunConfig(cfg.command, geom_spec, cfg.base_dir, cfg.out_dir)
        geom = DrumGeometry(gs.number("diameter_m", required=True), gs.number("gap_m", required=True),
                            gs.number("film_thickness_m", required=True),
                            gs.number("density_kg_per_m3", required=True))
        n_drums = gs.number("n_drums", default=1.0)
    mass = sub.number("mass_eff_kg")
    if mass is None:
        if geom is None:
            raise InputError("config: 'model' needs 'mass_eff_kg' or 'geometry'")
        mass = geom.mass_eff(sub.number("mass_factor", default=DEFAULT_MASS_FACTOR))
    d2c = sub.number("c_dprime_f_per_m2")
    if d2c is None:
        if geom is None:
            raise InputError("config: 'model' needs 'c_dprime_f_per_m2' or 'geometry'")
        d2c = n_drums * parallel_plate_derivatives(geom)["c_dprime"]
    return TuneModel.from_mass(omega0, mass, d2c)


def _tune_forward(cfg: RunConfig) -> int:
    model = _tune_model(cfg)
    volts = cfg.data.get("volts")
    if isinstance(volts, dict):
        vs = RunConfig(cfg.command, volts, cfg.base_dir, cfg.out_dir)
        v = np.linspace(vs.number("v_min", required=True), vs.number("v_max", required=True),
                        int(vs.number("points", default=21)))
    elif isinstance(volts, list) and volts:
        v = np.array(volts, dtype=float)
    else:
        raise InputError("config: 'volts' must be a list or {v_min, v_max, points}")
    freqs = np.atleast_1d(softened_frequency(model, v))
    noise = cfg.number("noise_rel_excursion", default=0.0)
    if noise > 0:
        seed = cfg.seed if cfg.seed is not None else int(cfg.number("seed", default=0))
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        excursion = float(freqs.max() - freqs.min())
        freqs = freqs + rng.normal(0.0, noise * excursion, freqs.size)
    curvature = -model.omega_m0 * model.d2c_dx2 / (4 * model.spring_k)
    report = {"mode": "forward", "f0_hz": model.omega_m0 / TWO_PI,
              "curvature_hz_per_v2": curvature / TWO_PI, "c_dprime_f_per_m2": model.d2c_dx2,
              "spring_k_n_per_m": model.spring_k, "mass_eff_kg": model.mass_eff,
              "pull_in_v": model.pull_in_voltage, "noise_rel_excursion": noise,
              "points": [{"vdc_v": float(a), "freq_hz": float(b) / TWO_PI} for a, b in zip(v, freqs)]}
    fio.write_json(cfg.out_dir / "tunereport.json", report)
    if v.size >= 3:
        fio.write_vsweep_csv(cfg.out_dir / "vsweep.csv", VSweep(v, freqs))
    series = [PlotSeries(v, freqs / TWO_PI, "bias (V)", "frequency (Hz)",
                         "scatter" if noise > 0 else "line", "model")]
    write_plot(cfg.out_dir / "tune_plot", series, "frequency against bias")
    return 0


COMMANDS = {"modes": cmd_modes, "simulate": cmd_simulate, "fit": cmd_fit, "tune": cmd_tune}


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit value")
    return value


def _snr(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--snr-db must be a number or inf, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omcavity", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("modes", "find circuit modes of a Foster network"),
                           ("simulate", "generate synthetic probe sweeps"),
                           ("fit", "fit probe sweeps (bare, omia or batch)"),
                           ("tune", "bias tuning: forward model or parabola fit")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=_u64, default=None, help="noise seed (unsigned 64-bit)")
        p.add_argument("--snr-db", type=_snr, default=None, help="probe SNR in dB; inf for noiseless")
        p.add_argument("--linear-max-nd", type=float, default=None,
                       help="largest photon number used in the linear g0 fit")
        if name == "modes":
            p.add_argument("--c-m-f", type=float, default=None, help="added shunt capacitance (F)")
    return parser


def _configure_logging():
    level_name = os.environ.get("OMCAVITY_LOG", "warning").strip().upper() or "WARNING"
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        level = logging.WARNING
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("omcavity: %(levelname)s: %(message)s"))
    root = logging.getLogger("omcavity")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def run(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run a command and return its exit code."""
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        config_path = Path(args.config)
        data = fio.read_json(config_path)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        cfg = RunConfig(args.command, data, config_path.resolve().parent, out_dir, seed=args.seed,
                        snr_db=args.snr_db, linear_max_nd=args.linear_max_nd)
        if getattr(args, "c_m_f", None) is not None:
            cfg.extra["c_m_f"] = args.c_m_f
        if cfg.seed is None and "seed" in data:
            seed = data["seed"]
            if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= U64_MAX:
                raise InputError("config: 'seed' must be an unsigned 64-bit integer")
        lock_path = out_dir / LOCK_NAME
        lock = FileLock(str(lock_path), timeout=0)
        try:
            lock.acquire()
        except Timeout:
            raise InputError(f"output directory {out_dir} is in use by another run") from None
        try:
            return COMMANDS[args.command](cfg)
        finally:
            lock.release()
            try:
                lock_path.unlink()
            except FileNotFoundError:
                pass
    except OmCavityError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv))
