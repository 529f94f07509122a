"""Command-line entry point: ``pairsource <command> --config FILE``.

Every command reads a YAML config (or a bundled one given as ``@name``),
validates it fully, and writes its results to ``--out``. Files carry the
tool version and the config hash; CSV files have a single ``# generated``
line holding the wall-clock time, which is the only part that changes
between identical reruns.

Exit codes: 0 success, 2 config error, 3 numerical non-convergence,
4 input/output error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import correlation_model as cm
from . import phasematching as pm
from . import polarization as pol
from .config import (DETECTOR, PAIR_SECTIONS, WAVEGUIDE, Field, config_hash, load_text,
                     read_config)
from .correlator import coincidence_histogram, g2_estimate, read_histogram, windowed_pair_rate
from .errors import (ConfigError, ConvergenceWarning, DegenerateDesignError, DomainError,
                     NoSolutionError, StreamError)
from .estimation import (CharacterizationConstants, PowerSweepDataset, fit_characterization,
                         fit_fringe, fit_lineshape, synthetic_power_sweep)
from .estimation.characterization import sweep_model
from .simulate import PairProcessConfig, simulate_pair_stream, simulate_thermal_stream
from .streams import read_ttag, write_ttag
from .units import angular

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class NonConvergence(Exception):
    pass


# -- schemas -------------------------------------------------------------------

BANDWIDTH = {
    "waveguide": WAVEGUIDE,
    "pump_wavelength": Field("q:length", required=True),
    "signal_wavelength": Field("q:length", required=True),
    "reference_slope": Field("q:slope"),
    "spectrum": {"span": Field("q:frequency", default=2e12), "points": Field("int", default=201)},
    "solve_temperature": Field("bool", default=False),
    "temperature_bracket": Field("list:q:temperature", default=[-50.0, 1000.0]),
}

ANALYTIC = {
    **PAIR_SECTIONS,
    "jitter": Field("q:time"),
    "tau": {"span": Field("q:time", default=5e-9), "step": Field("q:time", default=10e-12)},
    "power_sweep": {"min": Field("q:power", default=0.01), "max": Field("q:power", default=3.0),
                    "points": Field("int", default=30)},
    "g2_bin": Field("q:time"),
    "window": Field("q:time"),
}

SIMULATE_PAIR = {
    "mode": Field("str", required=True, choices=("pair", "thermal")),
    "duration": Field("q:time", required=True),
    "seed": Field("int", default=0),
    "shards": Field("int", default=1),
    "keep_pair_ids": Field("bool", default=False),
    **PAIR_SECTIONS,
}

SIMULATE_THERMAL = {
    "mode": Field("str", required=True, choices=("pair", "thermal")),
    "duration": Field("q:time", required=True),
    "seed": Field("int", default=0),
    "thermal": {
        "linewidth": Field("q:frequency", required=True),
        "flux": Field("q:rate", required=True),
        "mode_populations": Field("list:number", default=[1.0]),
        "detunings": Field("list:q:frequency", default=[0.0]),
        "time_step": Field("q:time"),
        "detector": DETECTOR,
    },
}

CORRELATE = {
    "inputs": {"a": Field("path", required=True), "b": Field("path")},
    "bin_width": Field("q:time", required=True),
    "range": Field("q:time", required=True),
    "window": Field("q:time"),
    "offset": Field("q:time", default=0.0),
}

FIT = {
    "kind": Field("str", required=True, choices=("characterization", "cross", "auto")),
    "data": Field("path"),
    "constants": {
        "signal_linewidth": Field("q:frequency"),
        "idler_linewidth": Field("q:frequency"),
        "linewidth": Field("q:frequency"),
        "dark_rate_signal": Field("q:rate", default=0.0),
        "dark_rate_idler": Field("q:rate", default=0.0),
        "p0": Field("number", default=1.0),
        "jitter": Field("q:time", default=0.0),
        "window": Field("q:time"),
        "window_offset": Field("q:time", default=0.0),
        "g2_bin": Field("q:time"),
    },
    "synthetic": {
        "brightness": Field("q:brightness"),
        "eta_s": Field("number"),
        "eta_i": Field("number"),
        "powers": Field("list:q:power"),
        "acquisition": Field("q:time", default=60.0),
        "seed": Field("int", default=0),
    },
}

ENTANGLE = {
    "state": {"alpha": Field("number", default=1.0), "beta": Field("number", default=1.0),
              "phase": Field("q:angle", default=0.0), "visibility": Field("number", default=1.0)},
    "correlators": {"E11": Field("number"), "E12": Field("number"), "E21": Field("number"),
                    "E22": Field("number"), "errors": Field("list:number")},
    "counts": Field("path"),
    "fringe": {"points": Field("int", default=37)},
    "fringe_data": Field("path"),
}


# -- helpers -----------------------------------------------------------------------

class Run:
    """Output directory, provenance and file writers for one command."""

    def __init__(self, command, cfg, args, base_dir):
        self.command = command
        self.cfg = cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.base = base_dir if base_dir is not None else self.out
        self.hash = config_hash({"command": command, "config": cfg})
        self.threads = args.threads

    def path_in(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    def header(self):
        return [f"pairsource {__version__}", f"command {self.command}", f"config_hash {self.hash}",
                f"generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}"]

    def provenance(self):
        return {"tool_version": __version__, "command": self.command, "config_hash": self.hash}

    def write_json(self, name, doc):
        path = self.out / name
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({**self.provenance(), **doc}, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        return path

    def write_csv(self, name, columns, rows):
        path = self.out / name
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.header():
                fh.write(f"# {line}\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(f"{v:.10g}" if isinstance(v, float) else str(v) for v in row) + "\n")
        return path


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _filter(sec):
    pops = tuple(sec["mode_populations"])
    return cm.FilterSpec(gamma=angular(sec["linewidth"]), fsr=sec.get("fsr", math.inf),
                         peak_transmission=sec["peak_transmission"], mode_populations=pops)


def _detector(sec):
    return cm.DetectorSpec(sec["efficiency"], sec["dark_rate"], sec["jitter"], sec["dead_time"])


def _pair_parts(cfg, power=None):
    src = cfg["source"]
    B = angular(src["spdc_bandwidth"]) if "spdc_bandwidth" in src else None
    op = cm.SourceOperatingPoint(src["brightness"], src["pump_power"] if power is None else power, B)
    fs, fi = _filter(cfg["filters"]["signal"]), _filter(cfg["filters"]["idler"])
    ds, di = _detector(cfg["detectors"]["signal"]), _detector(cfg["detectors"]["idler"])
    return op, fs, fi, ds, di


# -- commands ----------------------------------------------------------------------

def cmd_bandwidth(run: Run):
    cfg = run.cfg
    wg = cfg["waveguide"]
    sellmeier = pm.sellmeier_from_file(run.path_in(wg["sellmeier_file"])) if "sellmeier_file" in wg else None
    spec = pm.WaveguideSpec(wg["material"], wg["poling_period"] * 1e6, wg["length"] * 1e3,
                            wg["temperature"], sellmeier)
    lp, ls = cfg["pump_wavelength"] * 1e9, cfg["signal_wavelength"] * 1e9
    li = pm.idler_wavelength(lp, ls)
    T, m = spec.temperature_c, spec.sellmeier
    slope = pm.dispersion_slope(spec, ls, lp)
    report = {
        "material": spec.material.value, "sellmeier": m.citation,
        "temperature_degC": T, "poling_period_um": spec.poling_period_um, "length_mm": spec.length_mm,
        "pump_nm": lp, "signal_nm": ls, "idler_nm": li,
        "n_pump": pm.refractive_index(m, lp * 1e-3, T),
        "n_signal": pm.refractive_index(m, ls * 1e-3, T),
        "n_idler": pm.refractive_index(m, li * 1e-3, T),
        "phase_mismatch_rad_per_mm": pm.phase_mismatch(spec, lp, ls),
        "dispersion_slope_per_mm_GHz": slope,
        "fwhm_bandwidth_GHz": pm.fwhm_bandwidth(slope, spec.length_mm),
        "spdc_bandwidth_over_2pi_GHz": pm.spdc_bandwidth_rad_s(slope, spec.length_mm) / (2e9 * math.pi),
    }
    if "reference_slope" in cfg:
        report["reference_slope_per_mm_GHz"] = cfg["reference_slope"]
        report["fwhm_bandwidth_from_reference_GHz"] = pm.fwhm_bandwidth(cfg["reference_slope"], spec.length_mm)
    if cfg["solve_temperature"]:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report["phasematching_temperature_degC"] = pm.solve_phasematching_temperature(
                spec, lp, ls, tuple(cfg["temperature_bracket"]))
        report["warnings"] = [str(w.message) for w in caught]
    # spectrum of a grating that phase-matches at the configured temperature
    period = pm.poling_period_for(spec.material, T, lp, ls, m)
    matched = pm.WaveguideSpec(spec.material, period, spec.length_mm, T, m)
    det = np.linspace(-cfg["spectrum"]["span"] / 2, cfg["spectrum"]["span"] / 2, cfg["spectrum"]["points"]) * 1e-9
    spectrum = pm.spdc_spectrum(matched, lp, det, ls)
    report["spectrum_poling_period_um"] = period
    run.write_csv("spectrum.csv", ["detuning_GHz", "spectrum"], zip(det.tolist(), spectrum.tolist()))
    run.write_json("bandwidth.json", report)
    return report


def cmd_analytic(run: Run):
    cfg = run.cfg
    op, fs, fi, ds, di = _pair_parts(cfg)
    sigma = cfg.get("jitter", cm.combined_jitter(ds, di))
    span, step = cfg["tau"]["span"], cfg["tau"]["step"]
    n = int(round(span / step))
    tau = np.arange(-n, n + 1) * step
    g_ideal = cm.g2_cross(op, fs, fi, ds, di, tau, sigma=0.0)
    g_jit = cm.g2_cross(op, fs, fi, ds, di, tau, sigma=sigma)
    run.write_csv("g2_tau.csv", ["tau_ps", "g2_no_jitter", "g2_jitter"],
                  zip((tau * 1e12).tolist(), g_ideal.tolist(), g_jit.tolist()))

    ps = cfg["power_sweep"]
    powers = (np.geomspace(ps["min"], ps["max"], ps["points"]) if ps["min"] > 0
              else np.linspace(ps["min"], ps["max"], ps["points"]))
    const = CharacterizationConstants(fs.gamma, fi.gamma, ds.dark_rate, di.dark_rate, fs.p0, sigma,
                                      cfg.get("window"), 0.0, cfg.get("g2_bin"))
    eta_s, eta_i = cm.effective_efficiency(fs, ds), cm.effective_efficiency(fi, di)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_s, w_i, w_2, g2 = sweep_model([op.brightness_per_mW * 1e6, eta_s, eta_i], powers, const)
    run.write_csv("rates_vs_power.csv", ["pump_power_mW", "W_s", "W_i", "W_2", "g2si0"],
                  zip(powers.tolist(), w_s.tolist(), w_i.tolist(), w_2.tolist(), g2.tolist()))

    W = cm.fluxes(op, fs, fi, ds, di)
    pops_s = fs.mode_populations
    report = {
        "pump_power_mW": op.pump_power, "r_over_b": op.r_over_b,
        "W_s": W[0], "W_i": W[1], "W_2": W[2],
        "jitter_s": sigma, "jitter_factor_0": float(cm.jitter_factor(fs.gamma, fi.gamma, sigma, 0.0)),
        "g2si0": float(cm.g2_cross(op, fs, fi, ds, di, 0.0, sigma=sigma)),
        "g2si0_no_jitter": float(cm.g2_cross(op, fs, fi, ds, di, 0.0, sigma=0.0)),
        "schmidt_number_signal": cm.schmidt_number(pops_s),
    }
    run.write_json("analytic.json", report)
    return report


def cmd_simulate(run: Run):
    cfg = run.cfg
    seed = cfg["seed"]
    if cfg["mode"] == "thermal":
        th = cfg["thermal"]
        s = simulate_thermal_stream(angular(th["linewidth"]), th["flux"], th["mode_populations"],
                                    th["detunings"], _detector(th["detector"]), seed, cfg["duration"],
                                    dt=th.get("time_step"))
        write_ttag(s, run.out / "thermal.ttag")
        report = {"mode": "thermal", "seed": seed, "events": len(s), "rate": s.rate, "dt": s.metadata["dt"]}
    else:
        op, fs, fi, ds, di = _pair_parts(cfg)
        pc = PairProcessConfig(op, fs, fi, ds, di, cfg["duration"], seed, cfg["keep_pair_ids"],
                               cfg["shards"], run.threads)
        s, i = simulate_pair_stream(pc)
        write_ttag(s, run.out / "signal.ttag")
        write_ttag(i, run.out / "idler.ttag")
        W = cm.fluxes(op, fs, fi, ds, di)
        report = {"mode": "pair", "seed": seed, "events_signal": len(s), "events_idler": len(i),
                  "rate_signal": s.rate, "rate_idler": i.rate,
                  "expected_W_s": W[0], "expected_W_i": W[1], "expected_W_2": W[2],
                  "shards": s.metadata["shards"]}
    run.write_json("simulate.json", report)
    return report


def cmd_correlate(run: Run):
    cfg = run.cfg
    a = read_ttag(run.path_in(cfg["inputs"]["a"]))
    b = read_ttag(run.path_in(cfg["inputs"]["b"])) if "b" in cfg["inputs"] else a
    w, r = int(round(cfg["bin_width"] * 1e12)), int(round(cfg["range"] * 1e12))
    h = coincidence_histogram(a, b, w, r, threads=run.threads)
    h.metadata.update(run.provenance())
    report = {"events_a": len(a), "events_b": len(b), "auto": h.auto, "total_counts": int(h.counts.sum())}
    if "window" in cfg and len(a) and len(b):
        raw, sub, err = windowed_pair_rate(a, b, int(round(cfg["window"] * 1e12)),
                                           int(round(cfg["offset"] * 1e12)))
        report.update(pair_rate_raw=raw, pair_rate_subtracted=sub, pair_rate_err=err)
        h.metadata.update(pair_rate_raw=raw, pair_rate_subtracted=sub, pair_rate_err=err)
    if len(a) and len(b):
        g2, _ = g2_estimate(h)
        report["g2_max"] = float(g2.max())
    h.to_csv(run.out / "histogram.csv", run.header())
    h.to_json(run.out / "histogram.json")
    return report


def cmd_fit(run: Run):
    cfg = run.cfg
    c = cfg["constants"]
    if cfg["kind"] == "characterization":
        for key in ("signal_linewidth", "idler_linewidth"):
            if key not in c:
                raise ConfigError(f"constants.{key} is required for a characterization fit")
        const = CharacterizationConstants(angular(c["signal_linewidth"]), angular(c["idler_linewidth"]),
                                          c["dark_rate_signal"], c["dark_rate_idler"], c["p0"], c["jitter"],
                                          c.get("window"), c["window_offset"], c.get("g2_bin"))
        if "data" in cfg:
            data = PowerSweepDataset.from_csv(run.path_in(cfg["data"]))
        else:
            syn = cfg["synthetic"]
            missing = [k for k in ("brightness", "eta_s", "eta_i") if k not in syn]
            if missing:
                raise ConfigError(f"either 'data' or synthetic.{missing} must be given")
            truth = [syn["brightness"] * 1e6, syn["eta_s"], syn["eta_i"]]
            data = synthetic_power_sweep(truth, const, syn.get("powers"), syn["acquisition"], syn["seed"])
            data.to_csv(run.out / "sweep.csv", run.header())
        res = fit_characterization(data, const)
    else:
        if "data" not in cfg:
            raise ConfigError("a histogram 'data' file is required for lineshape fits")
        h = read_histogram(run.path_in(cfg["data"]))
        if cfg["kind"] == "cross":
            fixed = {"gamma_s": angular(c["signal_linewidth"]), "gamma_i": angular(c["idler_linewidth"]),
                     "sigma": c["jitter"]}
        else:
            fixed = {"gamma": angular(c["linewidth"])}
            if c["jitter"] > 0:
                fixed["sigma0"] = c["jitter"]
        res = fit_lineshape(h, cfg["kind"], fixed)
    doc = json.loads(res.to_json())
    run.write_json("fit.json", doc)
    if not res.converged:
        raise NonConvergence("fit did not converge; see fit.json")
    return {"parameters": doc["parameters"], "chi2": res.chi2, "dof": res.dof}


def cmd_entangle(run: Run):
    cfg = run.cfg
    st = cfg["state"]
    state = pol.pair_state(st["alpha"], st["beta"], st["phase"], st["visibility"])
    settings = pol.optimal_settings(st["phase"])
    S_pred, E_pred = pol.chsh_from_state(state, settings)
    report = {
        "state": {"alpha": st["alpha"], "beta": st["beta"], "phase_rad": st["phase"],
                  "visibility": st["visibility"]},
        "predicted_fringe_visibility": pol.fringe_visibility(state),
        "predicted_S": S_pred, "predicted_correlators": E_pred,
        "theta_plus": settings["theta_plus"], "theta_minus": settings["theta_minus"],
        "hwp_Y1_rad": settings["hwp_Y1"], "hwp_Y2_rad": settings["hwp_Y2"],
    }
    corr = cfg["correlators"]
    keys = ("E11", "E12", "E21", "E22")
    if any(k in corr for k in keys):
        missing = [k for k in keys if k not in corr]
        if missing:
            raise ConfigError(f"correlators: missing {missing}")
        errs = corr.get("errors")
        if errs is not None and len(errs) != 4:
            raise ConfigError("correlators.errors needs four entries")
        S, dS = pol.chsh_parameter(*(corr[k] for k in keys), errors=errs)
        report.update(S=S, S_err=dS, correlators={k: corr[k] for k in keys})
    if "counts" in cfg:
        table = pol.read_chsh_csv(run.path_in(cfg["counts"]))
        E = {k: pol.chsh_correlator(*table[k[1:]]) for k in keys}
        S, dS = pol.chsh_parameter(*(E[k][0] for k in keys), errors=[E[k][1] for k in keys])
        report.update(S_from_counts=S, S_from_counts_err=dS,
                      correlators_from_counts={k: {"value": v[0], "error": v[1]} for k, v in E.items()})
    thetas = np.linspace(0, math.pi, cfg["fringe"]["points"])
    curve = pol.fringe_curve(state, thetas)
    run.write_csv("fringe_curve.csv", ["theta_rad"] + [f"P{c}" for c in pol.COMBINATIONS],
                  ([t] + curve[:, k].tolist() for k, t in enumerate(thetas.tolist())))
    if "fringe_data" in cfg:
        th, counts = pol.read_fringe_csv(run.path_in(cfg["fringe_data"]))
        res = fit_fringe(th, counts, pol.COMBINATIONS)
        report["fringe_fit"] = json.loads(res.to_json())
    (run.out / "state.json").write_text(state.to_json() + "\n", encoding="utf-8")
    run.write_json("entangle.json", report)
    return report


COMMANDS = {
    "bandwidth": (cmd_bandwidth, BANDWIDTH),
    "analytic": (cmd_analytic, ANALYTIC),
    "simulate": (cmd_simulate, None),
    "correlate": (cmd_correlate, CORRELATE),
    "fit": (cmd_fit, FIT),
    "entangle": (cmd_entangle, ENTANGLE),
}


def _simulate_schema(text):
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError:
        doc = None
    mode = doc.get("mode") if isinstance(doc, dict) else None
    return SIMULATE_THERMAL if mode == "thermal" else SIMULATE_PAIR


def build_parser():
    p = argparse.ArgumentParser(prog="pairsource", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pairsource {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML config file, or @name for a bundled one")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
    return p


def run_command(args):
    func, schema = COMMANDS[args.command]
    text, base = read_config(args.config)
    if schema is None:
        schema = _simulate_schema(text)
    cfg = load_text(text, schema, str(args.config))
    if args.seed is not None:
        if "seed" in schema:
            cfg["seed"] = args.seed
        elif "synthetic" in schema:
            cfg["synthetic"]["seed"] = args.seed
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    run = Run(args.command, cfg, args, base)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        return func(run)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        summary = run_command(args)
    except (ConfigError, DomainError) as exc:
        print(f"pairsource: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergence, ConvergenceWarning, NoSolutionError, DegenerateDesignError) as exc:
        print(f"pairsource: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, StreamError) as exc:
        print(f"pairsource: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True, default=_jsonable))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
