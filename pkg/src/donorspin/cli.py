"""Batch command-line front end.

Each subcommand resolves its parameters from built-in defaults, then an
optional ``--config`` file, then command-line flags (flags win). The
resolved parameters are echoed in the provenance header of every output.

Exit status: 0 success, 2 usage error, 3 input/ingestion error, 4 numeric
failure.
"""

import argparse
import hashlib
import os
import sys
import warnings

import numpy as np

from . import diffusion as dif
from . import io
from ._version import __version__
from .errors import DonorSpinError, IngestionError, NumericError, UsageError
from .linewidth import LINEAR, QUADRATURE, CTPairBranch, fit_linewidth_model, strain_from_deltaA
from .lockin import SpectrumConfig, simulate_spectrum
from .specfit import assign_transitions, expected_resonances, fit_peaks, subtract_background
from .spin import PRESETS
from .transitions import DEFAULT_THRESHOLD, DegenerateLevelWarning, field_grid, find_clock_transitions, sweep, transition_table

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INGESTION = 3
EXIT_NUMERIC = 4

# name: (parser, default, help). A default of None means optional;
# REQUIRED marks parameters that must come from the config or a flag.
REQUIRED = object()


def _opt_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


def _str(text):
    return str(text).strip()


def _opt_str(text):
    return None if str(text).strip().lower() in ("", "none") else str(text).strip()


SYSTEM_OPTIONS = {
    "system": (_str, "As75", "preset species (" + ", ".join(PRESETS) + ") or a system definition file"),
    "name": (_opt_str, None, "override species label"),
    "S": (_opt_str, None, "override electron spin, e.g. 1/2"),
    "I": (_opt_str, None, "override nuclear spin, e.g. 3/2"),
    "A_MHz": (_opt_float, None, "override hyperfine constant, MHz"),
    "g_e": (_opt_float, None, "override electron g-factor"),
    "g_n": (_opt_float, None, "override nuclear g-factor"),
}

SPECTRUM_OPTIONS = {
    "rf": (float, REQUIRED, "RF carrier frequency, MHz"),
    "B_min": (float, 0.0, "sweep start, mT"),
    "B_max": (float, 5.0, "sweep end, mT"),
    "step": (float, 0.002, "sweep step, mT"),
    "mode": (_str, "FM", "modulation scheme, FM or BM"),
    "mod_amplitude": (float, 0.5, "modulation amplitude, MHz (FM) or mT (BM)"),
    "gamma": (float, 1.0, "Lorentzian HWHM, MHz"),
    "harmonic": (int, 1, "demodulation harmonic"),
    "threshold": (float, DEFAULT_THRESHOLD, "minimum strength of an allowed transition"),
    "n_samples": (int, 256, "samples per modulation period"),
    "cutoff": (_opt_float, 10.0, "drop transitions detuned by more than cutoff*gamma"),
    "exact_bm": (io.parse_bool, False, "re-diagonalize at each BM sample"),
    "components": (io.parse_bool, False, "add one column per transition"),
    "noise": (float, 0.0, "standard deviation of added Gaussian noise"),
    "seed": (int, 0, "random seed for the noise"),
}

COMMANDS = {
    "breit-rabi": {
        **SYSTEM_OPTIONS,
        "B_min": (float, 0.0, "sweep start, mT"),
        "B_max": (float, 10.0, "sweep end, mT"),
        "step": (float, 0.01, "sweep step, mT"),
        "tracked": (io.parse_bool, False, "order columns by adiabatic state instead of energy"),
    },
    "transitions": {
        **SYSTEM_OPTIONS,
        "B_min": (float, 0.0, "sweep start, mT"),
        "B_max": (float, 10.0, "sweep end, mT"),
        "step": (float, 0.1, "sweep step, mT"),
        "threshold": (float, DEFAULT_THRESHOLD, "minimum strength of an allowed transition"),
        "allowed_only": (io.parse_bool, False, "emit allowed transitions only"),
    },
    "ct-find": {
        **SYSTEM_OPTIONS,
        "B_min": (float, 0.5, "search start, mT"),
        "B_max": (float, 10.0, "search end, mT"),
        "step": (float, 0.01, "scan step, mT"),
        "threshold": (float, DEFAULT_THRESHOLD, "minimum strength of an allowed transition"),
    },
    "spectrum": {**SYSTEM_OPTIONS, **SPECTRUM_OPTIONS},
    "fit-spectrum": {
        **SYSTEM_OPTIONS,
        "input": (_str, REQUIRED, "CSV with columns B0_mT and signal"),
        "rf": (float, REQUIRED, "RF carrier frequency, MHz"),
        "gamma": (float, 1.0, "expected Lorentzian HWHM, MHz (seeds widths and exclusion windows)"),
        "n_peaks": (int, 0, "number of peaks; 0 uses the expected resonances"),
        "background": (io.parse_bool, True, "subtract a spline background first"),
        "exclude": (_str, "", "manual exclusion windows 'lo:hi, lo:hi' in mT"),
        "exclude_widths": (float, 8.0, "half width of automatic exclusion windows, in linewidths"),
        "smoothing": (_opt_float, None, "smoothing-spline parameter; none interpolates"),
        "fit_skew": (io.parse_bool, True, "fit lineshape asymmetry"),
        "window": (float, 0.3, "assignment window, mT"),
        "near_miss": (_opt_float, None, "also match turning points within this many MHz of the carrier"),
        "threshold": (float, DEFAULT_THRESHOLD, "minimum strength of an allowed transition"),
    },
    "fit-linewidth": {
        **SYSTEM_OPTIONS,
        "input": (_str, REQUIRED, "CSV with columns B0_mT, dBpp_mT, sigma_mT"),
        "transition": (_str, "ct-pair", "'ct-pair' or a level pair like '2,5'"),
        "combine": (_str, LINEAR, "linear or quadrature"),
        "delta_f_mod": (float, 0.5, "FM amplitude, MHz"),
        "kappa": (_opt_float, None, "strain coupling for the strain estimate"),
        "fix_delta_B0": (_opt_float, None, "hold the static term at this value (mT) and fit delta_A only"),
    },
    "diffuse": {
        "D0": (float, REQUIRED, "diffusivity prefactor, cm^2/s"),
        "Ea": (float, REQUIRED, "activation energy, eV"),
        "budget": (_str, REQUIRED, "thermal budget 'T_C duration_s [label]; ...'"),
        "input": (_str, "", "initial profile CSV with columns x_nm, C_cm3"),
        "length": (float, 200.0, "domain length, nm (no input profile)"),
        "dx": (float, 0.5, "grid spacing, nm (no input profile)"),
        "initial_concentration": (float, 0.0, "uniform initial concentration, cm^-3"),
        "left_bc": (_str, dif.SOURCE, "source or zero-flux"),
        "right_bc": (_str, dif.ZERO_FLUX, "zero-flux or fixed"),
        "source_concentration": (float, 1e20, "source concentration, cm^-3"),
        "max_ratio": (float, 1.0, "upper bound on D dt / dx^2"),
        "threshold": (float, 7.8e18, "metal-insulator transition threshold, cm^-3"),
        "marker_depth": (_opt_float, None, "reference marker depth, nm"),
        "marker_concentration": (_opt_float, None, "reference marker concentration, cm^-3"),
        "marker_label": (_str, "P implant", "reference marker label"),
    },
}


# --------------------------------------------------------------------------
# Parameter resolution


def _convert(name, parser, value):
    try:
        return parser(value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad value for {name}: {value!r}") from exc


def resolve_config(command, config_path=None, overrides=None):
    """Defaults < config file < flag overrides, converted to their types."""
    options = COMMANDS[command]
    raw = {}
    if config_path:
        shared, specific = io.load_config(config_path, command)
        unknown = sorted(set(specific) - set(options))
        if unknown:
            raise UsageError(f"unknown key(s) in [{command}]: {', '.join(unknown)}")
        # The shared block may hold keys meant for other commands.
        raw.update({k: v for k, v in shared.items() if k in options})
        raw.update(specific)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    cfg = {}
    for name, (parser, default, _) in options.items():
        if name in raw:
            cfg[name] = _convert(name, parser, raw[name])
        elif default is REQUIRED:
            raise UsageError(f"missing required parameter {name!r} (flag --{name.replace('_', '-')} or config key)")
        else:
            cfg[name] = default
    return cfg


def build_system(cfg):
    name = cfg["system"]
    if name in PRESETS:
        base = PRESETS[name]
    elif os.path.isfile(name):
        base = io.load_system(name)
    else:
        raise UsageError(f"unknown system {name!r}; choose from {', '.join(PRESETS)} or give a definition file")
    return io.system_from_mapping({k: cfg.get(k) for k in io.SYSTEM_KEYS}, base=base)


def _input_digest(path):
    if not path:
        return None
    if not os.path.isfile(path):
        raise IngestionError(f"input file not found: {path}")
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _echo(cfg, system=None):
    out = dict(cfg)
    if system is not None:
        out["resolved_system"] = system.to_dict()
    if cfg.get("input"):
        out["input_sha256"] = _input_digest(cfg["input"])
    return out


def _check_range(cfg):
    if not cfg["B_max"] > cfg["B_min"]:
        raise UsageError(f"field range must have B_max > B_min, got [{cfg['B_min']}, {cfg['B_max']}]")
    if cfg["B_min"] < 0:
        raise UsageError("B_min must be >= 0")


# --------------------------------------------------------------------------
# Commands. Each returns (columns, rows, comments, payload, echo).


def cmd_breit_rabi(cfg):
    system = build_system(cfg)
    _check_range(cfg)
    table = sweep(system, cfg["B_min"], cfg["B_max"], cfg["step"])
    E = table.tracked_energies if cfg["tracked"] else table.energies
    columns = ["B0_mT"] + [f"E_{k}" for k in range(1, system.dim + 1)]
    rows = [[B, *e] for B, e in zip(table.B_grid, E)]
    payload = {"B0_mT": table.B_grid, "energies_MHz": E}
    return columns, rows, [], payload, _echo(cfg, system)


def cmd_transitions(cfg):
    system = build_system(cfg)
    _check_range(cfg)
    grid = field_grid(cfg["B_min"], cfg["B_max"], cfg["step"])
    columns = ["B0_mT", "i", "j", "f_MHz", "strength", "dfdB_MHz_per_mT", "dfdA", "allowed", "degenerate"]
    rows = []
    with warnings.catch_warnings():
        # Degenerate levels are flagged per row instead.
        warnings.simplefilter("ignore", DegenerateLevelWarning)
        for B in grid:
            for t in transition_table(system, B, threshold=cfg["threshold"]):
                if t.allowed or not cfg["allowed_only"]:
                    rows.append([B, t.i, t.j, t.f, t.strength, t.dfdB, t.dfdA, t.allowed, t.degenerate])
    payload = {"columns": columns, "rows": rows}
    return columns, rows, [], payload, _echo(cfg, system)


def cmd_ct_find(cfg):
    system = build_system(cfg)
    cts = find_clock_transitions(
        system, B_min=cfg["B_min"], B_max=cfg["B_max"], step=cfg["step"], threshold=cfg["threshold"]
    )
    columns = ["i", "j", "B_star_mT", "f_star_MHz", "curvature", "strength"]
    rows = [[c.i, c.j, c.B_star, c.f_star, c.curvature, c.strength] for c in cts]
    payload = {
        "clock_transitions": [
            {
                "i": c.i,
                "j": c.j,
                "B_star_mT": c.B_star,
                "f_star_MHz": c.f_star,
                "curvature_MHz_per_mT2": c.curvature,
                "strength": c.strength,
            }
            for c in cts
        ]
    }
    return columns, rows, [f"clock transitions found: {len(cts)}"], payload, _echo(cfg, system)


def cmd_spectrum(cfg):
    system = build_system(cfg)
    _check_range(cfg)
    grid = field_grid(cfg["B_min"], cfg["B_max"], cfg["step"])
    sc = SpectrumConfig(
        rf_freq=cfg["rf"],
        B_grid=grid,
        mode=cfg["mode"],
        mod_amplitude=cfg["mod_amplitude"],
        gamma=cfg["gamma"],
        harmonic=cfg["harmonic"],
        strength_threshold=cfg["threshold"],
        n_samples=cfg["n_samples"],
        cutoff=cfg["cutoff"],
        exact_bm=cfg["exact_bm"],
    )
    sim = simulate_spectrum(system, sc, keep_components=cfg["components"])
    signal = sim.signal
    if cfg["noise"] < 0:
        raise UsageError("noise must be >= 0")
    if cfg["noise"] > 0:
        rng = np.random.default_rng(cfg["seed"])
        signal = signal + rng.normal(0.0, cfg["noise"], len(signal))
    pairs = sorted(sim.components)
    columns = ["B0_mT", "signal"] + [f"T_{i}_{j}" for i, j in pairs]
    comp = [sim.components[p] for p in pairs]
    rows = [[B, s, *(c[k] for c in comp)] for k, (B, s) in enumerate(zip(grid, signal))]
    payload = {
        "B0_mT": grid,
        "signal": signal,
        "components": {f"{i},{j}": sim.components[(i, j)] for i, j in pairs},
        "spectrum_config": sc.to_dict(),
    }
    return columns, rows, [], payload, _echo(cfg, system)


def analyze_spectrum(B, signal, system, cfg):
    """Background removal, peak fit and assignment for one field sweep."""
    span = B[-1] - B[0]
    expected = expected_resonances(system, cfg["rf"], B[0], B[-1], cfg["gamma"], cfg["threshold"])
    expected = [(p, b, min(w, span / 4)) for p, b, w in expected]
    n_peaks = cfg["n_peaks"] or len(expected)
    if n_peaks == 0:
        raise UsageError("no expected resonances in the trace range; set n_peaks explicitly")
    baseline = np.zeros_like(signal)
    corrected = signal
    if cfg["background"]:
        windows = io.parse_windows(cfg["exclude"]) if cfg["exclude"] else [
            (b - cfg["exclude_widths"] * w, b + cfg["exclude_widths"] * w) for _, b, w in expected
        ]
        corrected, baseline = subtract_background(B, signal, windows, smoothing=cfg["smoothing"])
    guesses = [(b, w) for _, b, w in expected] if n_peaks == len(expected) else None
    result = fit_peaks(B, corrected, n_peaks, guesses=guesses, fit_skew=cfg["fit_skew"])
    assignments = assign_transitions(
        result, system, cfg["rf"], window=cfg["window"], threshold=cfg["threshold"], near_miss=cfg["near_miss"]
    )
    return result, assignments, corrected, baseline


def cmd_fit_spectrum(cfg):
    system = build_system(cfg)
    echo = _echo(cfg, system)
    columns_in, data, _ = io.read_csv(cfg["input"])
    B, y = io.require_columns(cfg["input"], columns_in, data, ["B0_mT", "signal"])
    order = np.argsort(B)
    B, y = B[order], y[order]
    result, assignments, _, _ = analyze_spectrum(B, y, system, cfg)
    columns = [
        "peak", "center_mT", "center_err_mT", "gamma_mT", "delta_B_pp_mT", "amplitude",
        "skew", "phase_sign", "i", "j", "B_resonance_mT", "distance_mT",
    ]
    rows = []
    for k, (pk, u, a) in enumerate(zip(result.peaks, result.uncertainties, assignments)):
        i, j = a.transition if a.assigned else (0, 0)
        rows.append([
            k, pk.center, u["center"], pk.gamma, pk.delta_B_pp, pk.amplitude,
            pk.skew, pk.phase_sign, i, j, a.B_resonance, a.distance,
        ])
    payload = result.to_dict()
    payload["assignments"] = [
        {"peak": a.peak_index, "transition": list(a.transition) if a.assigned else None,
         "B_resonance_mT": a.B_resonance, "distance_mT": a.distance}
        for a in assignments
    ]
    comments = [f"converged={result.converged} rms_residual={result.rms_residual:.6g} r_squared={result.r_squared:.6g}"]
    comments += [f"warning: {w}" for w in result.warnings]
    return columns, rows, comments, payload, echo


def cmd_fit_linewidth(cfg):
    system = build_system(cfg)
    echo = _echo(cfg, system)
    columns_in, data, _ = io.read_csv(cfg["input"])
    cols = io.require_columns(cfg["input"], columns_in, data, ["B0_mT", "dBpp_mT", "sigma_mT"])
    if cfg["combine"] not in (LINEAR, QUADRATURE):
        raise UsageError(f"combine must be {LINEAR} or {QUADRATURE}")
    if cfg["transition"] == "ct-pair":
        transition = CTPairBranch(system)
        echo["ct_pair_split_mT"] = transition.split
    else:
        transition = io.parse_pair(cfg["transition"])
    fit = fit_linewidth_model(
        np.column_stack(cols), system, transition, combine=cfg["combine"], delta_f_mod=cfg["delta_f_mod"],
        fix_delta_B0=cfg["fix_delta_B0"],
    )
    strain = strain_from_deltaA(fit.delta_A, system.A, cfg["kappa"]) if cfg["kappa"] else float("nan")
    columns = [
        "delta_B0_mT", "delta_B0_err_mT", "delta_A_MHz", "delta_A_err_MHz",
        "residual_norm", "converged", "strain",
    ]
    rows = [[fit.delta_B0, fit.delta_B0_err, fit.delta_A, fit.delta_A_err, fit.residual_norm, fit.converged, strain]]
    payload = fit.to_dict()
    payload["strain"] = strain
    comments = [f"message: {fit.message}"]
    if "mean_offset" in fit.extra:
        comments.append(f"mean_offset_mT={fit.extra['mean_offset']:.6g}")
    return columns, rows, comments, payload, echo


def _initial_profile(cfg):
    kw = dict(left_bc=cfg["left_bc"], right_bc=cfg["right_bc"])
    if cfg["left_bc"] == dif.SOURCE:
        kw["source_concentration"] = cfg["source_concentration"]
    if cfg["input"]:
        columns, data, _ = io.read_csv(cfg["input"])
        x, c = io.require_columns(cfg["input"], columns, data, ["x_nm", "C_cm3"])
        return dif.ConcentrationProfile(x, c, **kw)
    if not (cfg["length"] > 0 and cfg["dx"] > 0):
        raise UsageError("length and dx must be positive")
    return dif.ConcentrationProfile.uniform(cfg["length"], cfg["dx"], cfg["initial_concentration"], **kw)


def cmd_diffuse(cfg):
    echo = _echo(cfg)
    model = dif.DiffusivityModel(cfg["D0"], cfg["Ea"])
    marker = None
    if cfg["marker_depth"] is not None or cfg["marker_concentration"] is not None:
        if cfg["marker_depth"] is None or cfg["marker_concentration"] is None:
            raise UsageError("a marker needs both marker_depth and marker_concentration")
        marker = dif.reference_marker(cfg["marker_depth"], cfg["marker_concentration"], cfg["marker_label"])
    steps = [dif.ThermalStep.from_celsius(T, t, label) for T, t, label in io.parse_budget(cfg["budget"])]
    profile = _initial_profile(cfg)
    final = dif.diffuse(profile, steps, model, max_ratio=cfg["max_ratio"])
    crossing = dif.mit_crossing(final, cfg["threshold"])
    comments = [
        f"mit_threshold_cm3={cfg['threshold']:g}",
        f"mit_crossing_nm={'none' if crossing is None else format(crossing, '.6g')}",
        f"diffusion_length_nm={dif.diffusion_length(model, steps):.6g}",
        f"dose_initial={profile.dose():.10g} dose_final={final.dose():.10g}",
    ]
    if marker is not None:
        comments.append(marker.header_line())
    columns = ["x_nm", "C_cm3"]
    rows = [[x, c] for x, c in zip(final.x, final.concentration)]
    payload = {
        "x_nm": final.x,
        "C_cm3": final.concentration,
        "mit_crossing_nm": crossing,
        "steps": [{"T_K": s.temperature, "duration_s": s.duration, "label": s.label} for s in steps],
        "marker": None if marker is None else vars(marker),
    }
    return columns, rows, comments, payload, echo


HANDLERS = {
    "breit-rabi": cmd_breit_rabi,
    "transitions": cmd_transitions,
    "ct-find": cmd_ct_find,
    "spectrum": cmd_spectrum,
    "fit-spectrum": cmd_fit_spectrum,
    "fit-linewidth": cmd_fit_linewidth,
    "diffuse": cmd_diffuse,
}


# --------------------------------------------------------------------------
# Entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="donorspin", description="Donor spin simulation and analysis toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, options in COMMANDS.items():
        p = sub.add_parser(name, help=HANDLERS[name].__name__.replace("cmd_", "").replace("_", " "))
        p.add_argument("--config", help="key = value config file")
        p.add_argument("-o", "--output", default="-", help="CSV output path (default: stdout)")
        p.add_argument("--json", dest="json_path", help="also write a JSON report here")
        for key, (_, default, text) in options.items():
            shown = "required" if default is REQUIRED else f"default: {default}"
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=f"{text} ({shown})")
    return parser


def run(command, cfg, output="-", json_path=None):
    """Execute ``command`` with a resolved configuration and write outputs."""
    columns, rows, comments, payload, echo = HANDLERS[command](cfg)
    io.write_text(output, io.csv_text(columns, rows, command, echo, comments))
    if json_path:
        io.write_text(json_path, io.json_text(payload, command, echo))
    return payload


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: getattr(args, k) for k in COMMANDS[args.command]}
    try:
        cfg = resolve_config(args.command, args.config, overrides)
        run(args.command, cfg, args.output, args.json_path)
    except UsageError as exc:
        print(f"donorspin {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IngestionError as exc:
        print(f"donorspin {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INGESTION
    except (NumericError, DonorSpinError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"donorspin {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
