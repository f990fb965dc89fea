"""Command-line runner: ``hnlab <subcommand> [--config FILE] [overrides]``.

Every subcommand writes its data files, figures and a ``manifest.json`` with
content digests into the output directory. Figures come as a hand-written
SVG, a matplotlib PNG and the CSV of exactly the plotted data.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import textwrap
from typing import Optional

import numpy as np

from . import lyapunov as ly
from . import plotting
from . import spectral_flow as sf
from . import statistics as st
from .config import COMMANDS, OUTPUT_ENV, ConfigError, ExperimentConfig, load_config
from .manifest import RunManifest, dumps
from .model import ModelError, PotentialSpec, build_matrix, fixed_potential, sample_potential
from .svg import Layer, PlotSpec, emit_svg
from .transfer import TransferError, band_structure, char_trace_csv
from .verify import Battery

FIGURE1_BACKGROUND = (0.0, 2.0)
# weak disorder so that g = 0.08 lies strictly between min and max of gamma on the real axis
FIGURE1_POTENTIAL = {"kind": "uniform", "lo": -0.5, "hi": 0.5}
FIGURE1_REGION = [-2.0, 4.0, -0.12, 0.12]

CSV_HELP = {
    "spectrum": """
        spectrum.csv      j, re, im, is_real, residual   (eigenvalues of H_N(g))
        spectrum.json     the same values plus g, N, potential and seed
        potential.csv     j, v
        spectrum.svg/png  complex plane plot; spectrum_plot.csv holds its points""",
    "flow": """
        flow.csv          j, g, re, im, is_real   (label j tracked over the g grid)
        flow.svg/png      real segments of each trajectory; flow_plot.csv holds j, E, g""",
    "bands": """
        bands.csv         kind (band|gap), index, left, right
        discriminant.csv  E, trace, char   (tr Phi_N(E) and tr Phi_N(E) - 2cosh(Ng))
        bands.svg/png     tr Phi_N(E) against E; bands_plot.csv holds E, trace_clipped""",
    "lyapunov": """
        profile.csv       E, gamma, stderr   (Monte-Carlo Lyapunov exponent)
        holder.json       fitted Holder constant and exponent of the profile
        profile.svg/png   gamma against E; profile_plot.csv holds E, gamma""",
    "curve": """
        field.csv         re, im, gamma, stderr   (gamma on the complex grid)
        curve.csv         polyline, point, re, im   (level set gamma = g)
        curve.svg/png     level set in the complex plane; curve_plot.csv holds polyline, re, im""",
    "theorem": """
        profile.csv       E, gamma, stderr
        reports.json      per-seed violations, thresholds and maximal deviations
        decay.csv         N, mean_neg_log_deviation   (input of the decay-constant fit)
        decay.json        fitted c with standard error and 95% interval""",
    "stats-poisson": """
        spacings_g0.csv, spacings_g1.csv   spacing   (rescaled nearest-neighbour spacings)
        ks.json           KS statistic, critical value and count per g
        spacings.svg/png  empirical CDFs against 1 - exp(-x); spacings_plot.csv holds g, x, cdf""",
    "stats-ldp": """
        ldp.csv           N, p_hat, count, n_reps
        ldp.json          slope, below-resolution sizes, monotonicity
        ldp.svg/png       log p_hat against N; ldp_plot.csv holds N, log_p_hat""",
    "stats-radius": """
        cdf.csv           delta, cdf   (P{rho <= delta ||Phi||})
        radius.json       fitted B, b and the rho <= ||Phi|| check
        cdf.svg/png       log cdf against log delta; cdf_plot.csv holds log_delta, log_cdf""",
    "stats-gaps": """
        min_gaps.csv      N, seed_index, min_gap, degenerate
        min_gaps.json     fitted exponent K and positivity check
        min_gaps.svg/png  log min gap against log N; min_gaps_plot.csv holds log_N, log_min_gap""",
    "stats-vconv": """
        vconv.csv         N, mean_distance, stderr
        vconv.json        fitted rate and monotonicity
        vconv.svg/png     log mean distance against N; vconv_plot.csv holds N, log_mean_distance""",
    "figure1": """
        figure1.csv       re, im, is_real   (eigenvalues)
        curve.csv         polyline, point, re, im   (level set gamma = g)
        field.csv         re, im, gamma, stderr   (grid the level set is extracted from)
        figure1.svg/png   spectrum with the level-set overlay; figure1_plot.csv holds layer, x, y""",
    "figure2": """
        flow.csv          j, g, re, im, is_real
        profile.csv       E, gamma, stderr
        figure2.svg/png   real eigenvalue curves and the gamma envelope; figure2_plot.csv holds layer, x, y""",
    "verify-all": """
        summary.json      pass/fail and details per acceptance criterion
        cNN_*/            raw data of each criterion
        manifest.json     digests of every file and the wall-clock time""",
}

DESCRIPTIONS = {
    "spectrum": "Complex spectrum of one realisation of H_N(g) from the dense solver.",
    "flow": "Track every eigenvalue from g=0 up to g_max.",
    "bands": "Band/gap structure of the Hermitian ring and the discriminant on a grid.",
    "lyapunov": "Monte-Carlo Lyapunov exponent profile on E_range.",
    "curve": "Level set gamma(z) = g of the Lyapunov exponent in a complex region.",
    "theorem": "Check that eigenvalues stay real below the Lyapunov threshold, over n_seeds seeds.",
    "stats-poisson": "Rescaled level spacings near E and a KS test against Exp(1).",
    "stats-ldp": "Large-deviation probabilities of (1/N) log ||Phi_N(E)|| over N_list.",
    "stats-radius": "Distribution of rho(Phi_N)/||Phi_N|| at energy E.",
    "stats-gaps": "Minimal Hermitian level spacing over N_list.",
    "stats-vconv": "Convergence of the right singular factor V_N over N_list.",
    "figure1": "Spectrum of H_N(g) with the level-set overlay, on a 2-periodic background.",
    "figure2": "Real eigenvalue curves (lambda_j(g), g) with the gamma envelope.",
    "verify-all": "Run the full acceptance battery; exit status 1 if any criterion fails.",
}

# flag name -> (config key, type, help)
FLAGS = [
    ("--N", "N", int, "matrix size"),
    ("--N-list", "N_list", "ints", "comma-separated sizes"),
    ("--g", "g", float, "non-Hermiticity parameter"),
    ("--g-max", "g_max", float, "end of the g range for flows"),
    ("--E", "E", float, "energy"),
    ("--E-range", "E_range", "floats", "lo,hi of the energy grid"),
    ("--E-points", "E_points", int, "points in the energy grid"),
    ("--region", "region", "floats", "x0,x1,y0,y1 of the complex grid"),
    ("--resolution", "resolution", "ints", "nx,ny of the complex grid"),
    ("--epsilon", "epsilon", float, "margin below the Lyapunov threshold"),
    ("--c-edge", "c_edge", float, "edge window exponent"),
    ("--seed", "seed", int, "base seed"),
    ("--n-seeds", "n_seeds", int, "number of realisations"),
    ("--n-steps", "n_steps", int, "Monte-Carlo product length"),
    ("--n-reps", "n_reps", int, "Monte-Carlo repetitions"),
    ("--window", "window", float, "half-width of the spacing window"),
    ("--delta-points", "delta_points", int, "points of the delta grid"),
    ("--initial-step", "initial_step", float, "first g step of the tracker"),
    ("--scale", "scale", str, "full or quick (verify-all sizes)"),
    ("--tau-re", "thresholds.tau_re", float, "reality threshold on |Im lambda|"),
]


def _parse_list(kind):
    conv = int if kind == "ints" else float

    def parse(text: str):
        try:
            return [conv(x) for x in text.split(",") if x.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hnlab", description="Numerical laboratory for the periodic "
                                     "non-Hermitian Anderson model H_N(g).")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=DESCRIPTIONS[name], description=DESCRIPTIONS[name],
                           formatter_class=argparse.RawDescriptionHelpFormatter,
                           epilog="output files:\n" + textwrap.dedent(CSV_HELP[name]).strip("\n"))
        p.add_argument("--config", help="JSON configuration file; flags override its values")
        p.add_argument("--output-dir", "-o", help=f"output directory (default: ${OUTPUT_ENV} or ./hnlab-out)")
        p.add_argument("--potential", help='JSON object, e.g. \'{"kind": "uniform", "lo": 0, "hi": 4}\'')
        for flag, key, typ, text in FLAGS:
            conv = _parse_list(typ) if typ in ("ints", "floats") else typ
            p.add_argument(flag, dest=key.replace(".", "__"), type=conv, help=text)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    base = load_config(args.config) if args.config else ExperimentConfig(command=args.command)
    overrides = {"command": args.command, "output_dir": args.output_dir}
    if args.potential:
        try:
            overrides["potential"] = json.loads(args.potential)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--potential is not valid JSON ({exc})", "potential") from exc
    for _, key, _, _ in FLAGS:
        overrides[key] = getattr(args, key.replace(".", "__"))
    return base.with_overrides(overrides)


# ---------------------------------------------------------------------------
# figure helpers


def _figure(man: RunManifest, stem: str, plot: PlotSpec, png: bytes, plot_csv: str):
    man.write(f"{stem}.svg", emit_svg(plot))
    man.write(f"{stem}.png", png)
    man.write(f"{stem}_plot.csv", plot_csv)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(x if isinstance(x, str) else repr(float(x)) if isinstance(x, float) else str(x)
                              for x in r))
    return "\n".join(lines) + "\n"


def _layer_csv(layers) -> str:
    rows = [(lay.label, float(x), float(y)) for lay in layers for x, y in zip(lay.x, lay.y)]
    return _csv(["layer", "x", "y"], rows)


def _potential(cfg: ExperimentConfig, index: int = 0, spec: Optional[PotentialSpec] = None):
    return sample_potential(spec or cfg.spec, cfg.N, cfg.seed, index)


def _profile(cfg: ExperimentConfig, spec: Optional[PotentialSpec] = None) -> ly.LyapunovProfile:
    lo, hi = cfg.E_range
    return ly.gamma_profile(spec or cfg.spec, np.linspace(lo, hi, cfg.E_points), cfg.n_steps, cfg.n_reps, cfg.seed)


def _g_top(cfg: ExperimentConfig, profile: ly.LyapunovProfile) -> float:
    return cfg.g_max if cfg.g_max is not None else float(profile.value.max()) - cfg.epsilon


def _curve_csv(curve: ly.SpectralCurve) -> str:
    return curve.to_csv()


# ---------------------------------------------------------------------------
# subcommands


def cmd_spectrum(cfg, man):
    pv = _potential(cfg)
    spec = sf.full_spectrum(build_matrix(pv, cfg.g))
    part = sf.classify_real(spec, cfg.thresholds.tau_re, cfg.thresholds.pair_tol)
    real = part.is_real(spec.n)
    lam = spec.values
    man.write("potential.csv", pv.to_csv())
    man.write("spectrum.csv", _csv(["j", "re", "im", "is_real", "residual"],
                                   ((j, float(z.real), float(z.imag), int(r), float(res))
                                    for j, (z, r, res) in enumerate(zip(lam, real, spec.residuals)))))
    man.write_json("spectrum.json", {"N": pv.n, "g": cfg.g, "seed": cfg.seed, "potential": cfg.potential,
                                     "eigenvalues": [[float(z.real), float(z.imag)] for z in lam],
                                     "is_real": real.tolist(), "ambiguous": part.ambiguous})
    layers = [Layer("scatter", lam.real[~real], lam.imag[~real], "non-real", "#1f77b4"),
              Layer("scatter", lam.real[real], lam.imag[real], "real", "#d62728")]
    _figure(man, "spectrum", PlotSpec(layers, "Re z", "Im z", f"N={pv.n}, g={cfg.g}"),
            plotting.complex_spectrum_png(lam, None, f"N={pv.n}, g={cfg.g}", real), _layer_csv(layers))
    return 0


def _flow_layers(flow: sf.SpectralFlow, profile=None) -> list:
    layers = []
    for j in range(flow.n):
        mask = flow.is_real[:, j]
        # one polyline per maximal run of real values
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            continue
        runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
        for k, run in enumerate(runs):
            layers.append(Layer("polyline", flow.trajectories[run, j].real, flow.g_grid[run],
                                f"lambda_{j + 1}" + (f"#{k}" if k else ""), "#1f77b4", 0.8))
    if profile is not None:
        layers.append(Layer("polyline", profile.grid, profile.value, "gamma", "#d62728", 1.5))
    return layers


def cmd_flow(cfg, man):
    pv = _potential(cfg)
    g_max = cfg.g_max if cfg.g_max is not None else 1.0
    flow = sf.track_flow(pv, g_max, cfg.initial_step, tau=cfg.thresholds.tau_re)
    man.write("potential.csv", pv.to_csv())
    man.write("flow.csv", flow.to_csv())
    layers = _flow_layers(flow)
    _figure(man, "flow", PlotSpec(layers, "E", "g", f"N={pv.n}", ylim=(0.0, g_max * 1.05)),
            plotting.flow_png(flow, None, f"N={pv.n}"), _layer_csv(layers))
    return 0


def cmd_bands(cfg, man):
    pv = _potential(cfg)
    bs = band_structure(pv)
    man.write("potential.csv", pv.to_csv())
    man.write("bands.csv", bs.to_csv())
    lo, hi = cfg.E_range
    E = np.linspace(lo, hi, max(cfg.E_points, 20 * pv.n))
    man.write("discriminant.csv", char_trace_csv(pv, cfg.g, E))
    from .transfer import _products_1d
    p = _products_1d(pv.values, E)
    with np.errstate(over="ignore"):
        tr = np.clip(p.trace * np.exp(np.minimum(p.log_scale, 700.0)), -4.0, 4.0)
    layers = [Layer("polyline", E, tr, "trace", "#1f77b4", 1.0),
              Layer("polyline", [lo, hi], [2.0, 2.0], "+2", "#7f7f7f", 0.5),
              Layer("polyline", [lo, hi], [-2.0, -2.0], "-2", "#7f7f7f", 0.5)]
    _figure(man, "bands", PlotSpec(layers, "E", "tr Phi_N(E) (clipped to [-4, 4])", f"N={pv.n}"),
            plotting.xy_png(E, tr, "E", "tr Phi_N(E)", f"N={pv.n}", style="-"),
            _csv(["E", "trace_clipped"], zip(E.tolist(), tr.tolist())))
    return 0


def cmd_lyapunov(cfg, man):
    prof = _profile(cfg)
    man.write("profile.csv", prof.to_csv())
    if prof.grid.size >= 50:
        h = st.holder_check(prof)
        man.write_json("holder.json", {"C": h.C, "alpha": h.alpha, "feasible": h.feasible,
                                       "max_violation": h.max_violation, "pairs": h.n_pairs})
    layers = [Layer("polyline", prof.grid, prof.value, "gamma", "#1f77b4", 1.2)]
    _figure(man, "profile", PlotSpec(layers, "E", "gamma"), plotting.profile_png(prof),
            _csv(["E", "gamma"], zip(prof.grid.tolist(), prof.value.tolist())))
    return 0


def _curve(cfg, spec, g):
    fld = ly.gamma_complex_grid(spec, tuple(cfg.region), tuple(cfg.resolution), min(cfg.n_steps, 10_000),
                                min(cfg.n_reps, 8), cfg.seed)
    return fld, ly.extract_curve(fld, g)


def _curve_layers(curve) -> list:
    return [Layer("polyline", line.real, line.imag, f"level#{k}", "#000000", 1.0)
            for k, line in enumerate(curve.polylines)]


def cmd_curve(cfg, man):
    fld, curve = _curve(cfg, cfg.spec, cfg.g)
    man.write("field.csv", fld.to_csv())
    man.write("curve.csv", curve.to_csv())
    for w in curve.warnings:
        print(f"warning: {w}", file=sys.stderr)
    layers = _curve_layers(curve)
    x0, x1, y0, y1 = cfg.region
    _figure(man, "curve", PlotSpec(layers, "Re z", "Im z", f"gamma = {cfg.g}", xlim=(x0, x1), ylim=(y0, y1)),
            plotting.field_png(fld, curve, f"gamma = {cfg.g}"), curve.to_csv())
    return 0


def cmd_theorem(cfg, man):
    prof = _profile(cfg)
    g_top = _g_top(cfg, prof)
    man.write("profile.csv", prof.to_csv())
    reports = []
    for k in range(cfg.n_seeds):
        pv = sample_potential(cfg.spec, cfg.N, cfg.seed, k)
        flow = sf.track_flow(pv, g_top, cfg.initial_step, tau=cfg.thresholds.tau_re)
        reports.append(sf.verify_theorem(flow, prof, cfg.epsilon))
    man.write_json("reports.json", [r.to_dict() for r in reports])
    frac = float(np.mean([r.passed for r in reports]))
    means = []
    for n in cfg.N_list:
        vals = []
        for k in range(cfg.n_seeds):
            pv = sample_potential(cfg.spec, int(n), cfg.seed + 1, k)
            r = sf.verify_theorem(sf.track_flow(pv, g_top, cfg.initial_step, tau=cfg.thresholds.tau_re),
                                  prof, cfg.epsilon)
            if r.n_checks and r.max_deviation > 0:
                vals.append(-math.log(r.max_deviation))
        means.append(float(np.mean(vals)) if vals else float("nan"))
    man.write("decay.csv", _csv(["N", "mean_neg_log_deviation"], zip(cfg.N_list, means)))
    out = {"seed_pass_fraction": frac, "g_max": g_top}
    if len(cfg.N_list) >= 2 and np.all(np.isfinite(means)):
        fit = sf.fit_decay_constant(cfg.N_list, np.exp(-np.asarray(means)))
        out.update(c=fit.c, c_stderr=fit.c_stderr, ci95=list(fit.ci95))
    man.write_json("decay.json", out)
    print(dumps(out), end="")
    return 0


def cmd_stats_poisson(cfg, man):
    spec = cfg.spec
    dos = ly.ids_empirical(spec, cfg.N, cfg.n_seeds, cfg.seed)
    E = cfg.E if cfg.E is not None else dos.peak()
    gam = ly.estimate_gamma_mc(spec, E, cfg.n_steps, cfg.n_reps, cfg.seed).value
    window = cfg.window if cfg.window is not None else 0.1
    out = {"E": E, "gamma": gam, "window": window}
    layers = []
    for tag, g in (("g0", 0.0), ("g1", gam / 2)):
        sample = st.rescaled_gaps(st.EnsembleConfig(spec, cfg.N, cfg.n_seeds, cfg.seed, g), E, dos, window)
        man.write(f"spacings_{tag}.csv", sample.to_csv())
        ks = st.ks_exponential(sample, cfg.thresholds.ks_coefficient)
        out[tag] = {"g": g, "count": ks.count, "ks": ks.statistic, "critical": ks.critical, "passed": ks.passed}
        x = np.sort(sample.spacings)
        layers.append(Layer("polyline", x, np.arange(1, x.size + 1) / x.size, f"g={g:.4g}",
                            "#1f77b4" if tag == "g0" else "#2ca02c", 1.0))
    xs = np.linspace(0, max(float(lay.x.max()) for lay in layers), 200)
    layers.append(Layer("polyline", xs, 1 - np.exp(-xs), "1-exp(-x)", "#d62728", 1.0))
    man.write_json("ks.json", out)
    _figure(man, "spacings", PlotSpec(layers, "s", "CDF", f"E={E:.3f}"),
            plotting.xy_png(xs, 1 - np.exp(-xs), "s", "CDF", f"E={E:.3f}", style="-"), _layer_csv(layers))
    print(dumps(out), end="")
    return 0


def cmd_stats_ldp(cfg, man):
    E = cfg.E if cfg.E is not None else 2.0
    rep = st.ldp_empirics(cfg.spec, E, cfg.N_list, cfg.epsilon, cfg.n_reps, cfg.seed)
    man.write("ldp.csv", rep.to_csv())
    man.write_json("ldp.json", {"E": E, "slope": rep.slope, "decreasing": rep.decreasing,
                                "below_resolution": rep.below_resolution, "gamma_ref": rep.gamma_ref})
    nz = rep.p_hat > 0
    x, y = rep.N[nz].astype(float), np.log(rep.p_hat[nz])
    layers = [Layer("scatter", x, y, "log p_hat", "#1f77b4", 3.0)]
    _figure(man, "ldp", PlotSpec(layers, "N", "log p_hat"), plotting.xy_png(x, y, "N", "log p_hat"),
            _csv(["N", "log_p_hat"], zip(x.tolist(), y.tolist())))
    return 0


def cmd_stats_radius(cfg, man):
    E = cfg.E if cfg.E is not None else 2.0
    delta = np.concatenate([[0.0], np.geomspace(1e-3, 1.0, cfg.delta_points)])
    rep = st.radius_norm_ratio(cfg.spec, E, cfg.N, cfg.n_reps, delta, cfg.seed)
    man.write("cdf.csv", rep.to_csv())
    man.write_json("radius.json", {"E": E, "B": rep.B, "b": rep.b, "radius_le_norm": rep.radius_le_norm,
                                   "monotone": rep.monotone})
    ok = (rep.delta > 0) & (rep.cdf > 0)
    x, y = np.log(rep.delta[ok]), np.log(rep.cdf[ok])
    layers = [Layer("scatter", x, y, "log cdf", "#1f77b4", 3.0)]
    _figure(man, "cdf", PlotSpec(layers, "log delta", "log cdf"), plotting.xy_png(x, y, "log delta", "log cdf"),
            _csv(["log_delta", "log_cdf"], zip(x.tolist(), y.tolist())))
    return 0


def cmd_stats_gaps(cfg, man):
    rep = st.min_spacing_exponent(cfg.spec, cfg.N_list, cfg.n_seeds, cfg.seed)
    man.write("min_gaps.csv", rep.to_csv())
    man.write_json("min_gaps.json", {"K": rep.K_hat, "K_stderr": rep.K_stderr, "all_positive": rep.all_positive})
    with np.errstate(divide="ignore"):
        y = np.nanmean(np.log(rep.min_gaps), axis=1)
    x = np.log(rep.N.astype(float))
    layers = [Layer("scatter", x, y, "mean log min gap", "#1f77b4", 3.0)]
    _figure(man, "min_gaps", PlotSpec(layers, "log N", "log min gap"), plotting.xy_png(x, y, "log N", "log min gap"),
            _csv(["log_N", "log_min_gap"], zip(x.tolist(), y.tolist())))
    return 0


def cmd_stats_vconv(cfg, man):
    E = cfg.E if cfg.E is not None else 2.0
    rep = st.v_convergence(cfg.spec, E, cfg.N_list, cfg.n_reps, cfg.seed)
    man.write("vconv.csv", rep.to_csv())
    man.write_json("vconv.json", {"E": E, "rate": rep.rate, "decreasing": rep.decreasing})
    x, y = rep.N.astype(float), np.log(rep.mean_distance)
    layers = [Layer("scatter", x, y, "log mean distance", "#1f77b4", 3.0)]
    _figure(man, "vconv", PlotSpec(layers, "N", "log mean distance"), plotting.xy_png(x, y, "N", "log mean distance"),
            _csv(["N", "log_mean_distance"], zip(x.tolist(), y.tolist())))
    return 0


def cmd_figure1(cfg, man):
    d = dict(FIGURE1_POTENTIAL if cfg.potential == ExperimentConfig().potential else cfg.potential)
    d.setdefault("background", list(FIGURE1_BACKGROUND))
    spec = PotentialSpec.from_dict(d)
    g = cfg.g if cfg.g else 0.08
    pv = sample_potential(spec, cfg.N, cfg.seed, 0)
    lam = sf.full_spectrum(build_matrix(pv, g), residuals=False).values
    real = sf.classify_real(lam, cfg.thresholds.tau_re, cfg.thresholds.pair_tol).is_real(lam.size)
    if cfg.region == ExperimentConfig().region:
        cfg = cfg.with_overrides({"region": FIGURE1_REGION})
    fld, curve = _curve(cfg, spec, g)
    man.write("potential.csv", pv.to_csv())
    man.write("field.csv", fld.to_csv())
    man.write("figure1.csv", _csv(["re", "im", "is_real"], ((float(z.real), float(z.imag), int(r))
                                                            for z, r in zip(lam, real))))
    man.write("curve.csv", curve.to_csv())
    layers = [Layer("scatter", lam.real[~real], lam.imag[~real], "non-real", "#1f77b4"),
              Layer("scatter", lam.real[real], lam.imag[real], "real", "#d62728")] + _curve_layers(curve)
    title = f"N={pv.n}, g={g}"
    _figure(man, "figure1", PlotSpec(layers, "Re z", "Im z", title),
            plotting.complex_spectrum_png(lam, curve.polylines, title, real), _layer_csv(layers))
    return 0


def cmd_figure2(cfg, man):
    prof = _profile(cfg)
    g_top = _g_top(cfg, prof)
    pv = _potential(cfg)
    flow = sf.track_flow(pv, g_top, cfg.initial_step, tau=cfg.thresholds.tau_re)
    man.write("potential.csv", pv.to_csv())
    man.write("profile.csv", prof.to_csv())
    man.write("flow.csv", flow.to_csv())
    layers = _flow_layers(flow, prof)
    lo, hi = cfg.E_range
    _figure(man, "figure2", PlotSpec(layers, "E", "g", f"N={pv.n}", xlim=(lo, hi), ylim=(0.0, float(prof.value.max()))),
            plotting.flow_png(flow, prof, f"N={pv.n}"), _layer_csv(layers))
    return 0


def cmd_verify_all(cfg, man):
    results = Battery(cfg, man).run()
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    return 1 if failed else 0


HANDLERS = {name: globals()["cmd_" + name.replace("-", "_")] for name in COMMANDS}


def run(cfg: ExperimentConfig) -> tuple[int, RunManifest]:
    """Execute ``cfg.command``; returns the exit status and the finished manifest."""
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(cfg.to_dict(), out, seeds={"seed": cfg.seed})
    man.write("config.json", cfg.to_json())
    status = HANDLERS[cfg.command](cfg, man)
    man.finish()
    return status, man


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, ModelError) as exc:
        key = getattr(exc, "key", None)
        parser.error(f"invalid configuration{f' (key {key!r})' if key else ''}: {exc}")
    try:
        status, _ = run(cfg)
    except (TransferError, sf.FlowError, sf.SpectrumError, ly.LyapunovError, st.StatisticsError) as exc:
        print(f"hnlab {cfg.command}: numerical failure with seed={cfg.seed}, N={cfg.N}: {exc}", file=sys.stderr)
        return 3
    return status


if __name__ == "__main__":
    sys.exit(main())
