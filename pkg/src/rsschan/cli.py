"""Command-line front end: spectra, simulation, sweeps, fitting, recipes.

Every command writes plain CSV plus a JSON manifest describing the resolved
inputs, so deterministic runs can be reproduced byte for byte from the
manifest.  ``rss repro figN`` regenerates the bundled reference scenarios at
desk scale; ``--paper-scale`` escalates sample counts to full size.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .errors import RssError
from .geometry import (
    ModelConfig,
    RssRegion,
    ValidatedConfig,
    VehicleState,
    load_config_file,
    validate_config,
)
from . import analytic_pdf as _apdf
from . import fitting as _fit
from . import montecarlo as _mc
from . import spectrum as _sp

DB_FLOOR = -80.0


@dataclass
class RunManifest:
    """Everything needed to rerun a command."""

    command: str
    arguments: dict
    config: dict
    seed: int
    version: str
    timestamp: str

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def _default_seed() -> int:
    return int(os.environ.get("RSS_SEED", "0"))


def _resolved_config_dict(cfg: ValidatedConfig) -> dict:
    return {k: getattr(cfg, k) for k in (
        "x_t", "y_t", "v_t", "gamma_t", "x_r", "y_r", "v_r", "gamma_r",
        "a1", "b1", "c1", "d1", "a2", "b2", "c2", "d2", "fc", "k_factor")}


def _write_manifest(out_path: str, args: argparse.Namespace, cfg, seed: int) -> str:
    manifest = RunManifest(
        command=args.command,
        arguments={k: v for k, v in vars(args).items() if k not in ("func",)},
        config=_resolved_config_dict(cfg) if cfg is not None else {},
        seed=seed,
        version=__version__,
        timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"),
    )
    path = out_path + ".manifest.json"
    manifest.write(path)
    return os.path.basename(path)


def _write_csv(path: str, header: str, rows, comments=()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def emit_plot_data(curves, out: str, db_scale: bool = False) -> None:
    """Write labelled curves as long-format CSV (series,x,y[,y_db])."""
    header = "series,x,y,y_db" if db_scale else "series,x,y"
    rows = []
    for label, xs, ys in curves:
        for x, y in zip(xs, ys):
            if db_scale:
                ydb = 10.0 * math.log10(y) if y > 0 else DB_FLOOR
                rows.append((label, float(x), float(y), max(ydb, DB_FLOOR)))
            else:
                rows.append((label, float(x), float(y)))
    _write_csv(out, header, rows)


def _load_validated(path: str) -> ValidatedConfig:
    return validate_config(load_config_file(path))


# ---------------------------------------------------------------------------
# bundled reference scenarios


def _scenario(name: str) -> ValidatedConfig:
    v105 = 105.0 / 3.6
    fig8_regions = dict(upper=RssRegion(-263.917, 276.045, 18.364, 26.396),
                        lower=RssRegion(-263.146, 277.483, -23.747, -20.605))
    fig34_regions = dict(upper=RssRegion(-263.917, 276.045, 18.364, 106.396),
                         lower=RssRegion(-263.146, 277.483, -103.747, -20.605))
    table = {
        "fig4": ModelConfig(
            tx=VehicleState(-200.0, -8.75, v105, 0.0),
            rx=VehicleState(200.0, -8.75, v105, 0.0),
            fc=5.9e9, k_factor=0.0, **fig34_regions),
        "fig4-od": ModelConfig(
            tx=VehicleState(-200.0, -8.75, v105, 0.0),
            rx=VehicleState(200.0, -8.75, v105, math.pi),
            fc=5.9e9, k_factor=0.0, **fig34_regions),
        "fig5-sd": ModelConfig(
            tx=VehicleState(-200.0, -8.75, v105, 0.0),
            rx=VehicleState(200.0, -8.75, v105, 0.0),
            fc=5.9e9, k_factor=0.0, **fig8_regions),
        "fig5-od": ModelConfig(
            tx=VehicleState(-200.0, -8.75, v105, 0.0),
            rx=VehicleState(200.0, -8.75, v105, math.pi),
            fc=5.9e9, k_factor=0.0, **fig8_regions),
        "fig6": ModelConfig(
            tx=VehicleState(-200.0, -5.25, v105, 0.0),
            rx=VehicleState(200.0, -1.75, v105, 0.0),
            upper=RssRegion(-300.0, 300.0, 14.0, 19.0),
            lower=RssRegion(-300.0, 300.0, -19.0, -14.0),
            fc=5.9e9, k_factor=0.0),
        "fig7": ModelConfig(
            tx=VehicleState(-30.9, 0.0, 24.2, 0.0),
            rx=VehicleState(30.0, 0.0, 24.7, 0.0),
            upper=RssRegion(-49.0, 46.0, 14.0, 17.0),
            lower=RssRegion(-49.0, 46.0, -17.0, -14.0),
            fc=5.9e9, k_factor=1.715),
        "fig8": ModelConfig(
            tx=VehicleState(-200.0, -8.75, v105, 0.0),
            rx=VehicleState(200.0, -8.75, v105, 0.0),
            fc=5.9e9, k_factor=1.535, **fig8_regions),
        "fig9": ModelConfig(
            tx=VehicleState(-50.0, -1.75, 32.8 / 3.6, 0.0),
            rx=VehicleState(50.0, 1.75, 38.0 / 3.6, math.pi),
            upper=RssRegion(-58.557, 58.753, 8.000, 13.351),
            lower=RssRegion(-58.658, 57.919, -19.114, -8.003),
            fc=5.9e9, k_factor=0.0),
    }
    if name not in table:
        raise RssError(f"unknown scenario {name!r}; choose from {sorted(table)}")
    return validate_config(table[name])


# ---------------------------------------------------------------------------
# subcommands


def _cmd_dpdf(args) -> int:
    cfg = _load_validated(args.config)
    grid, vals = _apdf.dpdf_curve(cfg, n=args.grid, workers=args.threads)
    man = _write_manifest(args.out, args, cfg, _default_seed())
    _write_csv(args.out, "nu_hz,density", zip(grid, vals), comments=[f"manifest={man}"])
    return 0


def _cmd_dpsd(args) -> int:
    cfg = _load_validated(args.config)
    curve = _sp.dpsd(cfg, n=args.grid, workers=args.threads)
    man = _write_manifest(args.out, args, cfg, _default_seed())
    comments = [f"manifest={man}"]
    if curve.los_impulse:
        comments.append(
            f"los_impulse_hz={curve.los_impulse[0]:.6f} weight={curve.los_impulse[1]:.6f}")
    _write_csv(args.out, "nu_hz,density", zip(curve.nu_grid, curve.values), comments)
    return 0


def _cmd_stats(args) -> int:
    cfg = _load_validated(args.config)
    st = _sp.doppler_stats(cfg)
    line = "nu_min,nu_max,b_d,b_1,b_2\n" + ",".join(
        _fmt(v) for v in (st.nu_min, st.nu_max, st.b_d, st.b_1, st.b_2))
    print(line)
    if args.out:
        man = _write_manifest(args.out, args, cfg, _default_seed())
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(f"# manifest={man}\n" + line + "\n")
    return 0


def _cmd_pdf_aoa(args) -> int:
    cfg = _load_validated(args.config)
    grid = _apdf.aoa_aod_grid(cfg, n1=args.grid, n2=args.grid)
    man = _write_manifest(args.out, args, cfg, _default_seed())
    rows = ((a, b, grid.values[i, j])
            for i, a in enumerate(grid.axis1) for j, b in enumerate(grid.axis2))
    _write_csv(args.out, "axis1,axis2,value", rows,
               comments=[f"manifest={man}", f"total_mass={grid.total_mass:.6f}"])
    return 0


def _cmd_pdf_doppler_aoa(args) -> int:
    cfg = _load_validated(args.config)
    grid = _apdf.doppler_aoa_grid(cfg, n1=args.grid, n2=args.grid)
    man = _write_manifest(args.out, args, cfg, _default_seed())
    rows = ((nu, b, grid.values[i, j])
            for i, nu in enumerate(grid.axis1) for j, b in enumerate(grid.axis2))
    _write_csv(args.out, "axis1,axis2,value", rows,
               comments=[f"manifest={man}", f"total_mass={grid.total_mass:.6f}"])
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_validated(args.config)
    seed = args.seed if args.seed is not None else _default_seed()
    fs = args.fs_mult * cfg.f_dmax
    prefix = args.out_prefix
    man = _write_manifest(prefix, args, cfg, seed)

    series = [_mc.gain_series(cfg, n=args.n, duration=args.duration, fs=fs, seed=seed + r)
              for r in range(args.reps)]
    g = series[0]
    t = np.arange(g.samples.size) / g.fs
    _write_csv(prefix + "_gain.csv", "t,re,im",
               zip(t, g.samples.real, g.samples.imag), comments=[f"manifest={man}"])

    est = _mc.estimate_dpsd(series, nfft=args.nfft)
    _write_csv(prefix + "_dpsd.csv", "nu_hz,density",
               zip(est.nu_grid, est.values), comments=[f"manifest={man}"])

    nu_min, nu_max = _apdf.doppler_bounds(cfg)
    edges = np.linspace(nu_min, nu_max, args.bins + 1)
    draws = [_mc.doppler_samples(cfg, _mc.sample_scatterers(cfg, args.n_hist, seed + 1000 + r))
             for r in range(args.reps)]
    hist = _mc.estimate_histogram(draws, edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    _write_csv(prefix + "_hist_doppler.csv", "nu_hz,density",
               zip(centers, hist.density), comments=[f"manifest={man}"])

    expected = _apdf.dpdf_masses(cfg, edges)
    gof = _mc.chi_square_test(hist, expected / expected.sum())
    _write_csv(prefix + "_gof.csv", "z,dof,z_alpha,accept,mse,pooled_bins",
               [(gof.z, gof.dof, gof.z_alpha, int(gof.accept), gof.mse, gof.pooled_bins)],
               comments=[f"manifest={man}"])
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_validated(args.config)
    values = [float(v) for v in args.values.split(",")]
    points = _sp.sweep(cfg, args.param, values, r_l=args.r_l, w_r=args.w_r)
    man = _write_manifest(args.out, args, cfg, _default_seed())
    rows = []
    for p in points:
        if p.error:
            rows.append((p.value, "", "", "", "", "", p.error))
        else:
            s = p.stats
            rows.append((p.value, s.nu_min, s.nu_max, s.b_d, s.b_1, s.b_2, ""))
    _write_csv(args.out, "value,nu_min,nu_max,b_d,b_1,b_2,error", rows,
               comments=[f"manifest={man}", f"param={args.param}"])
    return 0


def _cmd_fit(args) -> int:
    scene_cfg = _load_validated(args.config_scene)
    scene = _fit.SceneSpec(
        tx=VehicleState(scene_cfg.x_t, scene_cfg.y_t, scene_cfg.v_t, scene_cfg.gamma_t),
        rx=VehicleState(scene_cfg.x_r, scene_cfg.y_r, scene_cfg.v_r, scene_cfg.gamma_r),
        fc=scene_cfg.fc)
    measured = _fit.ingest_spectrum(args.measured)
    problem = _fit.FitProblem(scene=scene, eps1=args.eps1, eps2=args.eps2,
                              road_width_max=args.road_width_max)
    init = np.array([scene_cfg.a1, scene_cfg.b1, scene_cfg.c1, scene_cfg.d1,
                     scene_cfg.a2, scene_cfg.b2, scene_cfg.c2, scene_cfg.d2,
                     scene_cfg.k_factor])
    seed = args.seed if args.seed is not None else _default_seed()
    report = _fit.fit(problem, measured, init, restarts=args.restarts, seed=seed)
    man = _write_manifest(args.out, args, scene_cfg, seed)
    header = ",".join(("restart",) + _fit._X_NAMES
                      + ("lse", "mdse", "rdse", "feasible", "iterations"))
    rows = []
    for r in report.restarts:
        rows.append((r["restart"],) + tuple(r["x"])
                    + (r["lse"], r["mdse"], r["rdse"], int(r["feasible"]), r["iterations"]))
    _write_csv(args.out, header, rows,
               comments=[f"manifest={man}",
                         "best=" + json.dumps(report.as_dict(), sort_keys=True)])
    return 0


def _cmd_repro(args) -> int:
    name = args.figure
    seed = args.seed if args.seed is not None else _default_seed()
    scale = 100 if args.paper_scale else 1
    prefix = args.out_prefix or f"repro_{name}"

    if name in ("fig4", "fig4-od"):
        cfg = _scenario(name)
        man = _write_manifest(prefix, args, cfg, seed)
        grid = _apdf.aoa_aod_grid(cfg, n1=192, n2=192)
        rows = ((a, b, grid.values[i, j])
                for i, a in enumerate(grid.axis1) for j, b in enumerate(grid.axis2))
        _write_csv(prefix + "_pdf_aoa_aod.csv", "axis1,axis2,value", rows,
                   comments=[f"manifest={man}"])
        dgrid = _apdf.doppler_aoa_grid(cfg, n1=192, n2=192)
        rows = ((nu, b, dgrid.values[i, j])
                for i, nu in enumerate(dgrid.axis1) for j, b in enumerate(dgrid.axis2))
        _write_csv(prefix + "_pdf_doppler_aoa.csv", "axis1,axis2,value", rows,
                   comments=[f"manifest={man}"])
        return 0

    if name == "fig5":
        cfg = _scenario("fig5-sd" if args.scenario == "sd" else "fig5-od")
        man = _write_manifest(prefix, args, cfg, seed)
        grid, vals = _apdf.dpdf_curve(cfg, n=1024, workers=args.threads)
        reps = 10 * scale if scale > 1 else 10
        series = [_mc.gain_series(cfg, n=10_000, duration=2.0, seed=seed + r)
                  for r in range(reps)]
        est = _mc.estimate_dpsd(series, nfft=512)
        nu_min, nu_max = _apdf.doppler_bounds(cfg)
        edges = np.linspace(nu_min, nu_max, 121)
        draws = [_mc.doppler_samples(cfg, _mc.sample_scatterers(cfg, 100_000 * scale, seed + 50 + r))
                 for r in range(20)]
        hist = _mc.estimate_histogram(draws, edges)
        centers = 0.5 * (edges[:-1] + edges[1:])
        emit_plot_data(
            [("analytic_dpdf", grid, vals),
             ("estimated_dpsd", est.nu_grid, est.values),
             ("doppler_histogram", centers, hist.density)],
            prefix + "_overlay.csv")
        return 0

    if name == "fig6":
        cfg = _scenario("fig6")
        man = _write_manifest(prefix, args, cfg, seed)
        rl_values = [1.01, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0, 12.0]
        wr_values = [12.0, 16.0, 20.0, 28.0, 36.0, 44.0, 56.0]
        for pname, values, fixed in (("r_l", rl_values, {"w_r": 28.0}),
                                     ("w_r", wr_values, {"r_l": 1.5})):
            points = _sp.sweep(cfg, pname, values, **fixed)
            rows = [(p.value, p.stats.b_d, p.stats.b_1, p.stats.b_2, p.error or "")
                    for p in points]
            _write_csv(f"{prefix}_{pname}.csv", "value,b_d,b_1,b_2,error", rows,
                       comments=[f"manifest={man}"])
        return 0

    if name in ("fig7", "fig8", "fig9"):
        cfg = _scenario(name)
        man = _write_manifest(prefix, args, cfg, seed)
        st = _sp.doppler_stats(cfg)
        _write_csv(prefix + "_stats.csv", "nu_min,nu_max,b_d,b_1,b_2",
                   [(st.nu_min, st.nu_max, st.b_d, st.b_1, st.b_2)],
                   comments=[f"manifest={man}"])
        curve = _sp.dpsd(cfg, n=1024, workers=args.threads)
        emit_plot_data([("analytic_dpsd", curve.nu_grid, curve.values)],
                       prefix + "_dpsd.csv", db_scale=(name == "fig9"))
        return 0

    raise RssError(f"no recipe for {name!r}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rss",
        description="Roadside-scatterer Doppler model: densities, spectra, "
                    "simulation, sweeps, and spectrum fitting.")
    ap.add_argument("--version", action="version", version=f"rss {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="scene config file (key = value)")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker threads for grid evaluation")

    p = sub.add_parser("dpdf", help="diffuse Doppler density on a grid")
    add_common(p)
    p.add_argument("--grid", type=int, default=4096)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dpdf)

    p = sub.add_parser("dpsd", help="full Doppler spectrum (line + diffuse)")
    add_common(p)
    p.add_argument("--grid", type=int, default=4096)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dpsd)

    p = sub.add_parser("stats", help="Doppler range, spread, mean shift, RMS spread")
    add_common(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("pdf-aoa", help="joint departure/arrival angle density grid")
    add_common(p)
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pdf_aoa)

    p = sub.add_parser("pdf-doppler-aoa", help="joint Doppler/arrival density grid")
    add_common(p)
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pdf_doppler_aoa)

    p = sub.add_parser("simulate", help="gain series, spectral estimate, histograms, GoF")
    add_common(p)
    p.add_argument("--n", type=int, default=10_000, help="cisoids per realization")
    p.add_argument("--n-hist", type=int, default=100_000, help="scatterers per histogram rep")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fs-mult", type=float, default=8.0)
    p.add_argument("--duration", type=float, default=2.0)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--nfft", type=int, default=512)
    p.add_argument("--bins", type=int, default=120)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="layout sweeps of the Doppler statistics")
    add_common(p)
    p.add_argument("--param", choices=("r_l", "w_r"), required=True)
    p.add_argument("--values", required=True, help="comma-separated sweep values")
    p.add_argument("--r-l", dest="r_l", type=float, default=1.5)
    p.add_argument("--w-r", dest="w_r", type=float, default=28.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit", help="fit strip geometry and K to a measured spectrum")
    p.add_argument("--config-scene", required=True,
                   help="scene file fixing vehicles and carrier; regions seed the init")
    p.add_argument("--measured", required=True, help="CSV with nu_hz,value rows")
    p.add_argument("--eps1", type=float, default=0.001, help="mean-shift tolerance (Hz)")
    p.add_argument("--eps2", type=float, default=0.001, help="RMS-spread tolerance (Hz)")
    p.add_argument("--road-width-max", type=float, required=True)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("repro", help="regenerate a bundled reference scenario")
    p.add_argument("figure", choices=("fig4", "fig4-od", "fig5", "fig6", "fig7", "fig8", "fig9"))
    p.add_argument("--scenario", choices=("sd", "od"), default="sd")
    p.add_argument("--paper-scale", action="store_true",
                   help="escalate sample counts to full scale (slow)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out-prefix", default=None)
    p.set_defaults(func=_cmd_repro)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except RssError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
