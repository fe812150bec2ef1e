"""Command-line entry point: ``satlink <subcommand> [options]``.

Every CSV starts with ``#`` lines carrying the package version, the seed and
the fully resolved configuration, so a file can be regenerated from itself.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from functools import partial
from pathlib import Path

from . import __version__
from .beam_statistics import (long_term_radius, mean_transmittance, path_turbulence,
                              scint_index_phenomenological, cutoff_wavenumber, short_term_radius,
                              beam_wander_variance, vacuum_radius, write_moments_csv)
from .extinction import extinction_factor
from .numerics import NumericalError
from .orbit_geometry import min_zenith, pass_timeline, slant_range
from .refraction_path import refracted_slant_range, write_elongation_csv
from .scenario import ConfigError, ScenarioConfig, apparent_from_true, evaluate_link, evaluate_qkd, parse_grid
from .standard_atmosphere import write_profile_csv as write_atmosphere_csv
from .transmittance_distribution import write_pdt_files
from .turbulence_profiles import AfglWk, Hufnagel, SlantContext, write_profile_csv as write_cn2_csv

log = logging.getLogger("satlink")

PRESETS = ("fig2", "fig3", "fig5", "fig6", "fig9")
INCLINATIONS_DEG = (0.0, 25.0, 50.0)
FIG5 = {"Cn0_sq": 2.5e-17, "H0": 500.0, "a": 3.2e-3, "wavelength": 847e-9, "mu": 0.92}
PASS_COLUMNS = ("t_s", "Z_a_deg", "qber", "key_rate_bits_per_s", "Q_mu_s", "Y1_L", "e1_xU", "theta_U", "flags")


def header_lines(cfg: ScenarioConfig, extra: dict | None = None) -> list[str]:
    lines = [f"satlink {__version__}", f"seed: {cfg.sweep.seed}", f"config: {cfg.dumps()}"]
    for k, v in (extra or {}).items():
        lines.append(f"{k}: {v}")
    return lines


def _write_rows(path: Path, header, columns, rows) -> Path:
    with path.open("w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10e}" if v != 0.0 and (abs(v) < 1e-3 or abs(v) >= 1e6) else f"{v:.10g}"
    return str(v)


def _pmap(fn, items, workers: int):
    """Ordered map, optionally over a process pool; results do not depend on ``workers``."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _za_min_deg(cfg: ScenarioConfig, delta_iota_deg: float) -> float:
    Zmin = min_zenith(cfg.observer.build(), math.radians(delta_iota_deg))
    return math.degrees(apparent_from_true(Zmin))


# -- loss budget ------------------------------------------------------------------

def _loss_row(cfg: ScenarioConfig, zdeg: float):
    Za = math.radians(zdeg)
    H = cfg.orbit.H_km * 1e3
    L = slant_range(H, Za)
    L_r = refracted_slant_range(Za, H, source=cfg.sweep.elongation)
    chi = extinction_factor(Za, L_r, cfg.extinction)
    beam = cfg.beam.build()
    turb = path_turbulence(cfg.turbulence.build(), SlantContext(L_r, Za), beam.wavelength)
    eta = mean_transmittance(beam, L_r, turb).value
    return (zdeg, L / 1e3, L_r / L, L_r / 1e3, chi, eta, chi * eta)


def run_loss_budget(cfg: ScenarioConfig, out: Path, preset: str | None = None) -> list[Path]:
    if preset == "fig2":
        p = write_elongation_csv(out / "elongation.csv", altitudes=(400e3, 780e3, 2000e3),
                                 grid_deg=cfg.sweep.grid_deg())
        return [p]
    rows = _pmap(partial(_loss_row, cfg), cfg.sweep.grid_deg(), cfg.sweep.workers)
    cols = ("Z_a_deg", "L_km", "elongation", "L_r_km", "chi_ext", "eta_mean", "eta_total")
    return [_write_rows(out / "loss_budget.csv", header_lines(cfg), cols, rows)]


# -- turbulence statistics ---------------------------------------------------------------

def _moments_at(cfg: ScenarioConfig, zdeg: float):
    return zdeg, evaluate_link(cfg, math.radians(zdeg)).moments


def _beam_angles_at(cfg: ScenarioConfig, zdeg: float):
    Za = math.radians(zdeg)
    L_r = refracted_slant_range(Za, cfg.orbit.H_km * 1e3, source=cfg.sweep.elongation)
    beam = cfg.beam.build()
    spec = cfg.turbulence.build()
    ctx = SlantContext(L_r, Za)
    turb = path_turbulence(spec, ctx, beam.wavelength)
    s_bw = math.sqrt(beam_wander_variance(beam, ctx, spec.model, turb))
    return (zdeg, long_term_radius(beam, L_r, turb) / L_r * 1e6, short_term_radius(beam, L_r, turb) / L_r * 1e6,
            s_bw / L_r * 1e6, vacuum_radius(beam, L_r) / L_r * 1e6)


def run_turbulence_stats(cfg: ScenarioConfig, out: Path, preset: str | None = None) -> list[Path]:
    grid = cfg.sweep.grid_deg()
    if preset == "fig5":
        rows = []
        for zdeg in grid:
            Za = math.radians(zdeg)
            rows.append((zdeg, scint_index_phenomenological(FIG5["a"], FIG5["wavelength"], FIG5["Cn0_sq"],
                                                            FIG5["H0"], FIG5["mu"], Za),
                         cutoff_wavenumber(FIG5["Cn0_sq"], FIG5["wavelength"], FIG5["H0"], FIG5["mu"], Za)))
        extra = {"phenomenological parameters": json.dumps(FIG5, sort_keys=True)}
        return [_write_rows(out / "scint_phenomenological.csv", header_lines(cfg, extra),
                            ("Z_a_deg", "scint_index", "cutoff_wavenumber_per_m"), rows)]

    inclinations = INCLINATIONS_DEG if preset in ("fig3", "fig6") else (cfg.orbit.delta_iota_deg,)
    # results depend on Z_a only, so shared grid points are evaluated once
    needed = sorted({z for di in inclinations for z in grid if z >= _za_min_deg(cfg, di) - 1e-12})
    if preset == "fig6":
        table = dict(zip(needed, _pmap(partial(_beam_angles_at, cfg), needed, cfg.sweep.workers)))
        cols = ("Z_a_deg", "W_LT_over_L_urad", "W_ST_over_L_urad", "sigma_BW_over_L_urad", "W_vac_over_L_urad")
    else:
        table = dict(_pmap(partial(_moments_at, cfg), needed, cfg.sweep.workers))
    paths = []
    for di in inclinations:
        zmin = _za_min_deg(cfg, di)
        sub = replace(cfg, orbit=replace(cfg.orbit, delta_iota_deg=di))
        extra = {"Z_a_min_deg": f"{zmin:.10g}"}
        name = f"di{di:g}" if len(inclinations) > 1 else ""
        if preset == "fig6":
            rows = [table[z] for z in needed if z >= zmin - 1e-12]
            paths.append(_write_rows(out / f"beam_angles{('_' + name) if name else ''}.csv",
                                     header_lines(sub, extra), cols, rows))
        else:
            rows = [(z, table[z]) for z in needed if z >= zmin - 1e-12]
            paths.append(write_moments_csv(out / f"turb_stats{('_' + name) if name else ''}.csv", rows,
                                           header_lines(sub, extra)))
    return paths


# -- PDT ------------------------------------------------------------------------------------

def run_pdt(cfg: ScenarioConfig, out: Path, za_deg: float = 0.0) -> list[Path]:
    point = evaluate_link(cfg, math.radians(za_deg))
    extra = {"Z_a_deg": f"{za_deg:.10g}", "chi_ext": f"{point.chi_ext:.10g}", "L_r_m": f"{point.L_r:.10g}"}
    return list(write_pdt_files(point.pdt, out / "pdt.csv", out / "pdt.json", header_lines=header_lines(cfg, extra)))


# -- QKD pass ---------------------------------------------------------------------------

def _qkd_at(cfg: ScenarioConfig, Za: float):
    point = evaluate_link(cfg, Za)
    return evaluate_qkd(cfg, point)


def pass_rows(cfg: ScenarioConfig) -> list[tuple]:
    """One row per timeline sample; mirror-image samples share one evaluation."""
    samples = pass_timeline(cfg.observer.build(), cfg.orbit.build(), cfg.sweep.time_step_s)
    za = [apparent_from_true(s.zenith) for s in samples]
    keys = [round(z, 12) for z in za]
    unique = sorted(set(keys))
    results = dict(zip(unique, _pmap(partial(_qkd_at, cfg), unique, cfg.sweep.workers)))
    rows = []
    for s, z, key in zip(samples, za, keys):
        r = results[key]
        rows.append((s.time, math.degrees(z), r.qber, r.key_rate_per_second(cfg.qkd), r.Q_mu_s_mean,
                     r.Y1_L["z"], r.e1_xU, r.theta_U, "|".join(r.flags) or "-"))
    return rows


def run_qkd_pass(cfg: ScenarioConfig, out: Path, preset: str | None = None) -> list[Path]:
    inclinations = INCLINATIONS_DEG if preset == "fig9" else (cfg.orbit.delta_iota_deg,)
    paths = []
    for di in inclinations:
        sub = replace(cfg, orbit=replace(cfg.orbit, delta_iota_deg=di))
        rows = pass_rows(sub)
        name = f"qkd_pass_di{di:g}.csv" if len(inclinations) > 1 else "qkd_pass.csv"
        paths.append(_write_rows(out / name, header_lines(sub), PASS_COLUMNS, rows))
    return paths


# -- tables ------------------------------------------------------------------------------

def run_atmosphere_tables(cfg: ScenarioConfig, out: Path) -> list[Path]:
    models = {"afgl_wk": cfg.turbulence.build_model() if cfg.turbulence.model == "afgl_wk" else AfglWk(),
              "hufnagel": Hufnagel()}
    return [write_atmosphere_csv(out / "standard_atmosphere.csv"), write_cn2_csv(out / "cn2_profiles.csv", models)]


# -- argument handling -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON scenario file (defaults to the built-in scenario)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--seed", type=int, help="Monte Carlo seed override")
    common.add_argument("--grid", help='apparent zenith grid in degrees, "start:stop:step" or a list')
    common.add_argument("--preset", choices=PRESETS, help="figure-specific parameter preset")
    common.add_argument("--workers", type=int, help="process count for sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="satlink", description="Satellite downlink channel and decoy-state QKD model.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("loss-budget", parents=[common], help="slant range, elongation, extinction and mean transmittance")
    sub.add_parser("turb-stats", parents=[common], help="channel moments over the zenith grid")
    pdt = sub.add_parser("pdt", parents=[common], help="transmittance distribution at one zenith angle")
    pdt.add_argument("--za", type=float, default=0.0, help="apparent zenith angle, degrees")
    sub.add_parser("qkd-pass", parents=[common], help="QBER and key rate over a pass")
    sub.add_parser("atmosphere-tables", parents=[common], help="standard atmosphere and Cn2 profiles")
    sub.add_parser("dump-config", parents=[common], help="write the resolved configuration as JSON")
    return p


def resolve_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    sweep = cfg.sweep
    if args.grid:
        parse_grid(args.grid)
        sweep = replace(sweep, za_grid=args.grid)
    if args.workers:
        sweep = replace(sweep, workers=args.workers)
    cfg = replace(cfg, sweep=sweep).with_seed(args.seed)
    if args.preset == "fig5" and not args.grid:
        cfg = replace(cfg, sweep=replace(cfg.sweep, za_grid="0:89:0.5"))
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "loss-budget":
            paths = run_loss_budget(cfg, out, args.preset)
        elif args.command == "turb-stats":
            paths = run_turbulence_stats(cfg, out, args.preset)
        elif args.command == "pdt":
            paths = run_pdt(cfg, out, args.za)
        elif args.command == "qkd-pass":
            paths = run_qkd_pass(cfg, out, args.preset)
        elif args.command == "atmosphere-tables":
            paths = run_atmosphere_tables(cfg, out)
        else:
            paths = [cfg.dump(out / "scenario.json")]
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
