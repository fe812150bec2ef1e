"""Scenario configuration and per-zenith link evaluation.

A :class:`ScenarioConfig` is a plain JSON document with one section per
model block. Loading validates every section by constructing the model
objects it describes, so a config that loads is a config that runs.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .beam_statistics import BeamParams, ChannelMoments, TurbulenceSpec, channel_moments
from .decoy_qkd import DecoyConfig, KeyRateResult, key_rate
from .extinction import ExtinctionParams, extinction_factor
from .numerics import McSpec
from .orbit_geometry import ObserverGeo, OrbitSpec, apparent_zenith
from .refraction_path import refracted_slant_range
from .transmittance_distribution import PdtModel, build_pdt
from .turbulence_profiles import AfglWk, Cn2Model, Exponential, Hufnagel, ShearProfile, SlantContext


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass(frozen=True)
class ObserverCfg:
    lat_deg: float = 48.0
    altitude_m: float = 0.0

    def build(self) -> ObserverGeo:
        return ObserverGeo.from_degrees(self.lat_deg, self.altitude_m)


@dataclass(frozen=True)
class OrbitCfg:
    H_km: float = 780.0
    delta_iota_deg: float = 0.0
    T_sat_min: float = 100.0
    revolutions: int = 0

    def build(self) -> OrbitSpec:
        return OrbitSpec(self.H_km * 1e3, math.radians(self.delta_iota_deg), self.T_sat_min * 60.0,
                         self.revolutions)


@dataclass(frozen=True)
class BeamCfg:
    W0_m: float = 0.02
    F_m: float = 1e5
    wavelength_nm: float = 840.0
    aperture_a_m: float = 0.5
    tracking_urad: float | None = 1.0

    def build(self) -> BeamParams:
        return BeamParams(self.W0_m, self.F_m, self.wavelength_nm * 1e-9, self.aperture_a_m)


@dataclass(frozen=True)
class TurbulenceCfg:
    """``model`` is one of ``afgl_wk``, ``hufnagel`` or ``exponential``."""

    model: str = "afgl_wk"
    Cn0_sq: float = 1e-17
    H0_m: float = 500.0
    hufnagel_v: float = 21.0
    hufnagel_A: float = 1.7e-14
    night: bool = True
    shear_csv: str | None = None
    rho0_zenith_m: float | None = 0.13
    L_turb_m: float | None = None
    h0_m: float | None = None

    def build_model(self) -> Cn2Model:
        if self.model == "afgl_wk":
            shear = ShearProfile.from_csv(self.shear_csv) if self.shear_csv else ShearProfile.synthetic()
            return AfglWk(shear_profile=shear, night=self.night, Cn0_sq_at_h0=self.Cn0_sq)
        if self.model == "hufnagel":
            return Hufnagel(self.hufnagel_v, self.hufnagel_A)
        if self.model == "exponential":
            return Exponential(self.Cn0_sq, self.H0_m)
        raise ConfigError(f"unknown turbulence model {self.model!r}")

    def build(self) -> TurbulenceSpec:
        return TurbulenceSpec(self.build_model(), h0=self.h0_m, rho0_zenith=self.rho0_zenith_m,
                              L_turb=self.L_turb_m)


@dataclass(frozen=True)
class SweepCfg:
    za_grid: str = "0:89:1"
    time_step_s: float = 10.0
    elongation: str = "trace"
    seed: int = 20190521
    mc_max_samples: int = 400_000
    mc_target_rel_se: float = 0.01
    workers: int = 1
    estimator: str = "control"

    def mc(self) -> McSpec:
        return McSpec(seed=self.seed, max_samples=self.mc_max_samples, target_rel_se=self.mc_target_rel_se,
                      workers=self.workers)

    def grid_deg(self) -> list[float]:
        return parse_grid(self.za_grid)


def parse_grid(text: str) -> list[float]:
    """``"start:stop:step"`` (inclusive stop) or a comma-separated list, degrees."""
    try:
        if ":" in text:
            start, stop, step = (float(p) for p in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9))
            return [start + i * step for i in range(n + 1)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad zenith grid {text!r}") from exc


_SECTIONS = {
    "observer": ObserverCfg, "orbit": OrbitCfg, "beam": BeamCfg, "turbulence": TurbulenceCfg,
    "extinction": ExtinctionParams, "qkd": DecoyConfig, "sweep": SweepCfg,
}


@dataclass(frozen=True)
class ScenarioConfig:
    observer: ObserverCfg = field(default_factory=ObserverCfg)
    orbit: OrbitCfg = field(default_factory=OrbitCfg)
    beam: BeamCfg = field(default_factory=BeamCfg)
    turbulence: TurbulenceCfg = field(default_factory=TurbulenceCfg)
    extinction: ExtinctionParams = field(default_factory=ExtinctionParams)
    qkd: DecoyConfig = field(default_factory=DecoyConfig)
    sweep: SweepCfg = field(default_factory=SweepCfg)

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        parts = {}
        for name, kind in _SECTIONS.items():
            section = data.get(name, {})
            allowed = {f.name for f in fields(kind)}
            bad = set(section) - allowed
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
            try:
                parts[name] = kind(**section)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{name}] {exc}") from exc
        cfg = cls(**parts)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def dump(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def validate(self) -> None:
        try:
            self.observer.build()
            self.orbit.build()
            self.beam.build()
            self.turbulence.build()
            self.sweep.mc()
            grid = self.sweep.grid_deg()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if any(not 0.0 <= z < 90.0 for z in grid):
            raise ConfigError("apparent zenith grid must lie in [0, 90) degrees")
        if self.sweep.elongation not in ("trace", "fit", "none"):
            raise ConfigError(f"unknown elongation source {self.sweep.elongation!r}")
        if self.sweep.estimator not in ("control", "raw"):
            raise ConfigError(f"unknown estimator {self.sweep.estimator!r}")
        if self.sweep.time_step_s <= 0:
            raise ConfigError("time step must be positive")
        if self.beam.tracking_urad is not None and self.beam.tracking_urad < 0:
            raise ConfigError("tracking accuracy must be non-negative")

    def with_seed(self, seed: int | None) -> "ScenarioConfig":
        return self if seed is None else replace(self, sweep=replace(self.sweep, seed=int(seed)))


# -- per-zenith evaluation ----------------------------------------------------------

@dataclass(frozen=True)
class LinkPoint:
    apparent_zenith: float
    L_r: float
    chi_ext: float
    moments: ChannelMoments
    pdt: PdtModel


def evaluate_link(cfg: ScenarioConfig, Za: float) -> LinkPoint:
    """Loss budget, channel moments and transmittance distribution at one apparent zenith angle."""
    H = cfg.orbit.H_km * 1e3
    L_r = refracted_slant_range(Za, H, source=cfg.sweep.elongation)
    chi = extinction_factor(Za, L_r, cfg.extinction)
    beam = cfg.beam.build()
    m = channel_moments(beam, SlantContext(L_r, Za), cfg.turbulence.build(), cfg.sweep.mc(), cfg.sweep.estimator)
    tr = cfg.beam.tracking_urad
    pdt = build_pdt(m.eta_mean, max(m.eta_sq_mean, m.eta_mean ** 2 * (1 + 1e-12)), m.W_ST, m.sigma_BW,
                    beam.aperture_radius_a, None if tr is None else tr * 1e-6, L_r)
    return LinkPoint(Za, L_r, chi, m, pdt)


def evaluate_qkd(cfg: ScenarioConfig, point: LinkPoint) -> KeyRateResult:
    return key_rate(point.pdt, cfg.qkd, point.chi_ext)


def apparent_from_true(Z: float) -> float:
    return float(apparent_zenith(Z))
