"""Refractive-index structure parameter profiles and slant-path weightings.

Three profile families are provided: the exponential ground layer, the
Hufnagel-Valley model and the radiosonde-based AFGL free-atmosphere model
spliced onto a Walters-Kunkel boundary layer.

AFGL unit convention
--------------------
``M = -79e-6 P N^2 / (g T)`` is evaluated with ``P`` in mb, ``T`` in K,
``g`` in m/s^2 and ``N^2 = g (lambda + gamma) / T`` in s^-2 with the lapse
rates in K/m, giving ``M`` in 1/m. The ``Y(h)`` polynomials take the wind
shear ``S`` in 1/s and the lapse rate in K/km. With a tropopause shear of
about 0.02 1/s this yields ``Cn^2 ~ 1e-17 m^(-2/3)`` at 10 km.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .numerics import QuadratureSpec, find_root_bracketed, integrate_adaptive
from .orbit_geometry import EARTH
from .standard_atmosphere import G_ACCEL, H_TOP, THERMO, pressure, temperature

DRY_ADIABATIC_LAPSE = 9.8e-3  # K/m
DATA_DIR = Path(__file__).resolve().parent / "data"
SYNTHETIC_SHEAR_CSV = DATA_DIR / "synthetic_shear_profile.csv"


# -- shear input --------------------------------------------------------------

@dataclass(frozen=True)
class ShearProfile:
    """Tabulated wind shear (1/s) and temperature lapse rate (K/km) versus height (m)."""

    h: np.ndarray
    shear: np.ndarray
    lapse_K_per_km: np.ndarray
    label: str = ""

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.ndim != 1 or len(h) < 2 or np.any(np.diff(h) <= 0):
            raise ValueError("shear profile heights must be strictly increasing")
        if np.any(np.asarray(self.shear) < 0):
            raise ValueError("wind shear must be non-negative")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ShearProfile":
        """Read a CSV with header ``h_m,S_per_s,lapse_K_per_km``; ``#`` lines are comments."""
        path = Path(path)
        label = ""
        rows = []
        with path.open() as fh:
            lines = []
            for line in fh:
                if line.startswith("#"):
                    label = label or line.lstrip("# ").strip()
                    continue
                lines.append(line)
        reader = csv.DictReader(lines)
        missing = {"h_m", "S_per_s", "lapse_K_per_km"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"shear CSV is missing columns {sorted(missing)}")
        for r in reader:
            rows.append((float(r["h_m"]), float(r["S_per_s"]), float(r["lapse_K_per_km"])))
        a = np.array(rows)
        return cls(a[:, 0], a[:, 1], a[:, 2], label)

    @classmethod
    def synthetic(cls) -> "ShearProfile":
        return cls.from_csv(SYNTHETIC_SHEAR_CSV)

    def at(self, h: float) -> tuple[float, float]:
        if h < self.h[0] or h > self.h[-1]:
            raise ValueError(f"height {h} m outside the shear profile range")
        return float(np.interp(h, self.h, self.shear)), float(np.interp(h, self.h, self.lapse_K_per_km))


# -- profile models -----------------------------------------------------------

class Cn2Model:
    """Base class: ``cn2(h)`` with ``h`` in metres, result in m^(-2/3)."""

    def cn2(self, h: float) -> float:
        raise NotImplementedError

    def __call__(self, h):
        h_arr = np.asarray(h, dtype=float)
        if h_arr.ndim == 0:
            return self.cn2(float(h_arr))
        return np.array([self.cn2(float(x)) for x in h_arr.ravel()]).reshape(h_arr.shape)


@dataclass(frozen=True)
class Exponential(Cn2Model):
    Cn0_sq: float = 1e-17
    H0: float = 500.0

    def cn2(self, h):
        return self.Cn0_sq * math.exp(-max(h, 0.0) / self.H0)


@dataclass(frozen=True)
class Hufnagel(Cn2Model):
    """Hufnagel-Valley profile with rms upper-wind speed ``v`` (m/s) and ground strength ``A``."""

    v: float = 21.0
    A: float = 1.7e-14

    def cn2(self, h):
        h = max(h, 0.0)
        return (0.00594 * (self.v / 27.0) ** 2 * (1e-5 * h) ** 10 * math.exp(-h / 1000.0)
                + 2.7e-16 * math.exp(-h / 1500.0) + self.A * math.exp(-h / 100.0))


@dataclass(frozen=True)
class AfglBranches:
    """Upper limits (m) of the lower-troposphere and troposphere ``Y(h)`` branches."""

    lower_troposphere_top: float = 5000.0
    troposphere_top: float = 17000.0


def afgl_Y(S: float, lapse_K_per_km: float, branch: str) -> float:
    """Outer-scale exponent ``Y`` from wind shear (1/s) and lapse rate (K/km)."""
    lam = lapse_K_per_km
    if branch == "lower":
        c = (2.9767, 27.9804, 2.9012, 1.1843, 0.1741, 0.0086)
    elif branch == "troposphere":
        c = (0.7152, 30.6024, 0.0003, -0.0057, -0.0016, 0.0001)
    elif branch == "stratosphere":
        c = (0.6763, 8.1569, -0.0536, 0.0084, -0.0007, 0.00002)
    else:
        raise ValueError(f"unknown AFGL branch {branch!r}")
    return c[0] + c[1] * S + lam * (c[2] + lam * (c[3] + lam * (c[4] + lam * c[5])))


def afgl_cn2(h: float, shear: ShearProfile, branches: AfglBranches = AfglBranches()) -> float:
    """Free-atmosphere ``Cn^2`` from radiosonde-type data; zero above the atmosphere table."""
    if h > H_TOP:
        return 0.0
    S, lapse_km = shear.at(h)
    T = temperature(h)
    P_mb = pressure(h) / 100.0
    N2 = G_ACCEL * (lapse_km * 1e-3 + DRY_ADIABATIC_LAPSE) / T
    M = -79e-6 * P_mb * N2 / (G_ACCEL * T)
    if h <= branches.lower_troposphere_top:
        branch = "lower"
    elif h <= branches.troposphere_top:
        branch = "troposphere"
    else:
        branch = "stratosphere"
    Y = afgl_Y(S, lapse_km, branch)
    return 2.8 * M * M * 0.1 ** (4.0 / 3.0) * 10.0 ** Y


def wk_shape(h: float, h0: float, h_i: float, night: bool) -> float:
    """Walters-Kunkel boundary-layer profile relative to its value at ``h0``.

    Heights below ``h0`` are clamped to ``h0``.
    """
    h = max(h, h0)
    if night:
        return (h / h0) ** (-2.0 / 3.0)
    base = (0.5 * h_i / h0) ** (-4.0 / 3.0)
    if h <= 0.5 * h_i:
        return (h / h0) ** (-4.0 / 3.0)
    if h <= 0.7 * h_i:
        return base
    return 2.9 * base * (h / h_i) ** 3


@dataclass(frozen=True)
class AfglWk(Cn2Model):
    """AFGL free atmosphere above the inversion height, Walters-Kunkel below.

    The two pieces are made continuous at ``h_i`` by one matching constant.
    With ``Cn0_sq_at_h0=None`` the boundary layer is scaled to meet AFGL;
    otherwise the boundary layer is pinned to ``Cn0_sq_at_h0`` at ``h_0`` and
    the AFGL part is rescaled to meet it.
    """

    shear_profile: ShearProfile = field(default_factory=ShearProfile.synthetic)
    night: bool = True
    h_i: float | None = None
    h_0: float | None = None
    Cn0_sq_at_h0: float | None = None
    branches: AfglBranches = AfglBranches()

    @property
    def inversion_height(self) -> float:
        if self.h_i is not None:
            return self.h_i
        return 500.0 if self.night else 1000.0

    @property
    def reference_height(self) -> float:
        if self.h_0 is not None:
            return self.h_0
        return 10.0 if self.night else 5.0

    def _splice(self) -> tuple[float, float]:
        """(boundary-layer value at h0, factor applied to AFGL)."""
        hi, h0 = self.inversion_height, self.reference_height
        shape_hi = wk_shape(hi, h0, hi, self.night)
        afgl_hi = afgl_cn2(hi, self.shear_profile, self.branches)
        if self.Cn0_sq_at_h0 is None:
            return afgl_hi / shape_hi, 1.0
        return self.Cn0_sq_at_h0, self.Cn0_sq_at_h0 * shape_hi / afgl_hi

    def cn2(self, h):
        wk0, afgl_scale = _splice_cache(self)
        hi, h0 = self.inversion_height, self.reference_height
        if h <= hi:
            return wk0 * wk_shape(h, h0, hi, self.night)
        return afgl_scale * afgl_cn2(h, self.shear_profile, self.branches)


_SPLICES: dict[int, tuple] = {}


def _splice_cache(model: AfglWk):
    key = id(model)
    hit = _SPLICES.get(key)
    if hit is None or hit[0] is not model:
        hit = (model, model._splice())
        _SPLICES[key] = hit
    return hit[1]


def outer_scale(h):
    """Empirical outer scale of turbulence (m), peaking at 4 m near 8.5 km."""
    h = np.asarray(h, dtype=float)
    out = 4.0 / (1.0 + ((h - 8500.0) / 2500.0) ** 2)
    return float(out) if out.ndim == 0 else out


# -- slant path ---------------------------------------------------------------

@dataclass(frozen=True)
class SlantContext:
    """Refracted path length (m), apparent zenith angle (rad) and link direction."""

    L_r: float
    apparent_zenith: float
    direction: str = "downlink"
    exact_height: bool = False

    def __post_init__(self):
        if not self.L_r > 0:
            raise ValueError("path length must be positive")
        if self.direction not in ("downlink", "uplink"):
            raise ValueError("direction must be 'downlink' or 'uplink'")

    def height(self, xi):
        """Height above ground at fractional position ``xi`` from the transmitter."""
        s = self.L_r * ((1.0 - xi) if self.direction == "downlink" else xi)
        if self.exact_height:
            R = EARTH.R_earth
            return R * np.sqrt(1 + 2 * s / R * math.cos(self.apparent_zenith) + (s / R) ** 2) - R
        return s * math.cos(self.apparent_zenith)


def cn2_along_path(model: Cn2Model, ctx: SlantContext, xi):
    return model(ctx.height(xi))


def reference_cn2(model: Cn2Model, apparent_zenith: float, h0: float) -> float:
    """``Cn^2`` at the slant reference point ``h0 sec(Z_a)``."""
    return model(h0 / math.cos(apparent_zenith))


def turbulent_height(model: Cn2Model, fraction: float = 1e-3, h_max: float = H_TOP) -> float:
    """Height above which ``Cn^2`` stays below ``fraction`` of its ground value.

    Scans downward from ``h_max`` on a 10 m grid and refines the crossing by
    bisection, so non-monotone profiles return the highest crossing.
    """
    if isinstance(model, Exponential):
        return model.H0 * math.log(1.0 / fraction)
    ground = model(0.0)
    if ground <= 0:
        return 0.0
    level = fraction * ground
    grid = np.arange(h_max, -1.0, -10.0)
    vals = model(grid)
    above = np.nonzero(vals >= level)[0]
    if len(above) == 0:
        return 0.0
    j = above[0]
    if j == 0:
        return float(h_max)
    lo, hi = float(grid[j]), float(grid[j - 1])
    return find_root_bracketed(lambda h: model(h) - level, lo, hi, tol=1e-3)


def turbulent_path_length(model: Cn2Model, apparent_zenith: float, fraction: float = 1e-3) -> float:
    """Path length through the turbulent layer.

    For the exponential model this is ``H0 sec(Z_a)``; otherwise the slant
    distance below the height where ``Cn^2`` drops to ``fraction`` of its
    ground value.
    """
    if isinstance(model, Exponential):
        return model.H0 / math.cos(apparent_zenith)
    return turbulent_height(model, fraction) / math.cos(apparent_zenith)


def coherence_radius_rho0(Cn0_sq: float, wavelength: float, L_turb: float) -> float:
    """Plane-wave coherence radius ``(1.5 Cn0^2 k^2 L_turb)^(-3/5)``; ``inf`` without turbulence."""
    if Cn0_sq <= 0 or L_turb <= 0:
        return math.inf
    k = 2 * math.pi / wavelength
    return (1.5 * Cn0_sq * k * k * L_turb) ** (-0.6)


def _xi_breakpoints(model: Cn2Model, ctx: SlantContext) -> list[float]:
    # kinks of the profile mapped to path fraction help the adaptive rule
    hs = [500.0, 1000.0, 5000.0, 17000.0, H_TOP]
    if isinstance(model, AfglWk):
        hs += [model.inversion_height, 0.5 * model.inversion_height, 0.7 * model.inversion_height,
               model.reference_height]
        # shear interpolation nodes and atmosphere layer bases are kinks or small jumps
        hs += [float(h) for h in model.shear_profile.h] + [float(h) for h in THERMO.H_b]
    c = math.cos(ctx.apparent_zenith)
    pts = []
    for h in hs:
        s = h / c
        x = 1.0 - s / ctx.L_r if ctx.direction == "downlink" else s / ctx.L_r
        if 0.0 < x < 1.0:
            pts.append(x)
    return sorted(set(pts))


def path_integral(model: Cn2Model, ctx: SlantContext, weight: Callable[[float], float],
                  rel_tol: float = 1e-9) -> float:
    """``int_0^1 Cn^2(h(xi)) weight(xi) dxi`` by adaptive quadrature.

    The path is split at the mapped profile kinks. The absolute tolerance of
    each panel is set from a coarse trapezoid estimate of the whole integral,
    so panels that contribute nothing do not stall the error control.
    """
    pts = _xi_breakpoints(model, ctx)
    edges = [0.0] + pts + [1.0]

    def f(x):
        return model(float(ctx.height(x))) * weight(x)

    coarse = np.concatenate([np.linspace(lo, hi, 21) for lo, hi in zip(edges[:-1], edges[1:])])
    try:
        vals = np.asarray(model(ctx.height(coarse)) * weight(coarse), dtype=float)
        if vals.shape != coarse.shape:
            raise TypeError
    except (TypeError, ValueError):
        vals = np.array([f(float(x)) for x in coarse])
    scale = float(np.sum(0.5 * (np.abs(vals[1:]) + np.abs(vals[:-1])) * np.diff(coarse)))
    if scale == 0.0:
        return 0.0
    spec = QuadratureSpec(rel_tol=rel_tol, abs_tol=rel_tol * scale / len(edges), max_depth=500)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, _ = integrate_adaptive(f, (lo, hi), spec)
        total += v
    return total


def chi_weight(model: Cn2Model, ctx: SlantContext, Cn0_sq: float) -> float:
    """Slant weighting ``(1/Cn0^2) int_0^1 Cn^2 xi^(5/3) dxi``.

    ``xi`` runs from the transmitter (0) to the receiver (1); the height
    mapping in ``ctx`` carries the link direction.
    """
    if Cn0_sq <= 0:
        return 0.0
    return path_integral(model, ctx, lambda x: x ** (5.0 / 3.0)) / Cn0_sq


def write_profile_csv(path: str | Path, models: dict[str, Cn2Model], h_max: float = 30000.0,
                      step: float = 10.0) -> Path:
    """Export ``h_m`` plus one ``Cn^2`` column per named model."""
    path = Path(path)
    hs = np.arange(0.0, h_max + 0.5 * step, step)
    names = list(models)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h_m"] + [f"cn2_{n}" for n in names])
        for h in hs:
            w.writerow([f"{h:.6g}"] + [f"{models[n](float(h)):.6e}" for n in names])
    return path
