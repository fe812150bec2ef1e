"""Ray tracing through the layered refractive-index profile.

The ray leaves the ground at apparent zenith angle ``Z_a``. The local
elevation at each layer boundary follows from the spherical Snell invariant
``n(R + h) cos(beta) = const``. Inside a layer the ray is replaced by the
straight chord between its entry and exit points; the central angle spanned
by that chord is the elevation change plus the bending accumulated in the
layer. Above the last layer the ray runs straight to the satellite altitude.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from .numerics import NumericalError
from .orbit_geometry import EARTH, EarthConsts, OrbitSpec, slant_range
from .standard_atmosphere import (REFRACTIVE, THERMO, RefractiveLayerTable, ThermoLayerTable,
                                  pressure, temperature)

GRAZING_LIMIT = math.radians(89.9)

# fitted elongation factor for H = 780 km, ascending powers of Z_a in degrees
_FIT_COEFFS = (
    1.0, 0.0, 1.818908e-4, -4.066061e-5, 3.813573e-6, -1.920844e-7,
    5.710429e-9, -1.032821e-10, 1.117105e-12, -6.644358e-15, 1.672433e-17,
)


@dataclass(frozen=True)
class RayTraceResult:
    """Per-layer geometry of a traced ray.

    ``segment_lengths`` holds one chord per refracting layer followed by the
    vacuum segment. ``elevations`` are the local ray elevations ``beta_i`` at
    every boundary, ground first, satellite altitude last.
    """

    apparent_zenith: float
    segment_lengths: np.ndarray
    bending_angles: np.ndarray
    central_angles: np.ndarray
    elevations: np.ndarray
    total_refraction: float
    elongation_factor: float
    slant_range_refracted: float
    geometric_slant_range: float
    grazing: bool = False
    snell_invariant: np.ndarray = field(default_factory=lambda: np.empty(0))
    altitude: float = 0.0

    @property
    def true_zenith_of_arrival(self) -> float:
        """Zenith angle of the straight line from the ground station to the ray end point."""
        theta = float(np.sum(self.central_angles))
        r_end = EARTH.R_earth + self.altitude
        return math.atan2(r_end * math.sin(theta), r_end * math.cos(theta) - EARTH.R_earth)


def _clamped(x: float, name: str) -> float:
    if x > 1.0 + 1e-12 or x < -1.0 - 1e-12:
        raise NumericalError(f"{name} argument {x!r} outside [-1, 1]")
    return min(max(x, -1.0), 1.0)


def _levels(table: RefractiveLayerTable):
    return np.asarray(table.H_i, dtype=float), 1.0 + np.asarray(table.n_minus_1, dtype=float)


def bending_analytic(n_lo, n_hi, beta_lo, beta_hi):
    """Bending in a thin layer with constant index gradient."""
    return 2.0 * (n_lo - n_hi) / (math.tan(beta_hi) + math.tan(beta_lo))


def bending_quadrature(h_lo, h_hi, n_lo, n_hi, beta_lo, earth: EarthConsts = EARTH):
    """Refraction integral over one layer with linear ``n(h)``, by adaptive quadrature.

    Integrates ``-(1/n) dn/dh * cot(e)`` where ``e`` is the local elevation
    fixed by the Snell invariant. The substitution ``h = h_lo + u^2`` removes
    the inverse square-root singularity of a horizontal ray at the ground.
    """
    R = earth.R_earth
    grad = (n_hi - n_lo) / (h_hi - h_lo)
    if grad == 0.0:
        return 0.0
    K = n_lo * (R + h_lo) * math.cos(beta_lo)
    if K <= 0.0:
        return 0.0

    def integrand(u):
        h = h_lo + u * u
        n = n_lo + grad * (h - h_lo)
        rad = (n * (R + h)) ** 2 - K * K
        if rad <= 0.0:
            return 0.0
        # cot(e) * 2u with the Jacobian folded in
        return -grad / n * K / math.sqrt(rad) * 2.0 * u

    umax = math.sqrt(h_hi - h_lo)
    out = integrate.quad(integrand, 0.0, umax, epsabs=1e-15, epsrel=1e-11, limit=200, full_output=1)
    return out[0]


def trace_refracted_path(apparent_zenith_Za: float, orbit: OrbitSpec | float,
                         table: RefractiveLayerTable = REFRACTIVE, bending: str = "analytic",
                         earth: EarthConsts = EARTH) -> RayTraceResult:
    """Trace a ray from the ground to the satellite altitude.

    Parameters
    ----------
    apparent_zenith_Za : float
        Arrival zenith angle at the observer, radians in ``[0, pi/2]``.
    orbit : OrbitSpec or float
        Satellite altitude (must exceed the top refracting level).
    bending : {"analytic", "quadrature"}
        Thin-layer closed form or the full refraction integral per layer.
    """
    Za = float(apparent_zenith_Za)
    if not 0.0 <= Za <= math.pi / 2:
        raise ValueError("apparent zenith angle must lie in [0, pi/2]")
    H = orbit.altitude_H if isinstance(orbit, OrbitSpec) else float(orbit)
    Hs, n = _levels(table)
    if H <= Hs[-1]:
        raise ValueError("satellite must orbit above the top refracting level")
    R = earth.R_earth
    radii = R + Hs
    n0 = n[0]
    sZ = math.sin(Za)

    # Snell invariant fixes the elevation at every boundary, satellite altitude appended
    beta = np.array([math.acos(_clamped(n0 * R * sZ / (n[i] * radii[i]), "elevation"))
                     for i in range(len(Hs))])
    beta_H = math.acos(_clamped(n0 * R * sZ / (R + H), "elevation"))
    invariant = n * radii * np.cos(beta)

    N = len(Hs) - 1
    r = np.empty(N)
    phi = np.empty(N + 1)
    seg = np.empty(N + 1)
    for i in range(1, N + 1):
        if bending == "analytic":
            r[i - 1] = bending_analytic(n[i - 1], n[i], beta[i - 1], beta[i]) if Za > 0 else 0.0
        elif bending == "quadrature":
            r[i - 1] = bending_quadrature(Hs[i - 1], Hs[i], n[i - 1], n[i], beta[i - 1], earth)
        else:
            raise ValueError(f"unknown bending model {bending!r}")
        # central angle of the curved ray = elevation gain + bending
        phi[i - 1] = beta[i] - beta[i - 1] + r[i - 1]
        seg[i - 1] = _chord(radii[i - 1], radii[i], phi[i - 1])
    phi[N] = beta_H - beta[N]
    seg[N] = _chord(radii[N], R + H, phi[N])

    L_geo = slant_range(H, Za, earth)
    total = float(np.sum(seg))
    eps = total / L_geo
    res = RayTraceResult(
        apparent_zenith=Za, segment_lengths=seg, bending_angles=r, central_angles=phi,
        elevations=np.append(beta, beta_H), total_refraction=float(np.sum(r)),
        elongation_factor=eps, slant_range_refracted=total, geometric_slant_range=L_geo,
        grazing=Za > GRAZING_LIMIT, snell_invariant=invariant, altitude=H,
    )
    return res


def _chord(r1: float, r2: float, angle: float) -> float:
    # law of cosines written with a half-angle sine to avoid cancellation
    s = math.sin(0.5 * angle)
    return math.sqrt((r2 - r1) ** 2 + 4.0 * r1 * r2 * s * s)


def elongation_factor(apparent_zenith_Za, orbit: OrbitSpec | float, **kwargs):
    """Elongation factor for scalar or array apparent zenith angles."""
    za = np.asarray(apparent_zenith_Za, dtype=float)
    out = np.array([trace_refracted_path(z, orbit, **kwargs).elongation_factor for z in za.ravel()])
    out = out.reshape(za.shape)
    return float(out) if out.ndim == 0 else out


def elongation_fit_poly(apparent_zenith_deg, altitude_H: float | None = None):
    """Published degree-10 fit of the elongation factor, valid for H = 780 km only.

    Argument in degrees.
    """
    if altitude_H is not None and abs(altitude_H - 780e3) > 1.0:
        warnings.warn("the elongation fit polynomial is valid for H = 780 km only", stacklevel=2)
    z = np.abs(np.asarray(apparent_zenith_deg, dtype=float))
    acc = np.zeros_like(z)
    for c in reversed(_FIT_COEFFS):
        acc = acc * z + c
    return float(acc) if acc.ndim == 0 else acc


def refracted_slant_range(apparent_zenith_Za: float, orbit: OrbitSpec | float,
                          source: str = "trace", **kwargs) -> float:
    """Refraction-corrected slant range ``L_r = eps_r(Z_a) L(Z_a)``.

    ``source="trace"`` uses the ray tracer, ``source="fit"`` the published
    polynomial (only meaningful for a 780 km orbit) and ``source="none"``
    ignores refraction.
    """
    H = orbit.altitude_H if isinstance(orbit, OrbitSpec) else float(orbit)
    L = slant_range(H, apparent_zenith_Za)
    if source == "trace":
        return trace_refracted_path(apparent_zenith_Za, H, **kwargs).slant_range_refracted
    if source == "fit":
        return float(elongation_fit_poly(math.degrees(apparent_zenith_Za), H)) * L
    if source == "none":
        return L
    raise ValueError(f"unknown elongation source {source!r}")


def ray_curvature_diagnostic(h: float, apparent_zenith_Za: float,
                             thermo: ThermoLayerTable = THERMO, earth: EarthConsts = EARTH) -> float:
    """Empirical radius of curvature of a ray, in metres.

    Uses pressure in mb, temperature in K and the lapse rate in K/km of the
    layer containing ``h``. Infinite for a vertical ray.
    """
    s = math.sin(apparent_zenith_Za)
    P_mb = pressure(h, thermo) / 100.0
    T = temperature(h, thermo)
    b = min(int(np.searchsorted(thermo.H_b, h, side="right")) - 1, len(thermo.H_b) - 2)
    lapse_per_km = thermo.lambda_b[b] * 1e3
    k = 670.87 * P_mb / T ** 2 * (0.034 + lapse_per_km * 1e-3) * s
    if k == 0.0:
        return math.inf
    return earth.R_earth / k


def vacuum_table() -> RefractiveLayerTable:
    """Refractive table with every index set to one, for no-refraction runs."""
    return RefractiveLayerTable(REFRACTIVE.H_i.copy(), np.zeros_like(REFRACTIVE.dn_dh),
                                np.zeros_like(REFRACTIVE.n_minus_1))


def elongation_rows(altitudes=(400e3, 780e3, 2000e3), grid_deg=None):
    """Rows ``(H_km, Z_a_deg, elongation_true_Z, elongation_apparent_Z, L_r_km)``.

    ``elongation_true_Z`` is the factor at the apparent angle whose true
    zenith angle equals the grid value.
    """
    if grid_deg is None:
        grid_deg = np.arange(0.0, 90.0 + 1e-9, 1.0)
    rows = []
    for H in altitudes:
        for zd in grid_deg:
            za = math.radians(zd)
            tr = trace_refracted_path(za, H)
            za_of_true = math.asin(math.sin(za) / 1.00027)
            e_true = trace_refracted_path(za_of_true, H).elongation_factor
            rows.append((H / 1e3, float(zd), e_true, tr.elongation_factor, tr.slant_range_refracted / 1e3))
    return rows


def write_elongation_csv(path: str | Path, altitudes=(400e3, 780e3, 2000e3), grid_deg=None) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["H_km", "Z_a_deg", "elongation_true_Z", "elongation_apparent_Z", "L_r_km"])
        for row in elongation_rows(altitudes, grid_deg):
            w.writerow([f"{v:.10g}" for v in row])
    return path
