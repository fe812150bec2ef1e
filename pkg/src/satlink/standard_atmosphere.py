"""Layered standard atmosphere: temperature, pressure, refractive index and number density.

Tables are stored in their published units (km, K/km, K, mb and 1e-8 index
units) and converted to SI on access.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

G_ACCEL = 9.8          # m/s^2
R_AIR = 287.053        # J/(kg K)
H_TOP = 84_800.0       # m, vacuum above
SCALE_HEIGHT = 6600.0  # m, number-density scale height

# (H_b km, lapse K/km, T_b K, P_b mb); the top row only closes the last layer
THERMO_ROWS = (
    (0.0, -6.5, 288.0, 1013.0),
    (11.0, 0.0, 217.0, 226.0),
    (20.0, 1.0, 217.0, 54.7),
    (32.0, 2.8, 229.0, 8.68),
    (47.0, 0.0, 271.0, 1.11),
    (51.0, -2.8, 271.0, 0.67),
    (71.0, -2.0, 215.0, 0.04),
    (84.8, float("nan"), 188.0, 0.004),
)

# (H_i km, dn/dh 1e-6/km, (n_i - 1) 1e-8); the ground gradient is not tabulated
REFRACTIVE_ROWS = (
    (0.0, float("nan"), 27340.0),
    (5.0, 25.68, 14660.0),
    (7.0, 17.58, 11142.0),
    (11.0, 12.50, 6141.0),
    (15.0, 7.183, 3268.0),
    (20.0, 3.565, 1485.0),
    (32.0, 1.042, 235.0),
    (47.0, 0.134, 34.0),
    (51.0, 0.034, 21.0),
    (71.0, 0.010, 1.0),
    (84.8, 0.001, 0.1),
)


class AltitudeDomainError(ValueError):
    pass


@dataclass(frozen=True)
class ThermoLayerTable:
    H_b: np.ndarray       # m
    lambda_b: np.ndarray  # K/m
    T_b: np.ndarray       # K
    P_b: np.ndarray       # Pa

    @classmethod
    def standard(cls) -> "ThermoLayerTable":
        a = np.array(THERMO_ROWS)
        return cls(a[:, 0] * 1e3, a[:, 1] * 1e-3, a[:, 2], a[:, 3] * 100.0)


@dataclass(frozen=True)
class RefractiveLayerTable:
    H_i: np.ndarray         # m
    dn_dh: np.ndarray       # 1/m
    n_minus_1: np.ndarray

    @classmethod
    def standard(cls) -> "RefractiveLayerTable":
        a = np.array(REFRACTIVE_ROWS)
        return cls(a[:, 0] * 1e3, a[:, 1] * 1e-9, a[:, 2] * 1e-8)


THERMO = ThermoLayerTable.standard()
REFRACTIVE = RefractiveLayerTable.standard()


def _layer(h: float, table: ThermoLayerTable = THERMO) -> int:
    if not 0.0 <= h <= H_TOP or math.isnan(h):
        raise AltitudeDomainError(f"altitude {h} m outside [0, {H_TOP}] m")
    b = int(np.searchsorted(table.H_b, h, side="right")) - 1
    return min(b, len(table.H_b) - 2)


def temperature(h: float, table: ThermoLayerTable = THERMO) -> float:
    """Temperature in K, linear within each layer from its tabulated base value."""
    b = _layer(h, table)
    return float(table.T_b[b] + table.lambda_b[b] * (h - table.H_b[b]))


def pressure(h: float, table: ThermoLayerTable = THERMO) -> float:
    """Pressure in Pa from the hydrostatic law, anchored at each layer's tabulated base."""
    b = _layer(h, table)
    Hb, lam, Tb, Pb = table.H_b[b], table.lambda_b[b], table.T_b[b], table.P_b[b]
    if lam == 0.0:
        return float(Pb * math.exp(-(h - Hb) * G_ACCEL / (R_AIR * Tb)))
    return float(Pb * (1.0 + lam / Tb * (h - Hb)) ** (-G_ACCEL / (lam * R_AIR)))


def pressure_left_limit(h_boundary: float, table: ThermoLayerTable = THERMO) -> float:
    """Pressure at a layer top evaluated with the layer below (no re-anchoring)."""
    b = int(np.searchsorted(table.H_b, h_boundary, side="left")) - 1
    if b < 0:
        raise AltitudeDomainError("no layer below the ground")
    Hb, lam, Tb, Pb = table.H_b[b], table.lambda_b[b], table.T_b[b], table.P_b[b]
    if lam == 0.0:
        return float(Pb * math.exp(-(h_boundary - Hb) * G_ACCEL / (R_AIR * Tb)))
    return float(Pb * (1.0 + lam / Tb * (h_boundary - Hb)) ** (-G_ACCEL / (lam * R_AIR)))


def standard_dispersion(wavelength: float) -> float:
    """``(n - 1)`` of standard air at wavelength in metres (Birch-Downs dispersion)."""
    lam_um = wavelength * 1e6
    if not 0.3 <= lam_um <= 2.0:
        raise ValueError(f"wavelength {lam_um} um outside the 0.3-2.0 um validity range")
    s = 1.0 / lam_um ** 2
    return (8342.54 + 2406147.0 / (130.0 - s) + 15998.0 / (38.9 - s)) * 1e-8


def refractive_index_edlen(pressure_pa: float, temperature_k: float, wavelength: float) -> float:
    """Refractive index of dry air from the revised Edlen equation.

    Parameters
    ----------
    pressure_pa : float
        Pressure in Pa.
    temperature_k : float
        Temperature in K (converted to Celsius internally).
    wavelength : float
        Vacuum wavelength in metres, within 0.3-2.0 um.
    """
    t = temperature_k - 273.15
    p = pressure_pa
    ns = standard_dispersion(wavelength)
    nm1 = p * ns / 96095.43 * (1.0 + 1e-8 * (0.601 - 0.00972 * t) * p) / (1.0 + 0.0036610 * t)
    return 1.0 + nm1


def refractive_index_layered(h, table: RefractiveLayerTable = REFRACTIVE):
    """Refractive index, piecewise linear between tabulated levels, 1 above the table.

    Interpolating the tabulated values (rather than extrapolating each
    tabulated gradient) keeps the profile continuous and exact at the levels.
    """
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0):
        raise AltitudeDomainError("altitude must be non-negative")
    nm1 = np.interp(h_arr, table.H_i, table.n_minus_1)
    out = np.where(h_arr > table.H_i[-1], 1.0, 1.0 + nm1)
    return float(out) if out.ndim == 0 else out


def number_density_ratio(h, scale_height: float = SCALE_HEIGHT):
    """Relative number density of scatterers, ``exp(-h / H0)``."""
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0):
        raise AltitudeDomainError("altitude must be non-negative")
    out = np.exp(-h_arr / scale_height)
    return float(out) if out.ndim == 0 else out


def profile_rows(step: float = 100.0):
    """Rows ``(h_m, T_K, P_Pa, n_minus_1)`` on a uniform grid up to the table top."""
    hs = np.arange(0.0, H_TOP + 0.5 * step, step)
    hs[-1] = min(hs[-1], H_TOP)
    rows = []
    for h in hs:
        rows.append((float(h), temperature(h), pressure(h), refractive_index_layered(h) - 1.0))
    return rows


def write_profile_csv(path: str | Path, step: float = 100.0) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h_m", "T_K", "P_Pa", "n_minus_1"])
        for row in profile_rows(step):
            w.writerow([f"{v:.10g}" for v in row])
    return path
