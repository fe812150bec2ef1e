"""Observer/orbit geometry for circular polar LEO passes.

All angles are radians and all lengths metres internally.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

R_EARTH = 6_371_000.0
V_EQUATOR = 1669.8 / 3.6  # m/s
N0_GROUND = 1.00027


class DomainError(ValueError):
    """Argument outside the domain on which a geometric relation holds."""


@dataclass(frozen=True)
class EarthConsts:
    R_earth: float = R_EARTH
    v_eq: float = V_EQUATOR


EARTH = EarthConsts()


@dataclass(frozen=True)
class ObserverGeo:
    latitude_psi: float
    altitude_above_sea: float = 0.0

    def __post_init__(self):
        if not -math.pi / 2 <= self.latitude_psi <= math.pi / 2:
            raise DomainError("latitude must lie in [-pi/2, pi/2]")
        if self.altitude_above_sea < 0:
            raise DomainError("observer altitude must be non-negative")

    @classmethod
    def from_degrees(cls, lat_deg: float, altitude_m: float = 0.0) -> "ObserverGeo":
        return cls(math.radians(lat_deg), altitude_m)


@dataclass(frozen=True)
class OrbitSpec:
    """Circular polar orbit.

    ``inclination_delta_iota`` is the angle between the observer's meridian
    plane and the orbit plane.
    """

    altitude_H: float
    inclination_delta_iota: float = 0.0
    orbit_period_T_sat: float = 100 * 60.0
    revolutions_n: int = 0

    def __post_init__(self):
        if self.altitude_H <= 0:
            raise DomainError("orbit altitude must be positive")
        if self.orbit_period_T_sat <= 0:
            raise DomainError("orbit period must be positive")
        if not 160e3 <= self.altitude_H <= 2000e3:
            warnings.warn(f"orbit altitude {self.altitude_H / 1e3:.0f} km is outside the LEO range 160-2000 km",
                          stacklevel=3)

    @property
    def angular_speed(self) -> float:
        return 2 * math.pi / self.orbit_period_T_sat


def slant_range(orbit: OrbitSpec | float, true_zenith_Z, earth: EarthConsts = EARTH):
    """Straight-line distance from the ground station to the satellite.

    ``orbit`` may be an :class:`OrbitSpec` or a bare altitude in metres.
    Accepts scalars or arrays of zenith angles in ``[0, pi/2]``.
    """
    H = orbit.altitude_H if isinstance(orbit, OrbitSpec) else float(orbit)
    Z = np.asarray(true_zenith_Z, dtype=float)
    if np.any((Z < 0) | (Z > math.pi / 2 + 1e-15)) or np.any(~np.isfinite(Z)):
        raise DomainError("zenith angle must lie in [0, pi/2]")
    R = earth.R_earth
    c = np.cos(Z)
    # R*cos Z subtracted from a nearly equal root at small Z; rewrite to keep precision
    root = np.sqrt(H * H + 2 * H * R + (R * c) ** 2)
    L = (H * H + 2 * H * R) / (root + R * c)
    return float(L) if L.ndim == 0 else L


def horizon_slant_range(H: float, earth: EarthConsts = EARTH) -> float:
    R = earth.R_earth
    return math.sqrt((R + H) ** 2 - R * R)


def min_zenith(observer: ObserverGeo | float, inclination: float) -> float:
    """Smallest zenith angle reached on a pass with the given inclination."""
    psi = observer.latitude_psi if isinstance(observer, ObserverGeo) else float(observer)
    if abs(inclination) >= math.pi / 2:
        raise DomainError("|inclination| must be below pi/2")
    s = math.cos(psi) * math.sin(inclination)
    # arcsin form is exact at zero and avoids arccos(sqrt(1 - s^2)) rounding
    return math.asin(min(abs(s), 1.0))


def declination_of_min_zenith(observer: ObserverGeo | float, inclination: float) -> float:
    """Satellite declination at which the minimal zenith angle is reached."""
    psi = observer.latitude_psi if isinstance(observer, ObserverGeo) else float(observer)
    denom = math.sqrt(1 - (math.cos(psi) * math.sin(inclination)) ** 2)
    arg = math.cos(psi) * math.cos(inclination) / denom
    delta = math.acos(min(max(arg, -1.0), 1.0))
    return math.copysign(delta, psi) if psi != 0 else delta


def inclination_after_revolutions(orbit: OrbitSpec, earth: EarthConsts = EARTH) -> float:
    """Apparent orbit inclination built up by Earth rotation over ``n`` revolutions."""
    if orbit.revolutions_n < 0:
        raise DomainError("revolutions must be non-negative")
    return orbit.revolutions_n * orbit.orbit_period_T_sat * earth.v_eq / earth.R_earth


def apparent_zenith(true_zenith_Z, n0: float = N0_GROUND):
    """Zenith angle under which a refracted ray arrives at the ground."""
    if n0 < 1:
        raise DomainError("refractive index must be >= 1")
    Z = np.asarray(true_zenith_Z, dtype=float)
    out = np.arcsin(np.sin(Z) / n0)
    return float(out) if out.ndim == 0 else out


def true_zenith(apparent_zenith_Za, n0: float = N0_GROUND):
    """Inverse of :func:`apparent_zenith` on ``[0, arcsin(1/n0)]``."""
    Za = np.asarray(apparent_zenith_Za, dtype=float)
    s = n0 * np.sin(Za)
    if np.any(s > 1 + 1e-15):
        raise DomainError("apparent zenith beyond the refracted horizon")
    out = np.arcsin(np.minimum(s, 1.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ZenithState:
    zenith: float
    below_horizon: bool


def central_angle(observer: ObserverGeo | float, inclination: float, declination: float) -> float:
    """Angle at the Earth centre between observer and sub-satellite point (unclamped)."""
    psi = observer.latitude_psi if isinstance(observer, ObserverGeo) else float(observer)
    # haversine form of sin(psi) sin(delta) + cos(psi) cos(delta) cos(di); exact near zero
    hav = (math.sin(0.5 * (psi - declination)) ** 2
           + math.cos(psi) * math.cos(declination) * math.sin(0.5 * inclination) ** 2)
    return 2.0 * math.asin(math.sqrt(min(max(hav, 0.0), 1.0)))


def zenith_from_orbit_state(observer: ObserverGeo | float, inclination: float,
                            declination_delta: float) -> ZenithState:
    """Zenith angle from latitude, inclination and declination by spherical trigonometry.

    Observer parallax is neglected, so the geocentric angle is taken as the
    zenith angle. Values past the horizon are clamped to ``pi/2`` and flagged.
    """
    Z = central_angle(observer, inclination, declination_delta)
    if Z > math.pi / 2:
        return ZenithState(math.pi / 2, True)
    return ZenithState(Z, False)


def topocentric_zenith(central: float, H: float, earth: EarthConsts = EARTH) -> float:
    """Zenith angle seen from the ground for a satellite at geocentric angle ``central``."""
    k = earth.R_earth / (earth.R_earth + H)
    return math.atan2(math.sin(central), math.cos(central) - k)


def pass_start_declination(observer: ObserverGeo | float, inclination: float) -> float:
    """Declination where the spherical-trigonometry zenith angle first reaches 90 deg.

    Diverges for an equatorial observer (``cot psi`` blows up): the limit is
    ``-pi/2`` when approached from positive latitude and ``+pi/2`` from
    negative latitude, i.e. the pass starts at a pole. At exactly zero
    latitude :class:`DomainError` is raised rather than picking a branch.
    """
    psi = observer.latitude_psi if isinstance(observer, ObserverGeo) else float(observer)
    if psi == 0.0:
        raise DomainError("pass start declination is undefined for an equatorial observer")
    return -math.atan(math.cos(inclination) / math.tan(psi))


def communication_arc(H: float, earth: EarthConsts = EARTH) -> float:
    """Orbit arc above the horizon of an observer directly under the track."""
    R = earth.R_earth
    return 2 * math.atan(math.sqrt(H * H + 2 * R * H) / R)


def parallax_flag(orbit: OrbitSpec, observer: ObserverGeo) -> bool:
    """True when neglecting observer parallax during a pass is questionable."""
    return orbit.altitude_H < 300e3 and abs(observer.latitude_psi) < math.radians(20)


@dataclass(frozen=True)
class PassSample:
    time: float
    declination: float
    zenith: float
    slant_range: float


def pass_timeline(observer: ObserverGeo, orbit: OrbitSpec, time_step: float,
                  earth: EarthConsts = EARTH) -> list[PassSample]:
    """Zenith angle and slant range over one above-horizon pass.

    The declination advances as ``omega_sat * (t - t_pole)``. Time is
    reported from the rise, declination is the geocentric value. The zenith
    angle is the angle seen from the ground station, obtained from the
    geocentric observer-satellite angle, which makes the rise and set points
    sit exactly at 90 deg and gives the zenith orbit a window of
    ``communication_arc(H) / omega_sat``. Samples lie on a ``time_step`` grid
    centred on the culmination, with the rise and set instants appended.
    Returns an empty list when the satellite never rises.
    """
    if time_step <= 0:
        raise DomainError("time_step must be positive")
    H = orbit.altitude_H
    di = orbit.inclination_delta_iota
    k = earth.R_earth / (earth.R_earth + H)
    cos_gmin = math.cos(min_zenith(observer, di))
    if cos_gmin <= k:
        return []
    # cos(central angle) = amp * cos(delta - delta_mid)
    psi = observer.latitude_psi
    a = math.sin(psi)
    b = math.cos(psi) * math.cos(di)
    amp = math.hypot(a, b)
    delta_mid = math.atan2(a, b)
    half = math.acos(min(k / amp, 1.0))
    omega = orbit.angular_speed
    duration = 2 * half / omega
    # samples are placed symmetrically about the culmination, which is always included
    mid = 0.5 * duration
    n = int(math.floor(mid / time_step * (1 + 1e-12)))
    offsets = [k * time_step for k in range(-n, n + 1)]
    times = [mid + o for o in offsets]
    if times[0] > 1e-9 * duration:
        times = [0.0] + times + [duration]
    else:
        times[0], times[-1] = 0.0, duration
    out = []
    for t in times:
        delta = delta_mid - half + omega * t
        g = central_angle(psi, di, delta)
        Z = min(topocentric_zenith(g, H, earth), math.pi / 2)
        out.append(PassSample(t, delta, Z, slant_range(H, Z, earth)))
    return out
