"""Deterministic absorption and scattering loss along the slant path."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .numerics import QuadratureSpec, integrate_adaptive
from .standard_atmosphere import SCALE_HEIGHT


@dataclass(frozen=True)
class ExtinctionParams:
    """Sea-level extinction coefficient (1/km) and density scale height (m)."""

    beta_ext_0: float = 5e-3
    scale_height: float = SCALE_HEIGHT

    def __post_init__(self):
        if self.beta_ext_0 < 0:
            raise ValueError("extinction coefficient must be non-negative")
        if self.scale_height <= 0:
            raise ValueError("scale height must be positive")


def extinction_factor(apparent_zenith_Za: float, L_r: float,
                      params: ExtinctionParams = ExtinctionParams()) -> float:
    """Closed-form transmission for an exponentially thinning atmosphere.

    The observer is at sea level and the path is straight with height
    ``h = s cos(Z_a)``. ``L_r`` may be ``math.inf``.
    """
    if not L_r > 0:
        raise ValueError("path length must be positive")
    Hs = params.scale_height / math.cos(apparent_zenith_Za)
    # beta is per km, lengths are in metres
    return math.exp(-params.beta_ext_0 * Hs / 1000.0 * -math.expm1(-L_r / Hs))


def extinction_factor_quadrature(apparent_zenith_Za: float, L_r: float,
                                 params: ExtinctionParams = ExtinctionParams(),
                                 observer_altitude: float = 0.0,
                                 spec: QuadratureSpec = QuadratureSpec(rel_tol=1e-12, abs_tol=1e-16)) -> float:
    """Transmission by integrating the local extinction coefficient along the path.

    Supports an elevated observer by evaluating the density ratio at
    ``observer_altitude + s cos(Z_a)``.
    """
    if not L_r > 0:
        raise ValueError("path length must be positive")
    c = math.cos(apparent_zenith_Za)
    H0 = params.scale_height
    beta_per_m = params.beta_ext_0 / 1000.0

    def beta(s):
        return beta_per_m * math.exp(-(observer_altitude + s * c) / H0)

    tau, _ = integrate_adaptive(beta, (0.0, L_r), spec)
    return math.exp(-tau)
