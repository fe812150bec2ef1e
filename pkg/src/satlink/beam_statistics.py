"""Channel statistics of a Gaussian beam after a slant turbulent path.

Mean transmittance, second moment of the transmittance by Monte Carlo,
scintillation index, long- and short-term beam radii, beam wandering, and a
phenomenological saturating scintillation model for small apertures.

The structure function used here is

    D_S(r, r') = 2 rho0^(-5/3) int_0^1 (Cn^2 / Cn0^2) |r (1 - xi) + r' xi|^(5/3) dxi,

so at ``r = 0`` every slant integral collapses to ``chi^2 |r'|^(5/3)``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from .numerics import (McEstimate, McSpec, NumericalError, QuadratureSpec, hyp2f3,
                       integrate_adaptive, mc_mean)
from .turbulence_profiles import (AfglWk, Cn2Model, SlantContext, chi_weight,
                                  coherence_radius_rho0, outer_scale, path_integral,
                                  reference_cn2, turbulent_path_length)


@dataclass(frozen=True)
class BeamParams:
    """Gaussian TE00 transmitter and circular receiver.

    ``F = inf`` describes a collimated beam.
    """

    W0: float = 0.02
    F: float = 1e5
    wavelength: float = 840e-9
    aperture_radius_a: float = 0.5

    def __post_init__(self):
        if not (self.W0 > 0 and self.aperture_radius_a > 0 and self.wavelength > 0):
            raise ValueError("W0, aperture radius and wavelength must be positive")
        if self.F == 0:
            raise ValueError("wavefront radius F must be non-zero (use inf for collimated)")

    @property
    def k(self) -> float:
        return 2 * math.pi / self.wavelength


@dataclass(frozen=True)
class DerivedBeamNumbers:
    k: float
    Omega: float
    g_sq: float
    focus_term: float  # (1 - L/F)

    @classmethod
    def at(cls, beam: BeamParams, L: float) -> "DerivedBeamNumbers":
        k = beam.k
        omega = k * beam.W0 ** 2 / (2 * L)
        focus = 1.0 - L / beam.F
        return cls(k, omega, 1.0 + omega * omega * focus * focus, focus)


@dataclass(frozen=True)
class TurbulenceSpec:
    """How the coherence radius and the slant weighting are obtained for a path.

    Parameters
    ----------
    model : Cn2Model
    h0 : float, optional
        Reference height for ``Cn0^2 = Cn^2(h0 sec Z_a)``. Defaults to 10 m
        (5 m for a daytime AFGL/WK model).
    rho0_zenith : float, optional
        Coherence radius at the zenith. When set, the zenith turbulent path
        length is calibrated to reproduce it and scales as ``sec Z_a``.
    L_turb : float, optional
        Fixed turbulent path length overriding both rules above.
    fraction : float
        Threshold defining the top of the turbulent layer.
    """

    model: Cn2Model
    h0: float | None = None
    rho0_zenith: float | None = None
    L_turb: float | None = None
    fraction: float = 1e-3

    @property
    def reference_height(self) -> float:
        if self.h0 is not None:
            return self.h0
        if isinstance(self.model, AfglWk):
            return self.model.reference_height
        return 10.0


@dataclass(frozen=True)
class PathTurbulence:
    """Turbulence summary of one slant path."""

    Cn0_sq: float
    L_turb: float
    rho0: float
    chi_sq: float

    @property
    def kappa(self) -> float:
        """Coefficient of ``|r'|^(5/3)`` in ``D_S(0, r') / 2``."""
        if math.isinf(self.rho0) or self.chi_sq == 0.0:
            return 0.0
        return self.rho0 ** (-5.0 / 3.0) * self.chi_sq


NO_TURBULENCE = PathTurbulence(0.0, 0.0, math.inf, 0.0)


def path_turbulence(spec: TurbulenceSpec, ctx: SlantContext, wavelength: float) -> PathTurbulence:
    Za = ctx.apparent_zenith
    Cn0 = reference_cn2(spec.model, Za, spec.reference_height)
    if spec.L_turb is not None:
        L_turb = spec.L_turb
    elif spec.rho0_zenith is not None:
        Cn0_zen = reference_cn2(spec.model, 0.0, spec.reference_height)
        k = 2 * math.pi / wavelength
        L_turb = spec.rho0_zenith ** (-5.0 / 3.0) / (1.5 * Cn0_zen * k * k) / math.cos(Za)
    else:
        L_turb = turbulent_path_length(spec.model, Za, spec.fraction)
    rho0 = coherence_radius_rho0(Cn0, wavelength, L_turb)
    chi = chi_weight(spec.model, ctx, Cn0) if Cn0 > 0 else 0.0
    return PathTurbulence(Cn0, L_turb, rho0, chi)


# -- structure function and first moment --------------------------------------

def phase_structure_function(r: float, r_prime: float, ctx: SlantContext, model: Cn2Model,
                             rho0: float, Cn0_sq: float) -> float:
    """``D_S(r, r')`` for collinear radial arguments, by adaptive quadrature."""
    if math.isinf(rho0) or Cn0_sq <= 0:
        return 0.0
    if r == 0.0 and r_prime == 0.0:
        return 0.0
    val = path_integral(model, ctx, lambda x: abs(r * (1 - x) + r_prime * x) ** (5.0 / 3.0))
    return 2.0 * rho0 ** (-5.0 / 3.0) * val / Cn0_sq


@dataclass(frozen=True)
class MeanTransmittance:
    value: float
    truncation_radius: float
    error_estimate: float


def mean_transmittance(beam: BeamParams, L: float, turb: PathTurbulence = NO_TURBULENCE,
                       spec: QuadratureSpec = QuadratureSpec(rel_tol=1e-10, abs_tol=1e-15,
                                                             max_depth=2000)) -> MeanTransmittance:
    """Mean transmittance through the aperture.

    The aperture integral of the Bessel kernel is done analytically,
    ``int_0^a r J0(b r) dr = a J1(b a) / b``, leaving

        <eta> = (k a / L) int_0^inf exp[-g^2 r'^2/(2 W0^2) - kappa r'^(5/3)] J1(k a r' / L) dr'.

    The normalization gives ``<eta> -> 1`` as ``a -> inf``. The outer
    integral is truncated where the envelope drops below 1e-12 of its peak.
    """
    d = DerivedBeamNumbers.at(beam, L)
    kappa = turb.kappa
    p = d.g_sq / (2 * beam.W0 ** 2)
    b = d.k * beam.aperture_radius_a / L
    target = math.log(1e12)
    r_max = math.sqrt(target / p)
    if kappa > 0:
        r_max = min(r_max, (target / kappa) ** 0.6)
        # shrink to the actual crossing of the combined exponent
        r_max = _envelope_crossing(p, kappa, target, r_max)

    def f(x):
        return math.exp(-p * x * x - kappa * x ** (5.0 / 3.0)) * special.j1(b * x)

    n_osc = int(b * r_max / math.pi)
    if n_osc > 0:
        zeros = list(special.jn_zeros(1, min(n_osc, 5000)) / b)
        edges = [0.0] + [z for z in zeros if z < r_max] + [r_max]
    else:
        edges = [0.0, r_max]
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = integrate_adaptive(f, (lo, hi), spec)
        total += v
        err += e
    return MeanTransmittance(b * total, r_max, b * err)


def _envelope_crossing(p, kappa, target, hi):
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if p * mid * mid + kappa * mid ** (5.0 / 3.0) < target:
            lo = mid
        else:
            hi = mid
    return hi


def mean_transmittance_quadratic(beam: BeamParams, L: float, turb: PathTurbulence = NO_TURBULENCE) -> float:
    """Gaussian-spot estimate ``1 - exp(-2 a^2 / W_LT^2)``."""
    W = long_term_radius(beam, L, turb)
    return -math.expm1(-2 * beam.aperture_radius_a ** 2 / W ** 2)


def vacuum_radius(beam: BeamParams, L: float) -> float:
    d = DerivedBeamNumbers.at(beam, L)
    return beam.W0 * math.sqrt(d.focus_term ** 2 + d.Omega ** -2)


def long_term_radius(beam: BeamParams, L: float, turb: PathTurbulence = NO_TURBULENCE) -> float:
    d = DerivedBeamNumbers.at(beam, L)
    broad = 0.0 if turb.kappa == 0 else beam.W0 ** 2 * turb.chi_sq / turb.rho0 ** 2
    return beam.W0 * math.sqrt(d.focus_term ** 2 + d.Omega ** -2 * (1.0 + broad))


def short_term_radius(beam: BeamParams, L: float, turb: PathTurbulence = NO_TURBULENCE) -> float:
    d = DerivedBeamNumbers.at(beam, L)
    if turb.kappa == 0:
        broad = 0.0
    else:
        chi = math.sqrt(turb.chi_sq)
        denom = 1.0 + 0.24 * (turb.rho0 / (beam.aperture_radius_a * chi)) ** (1.0 / 3.0)
        broad = beam.W0 ** 2 / turb.rho0 ** 2 * turb.chi_sq / denom
    return beam.W0 * math.sqrt(d.focus_term ** 2 + d.Omega ** -2 * (1.0 + broad))


def short_term_from_wander(W_LT: float, sigma_bw: float) -> float:
    """Cross-check quantity ``sqrt(W_LT^2 - 4 sigma_BW^2)``; NaN when negative."""
    v = W_LT ** 2 - 4 * sigma_bw ** 2
    return math.sqrt(v) if v >= 0 else math.nan


def beam_wander_variance(beam: BeamParams, ctx: SlantContext, model: Cn2Model,
                         turb: PathTurbulence, n_grid: int = 64) -> float:
    """Beam-wandering variance (m^2) with the smoothed von Karman spectrum.

    The short-term radius is taken at distance ``(1 - xi) L_r`` and cached on
    an ``n_grid`` spline in ``xi``; the outer scale uses the height of the
    path point.
    """
    L = ctx.L_r
    grid = np.linspace(0.0, 1.0, n_grid)
    z = np.maximum((1.0 - grid) * L, 1e-9 * L)
    logw = np.log([short_term_radius(beam, float(zz), turb) for zz in z])
    spline = CubicSpline(grid, logw)

    def weight(x):
        w = np.exp(spline(x))
        lo = outer_scale(ctx.height(x))
        return x * x * (w ** (-1.0 / 3.0) + (w * w + lo * lo / (2 * math.pi) ** 2) ** (-1.0 / 6.0))

    return 1.29 * L ** 3 * path_integral(model, ctx, weight)


# -- second moment ------------------------------------------------------------

def _lambda_factor(x):
    """``2 J1(x) / x`` with the removable singularity at 0."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x > 1e-8
    out[nz] = 2.0 * special.j1(x[nz]) / x[nz]
    out[~nz] = 1.0 - x[~nz] ** 2 / 8.0
    return out


@dataclass(frozen=True)
class SecondMoment:
    value: float
    std_err: float
    imag_mean: float
    imag_std_err: float
    n_samples: int
    estimator: str


def eta_second_moment(beam: BeamParams, L: float, turb: PathTurbulence, mc: McSpec = McSpec(),
                      estimator: str = "control") -> SecondMoment:
    """Second moment of the transmittance by importance-sampled Monte Carlo.

    Downlink kernel with the receiver-plane dependence dropped:
    ``J = J1 + J2 - J1 J2`` with
    ``J1 = exp[-kappa (|r1'+r3'|^(5/3) + |r1'-r3'|^(5/3))]`` and ``J2`` the same
    with ``r2'``. Both aperture integrals are done analytically, leaving a
    6-D integral over ``(r1', r2', r3')``; these are drawn from the Gaussian
    weight ``exp[-(r1'^2 + r2'^2 + g^2 r3'^2)/W0^2]`` with ``r3'`` rotated onto
    the x axis (joint rotation invariance).

    ``estimator="raw"`` averages the full kernel. ``estimator="control"``
    averages only ``J - 1 = -(1 - J1)(1 - J2)`` and adds the exact vacuum
    value ``<eta>_vac^2`` (a deterministic beam has ``<eta^2> = <eta>^2``);
    its stopping rule then targets the relative error of the turbulence
    correction itself.

    Only the real part is accumulated into the value; the imaginary part
    vanishes by symmetry and its mean is reported for a self-test.
    """
    if estimator not in ("raw", "control"):
        raise ValueError("estimator must be 'raw' or 'control'")
    d = DerivedBeamNumbers.at(beam, L)
    W0, a = beam.W0, beam.aperture_radius_a
    kappa = turb.kappa
    c = d.k / L  # 2 Omega / W0^2
    bcoef = 2 * d.Omega * d.focus_term / W0 ** 2
    sd = W0 / math.sqrt(2.0)
    sd3 = sd / math.sqrt(d.g_sq)
    pref = (d.k * W0 * a) ** 4 / (4 * L ** 4 * d.g_sq)

    def block(rng: np.random.Generator, n: int):
        r1 = rng.normal(0.0, sd, size=(n, 2))
        r2 = rng.normal(0.0, sd, size=(n, 2))
        r3 = sd3 * np.sqrt(-2.0 * np.log1p(-rng.random(n)))  # Rayleigh radius, azimuth frozen
        phase = bcoef * (r1[:, 0] * r2[:, 0] + r1[:, 1] * r2[:, 1])
        q1 = c * np.hypot(r2[:, 0] + r3, r2[:, 1])
        q2 = c * np.hypot(r2[:, 0] - r3, r2[:, 1])
        amp = _lambda_factor(q1 * a) * _lambda_factor(q2 * a)
        if kappa > 0:
            s1 = np.hypot(r1[:, 0] + r3, r1[:, 1]) ** (5 / 3) + np.hypot(r1[:, 0] - r3, r1[:, 1]) ** (5 / 3)
            s2 = np.hypot(r2[:, 0] + r3, r2[:, 1]) ** (5 / 3) + np.hypot(r2[:, 0] - r3, r2[:, 1]) ** (5 / 3)
            m1 = -np.expm1(-kappa * s1)
            m2 = -np.expm1(-kappa * s2)
            kern = 1.0 - m1 * m2 if estimator == "raw" else -m1 * m2
        else:
            kern = np.ones(n) if estimator == "raw" else np.zeros(n)
        return amp * kern * (np.cos(phase) + 1j * np.sin(phase))

    if estimator == "control" and kappa == 0:
        vac = mean_transmittance(beam, L).value
        return SecondMoment(vac * vac, 0.0, 0.0, 0.0, 0, estimator)

    est: McEstimate = mc_mean(block, mc)
    value = pref * est.mean.real
    se = pref * est.std_err
    if estimator == "control":
        vac = mean_transmittance(beam, L).value
        value += vac * vac
    if est.rel_se > mc.target_rel_se:
        raise NumericalError(f"Monte Carlo relative error {est.rel_se:.3g} exceeds "
                             f"{mc.target_rel_se:.3g} after {est.n_samples} samples")
    return SecondMoment(value, se, pref * est.mean.imag, pref * est.std_err_imag, est.n_samples, estimator)


# -- bundle -------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelMoments:
    eta_mean: float
    eta_sq_mean: float
    scint_index: float
    W_LT: float
    W_ST: float
    sigma_BW: float
    rho0: float
    chi_sq_weight: float
    eta_sq_std_err: float = 0.0
    scint_std_err: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta_mean <= 1.0:
            raise ValueError("mean transmittance outside [0, 1]")


def channel_moments(beam: BeamParams, ctx: SlantContext, spec: TurbulenceSpec,
                    mc: McSpec = McSpec(), estimator: str = "control") -> ChannelMoments:
    """All first- and second-order channel statistics for one slant path."""
    if ctx.direction != "downlink":
        raise ValueError("the second-moment kernel is valid for downlinks only")
    turb = path_turbulence(spec, ctx, beam.wavelength)
    L = ctx.L_r
    m1 = mean_transmittance(beam, L, turb).value
    m2 = eta_second_moment(beam, L, turb, mc, estimator)
    scint = m2.value / (m1 * m1) - 1.0
    if scint < 0:
        if scint < -3 * m2.std_err / (m1 * m1):
            warnings.warn(f"negative scintillation index {scint:.3g} beyond Monte Carlo error", stacklevel=2)
    sigma_bw = math.sqrt(beam_wander_variance(beam, ctx, spec.model, turb))
    return ChannelMoments(
        eta_mean=m1, eta_sq_mean=m2.value, scint_index=scint,
        W_LT=long_term_radius(beam, L, turb), W_ST=short_term_radius(beam, L, turb),
        sigma_BW=sigma_bw, rho0=turb.rho0, chi_sq_weight=turb.chi_sq,
        eta_sq_std_err=m2.std_err, scint_std_err=m2.std_err / (m1 * m1),
    )


# -- phenomenological scintillation --------------------------------------------

KOLMOGOROV_CONST = 0.033


def cutoff_wavenumber(Cn0_sq: float, wavelength: float, H0: float, mu: float, apparent_zenith: float) -> float:
    """Spatial-frequency cutoff ``0.69 mu Cn0^(-6/5) k^(-1/5) (H0 sec Z_a)^(-8/5)``."""
    k = 2 * math.pi / wavelength
    Lt = H0 / math.cos(apparent_zenith)
    return 0.69 * mu * Cn0_sq ** (-0.6) * k ** (-0.2) * Lt ** (-1.6)


def scint_index_phenomenological(a: float, wavelength: float, Cn0_sq: float, H0: float, mu: float,
                                 apparent_zenith: float) -> float:
    """Saturating aperture-averaged scintillation index for an exponential ground layer."""
    dk = cutoff_wavenumber(Cn0_sq, wavelength, H0, mu, apparent_zenith)
    Lt = H0 / math.cos(apparent_zenith)
    x = -(a * dk) ** 2
    return 1.12 * Cn0_sq * dk ** (7.0 / 3.0) * Lt ** 3 * hyp2f3(7 / 6, 1.5, 2.0, 13 / 6, 3.0, x)


# -- export ---------------------------------------------------------------------

MOMENT_COLUMNS = ("Z_a_deg", "eta_mean", "eta2_mean", "scint_index", "W_LT_m", "W_ST_m", "sigma_BW_m")


def write_moments_csv(path: str | Path, rows, header_lines=()) -> Path:
    """Rows are ``(Z_a_deg, ChannelMoments)`` pairs; extra columns carry MC errors."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(list(MOMENT_COLUMNS) + ["eta2_std_err", "scint_std_err", "rho0_m", "chi_sq"])
        for zdeg, m in rows:
            w.writerow([f"{zdeg:.6g}", f"{m.eta_mean:.10e}", f"{m.eta_sq_mean:.10e}", f"{m.scint_index:.10e}",
                        f"{m.W_LT:.10e}", f"{m.W_ST:.10e}", f"{m.sigma_BW:.10e}",
                        f"{m.eta_sq_std_err:.4e}", f"{m.scint_std_err:.4e}", f"{m.rho0:.10e}",
                        f"{m.chi_sq_weight:.10e}"])
    return path


__all__ = [
    "BeamParams", "DerivedBeamNumbers", "TurbulenceSpec", "PathTurbulence", "NO_TURBULENCE",
    "path_turbulence", "phase_structure_function", "MeanTransmittance", "mean_transmittance",
    "mean_transmittance_quadratic", "vacuum_radius", "long_term_radius", "short_term_radius",
    "short_term_from_wander", "beam_wander_variance", "SecondMoment", "eta_second_moment",
    "ChannelMoments", "channel_moments", "cutoff_wavenumber", "scint_index_phenomenological",
    "write_moments_csv",
]
