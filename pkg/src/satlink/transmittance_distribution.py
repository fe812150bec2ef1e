"""Probability distribution of the channel transmittance.

The distribution mixes a truncated log-normal law, conditioned on the
offset ``r0`` of the beam centroid from the aperture centre, over the
Rayleigh-distributed centroid offset:

    P(eta) = int d^2 r0  P(eta | r0) rho(r0),    rho = N(0, sigma^2 I_2).

The conditional moments decay as ``exp[-(r0/R)^lambda]`` with shape
parameters fixed by the short-term beam radius and the aperture radius.
Active tracking replaces the wander width in ``rho`` by ``theta_tr L_r``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special

from .numerics import QuadratureSpec, bessel_i0e, bessel_i1e, integrate_adaptive, normal_cdf

U_MAX = 8.0  # Rayleigh tail beyond 8 sigma carries exp(-32) of the mass
Z_SPAN = 12.0  # standard-normal half width kept in the log-normal variable

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


def _gauss_nodes(edges, per_panel=_GL_X, weights=_GL_W):
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        xs.append(lo + half * (per_panel + 1.0))
        ws.append(half * weights)
    return np.concatenate(xs), np.concatenate(ws)


_U_NODES, _U_WEIGHTS = _gauss_nodes([0.0, 1.0, 2.0, 3.0, 4.5, 6.0, U_MAX])
_RAYLEIGH_W = _U_WEIGHTS * _U_NODES * np.exp(-0.5 * _U_NODES ** 2)


def _one_minus_scaled_i0(y: float, terms: int = 24) -> float:
    """``1 - exp(-y) I0(y)`` from ``sum_n (-1)^n (2n)! / (n!^3 2^n) y^n``."""
    total, c = 0.0, 1.0
    for n in range(1, terms):
        c *= -(2 * n) * (2 * n - 1) / (n * n * n * 2) * y
        total -= c
    return total


def shape_parameters(a: float, W_ST: float) -> tuple[float, float]:
    """Scale ``R`` (m) and exponent ``lambda`` of the conditional-moment decay."""
    if not (a > 0 and W_ST > 0):
        raise ValueError("aperture radius and short-term radius must be positive")
    x = a * a / (W_ST * W_ST)
    # exp(-4x) I_n(4x) evaluated with scaled Bessel functions
    i0s = bessel_i0e(4 * x)
    i1s = bessel_i1e(4 * x)
    if x < 1e-2:
        # the direct form cancels for small x; use the series of e^{-y} I0(y)
        denom = _one_minus_scaled_i0(4 * x)
    else:
        denom = 1.0 - i0s
    log_term = math.log(2 * -math.expm1(-2 * x) / denom)
    lam = 8 * x * i1s / denom / log_term
    R = a * log_term ** (-1.0 / lam)
    return R, lam


def _wander_integral(ratio: float, lam: float, factor: float) -> float:
    """``int_0^inf xi exp(-xi^2/2) exp(-factor (ratio xi)^lam) dxi``."""
    if ratio == 0.0:
        return 1.0
    v, _ = integrate_adaptive(lambda s: s * math.exp(-0.5 * s * s - factor * (ratio * s) ** lam),
                              (0.0, 40.0), QuadratureSpec(rel_tol=1e-12, abs_tol=1e-16))
    return v


@dataclass(frozen=True)
class PdtModel:
    """Built transmittance distribution.

    ``sigma_bw_or_tr`` is the width of the centroid distribution used in the
    mixture (the tracking width when tracking is applied). ``sigma_r_sq``
    is the conditional log-normal variance and ``mu_0`` the conditional
    location at zero offset; ``mu(r0) = mu_0 + (r0/R)^lambda``.
    """

    eta0: float
    zeta0_sq: float
    R_scale: float
    lambda_shape: float
    sigma_bw_or_tr: float
    aperture_a: float
    W_ST: float
    eta_mean_input: float = math.nan
    eta2_mean_input: float = math.nan

    def __post_init__(self):
        if not (self.R_scale > 0 and self.lambda_shape > 0):
            raise ValueError("R and lambda must be positive")
        if self.sigma_bw_or_tr < 0:
            raise ValueError("centroid spread must be non-negative")
        if not self.zeta0_sq > self.eta0 ** 2:
            raise ValueError("conditional variance parameter must be positive (zeta0^2 > eta0^2)")

    @property
    def mu_0(self) -> float:
        return -math.log(self.eta0 ** 2 / math.sqrt(self.zeta0_sq))

    @property
    def sigma_r_sq(self) -> float:
        return math.log(self.zeta0_sq / self.eta0 ** 2)

    @property
    def sigma_r(self) -> float:
        return math.sqrt(self.sigma_r_sq)

    def mu(self, r0):
        return self.mu_0 + (np.asarray(r0, dtype=float) / self.R_scale) ** self.lambda_shape

    def _mix_nodes(self):
        """Offsets and probability weights of the centroid quadrature."""
        if self.sigma_bw_or_tr == 0.0:
            return np.zeros(1), np.ones(1)
        return _U_NODES * self.sigma_bw_or_tr, _RAYLEIGH_W


def build_pdt(eta_mean: float, eta2_mean: float, W_ST: float, sigma_BW: float, aperture_a: float,
              tracking_theta: float | None = None, L_r: float | None = None) -> PdtModel:
    """Build the distribution from the channel moments.

    ``eta0`` and ``zeta0^2`` always use the turbulent wander ``sigma_BW``; with
    ``tracking_theta`` the mixture width becomes ``tracking_theta * L_r``.
    """
    if not 0.0 < eta_mean < 1.0:
        raise ValueError("mean transmittance must lie in (0, 1)")
    if not eta_mean ** 2 <= eta2_mean <= eta_mean:
        raise ValueError("second moment violates <eta>^2 <= <eta^2> <= <eta>")
    if W_ST <= 0 or sigma_BW < 0:
        raise ValueError("W_ST must be positive and sigma_BW non-negative")
    R, lam = shape_parameters(aperture_a, W_ST)
    ratio = sigma_BW / R
    eta0 = eta_mean / _wander_integral(ratio, lam, 1.0)
    zeta0_sq = eta2_mean / _wander_integral(ratio, lam, 2.0)
    if tracking_theta is not None:
        if L_r is None:
            raise ValueError("tracking requires the path length L_r")
        spread = tracking_theta * L_r
    else:
        spread = sigma_BW
    return PdtModel(eta0, zeta0_sq, R, lam, spread, aperture_a, W_ST, eta_mean, eta2_mean)


def _log_cdf_at_one(mu, sigma):
    return normal_cdf(mu / sigma)


def _conditional_density(model: PdtModel, eta, r0):
    s = model.sigma_r
    mu = model.mu(r0)
    ln = np.log(eta)
    dens = np.exp(-0.5 * ((ln + mu) / s) ** 2) / (math.sqrt(2 * math.pi) * s * eta)
    return dens / _log_cdf_at_one(mu, s)


def pdt_density(model: PdtModel, eta: float, spec: QuadratureSpec = QuadratureSpec(rel_tol=1e-10,
                                                                                    abs_tol=1e-14)) -> float:
    """Density at one point by adaptive quadrature over the centroid offset."""
    if not 0.0 < eta <= 1.0:
        return 0.0
    if model.sigma_bw_or_tr == 0.0:
        return float(_conditional_density(model, eta, 0.0))
    sig = model.sigma_bw_or_tr

    def f(u):
        return u * math.exp(-0.5 * u * u) * float(_conditional_density(model, eta, u * sig))

    v, _ = integrate_adaptive(f, (0.0, U_MAX), spec)
    return v


def pdt_density_grid(model: PdtModel, eta) -> np.ndarray:
    """Vectorized density by fixed Gauss-Legendre mixing over the offset."""
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    out = np.zeros_like(eta)
    inside = (eta > 0) & (eta <= 1)
    r0, w = model._mix_nodes()
    e = eta[inside][:, None]
    out[inside] = np.sum(w[None, :] * _conditional_density(model, e, r0[None, :]), axis=1)
    return out


def pdt_cdf(model: PdtModel, eta) -> np.ndarray:
    """Cumulative distribution, from the closed-form conditional log-normal CDF."""
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    out = np.where(eta >= 1.0, 1.0, 0.0)
    inside = (eta > 0) & (eta < 1)
    r0, w = model._mix_nodes()
    s = model.sigma_r
    mu = model.mu(r0)[None, :]
    ln = np.log(eta[inside])[:, None]
    cond = normal_cdf((ln + mu) / s) / normal_cdf(mu / s)
    out[inside] = np.sum(w[None, :] * cond, axis=1)
    return out


def pdt_sample(model: PdtModel, seed: int, n: int) -> np.ndarray:
    """Two-stage sampling: Rayleigh centroid offset, then truncated log-normal transmittance."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    u1 = rng.random(n)
    u2 = rng.random(n)
    r0 = model.sigma_bw_or_tr * np.sqrt(-2.0 * np.log1p(-u1))
    mu = model.mu(r0)
    s = model.sigma_r
    # inverse CDF of the standard normal truncated to z <= mu/s
    z = special.ndtri(u2 * normal_cdf(mu / s))
    return np.exp(s * z - mu)


def average_over_pdt(model: PdtModel, f: Callable, method: str = "gauss",
                     spec: QuadratureSpec = QuadratureSpec(rel_tol=1e-9, abs_tol=1e-12)) -> float:
    """Channel average ``int_0^1 f(eta) P(eta) d eta``.

    The integral is taken in the order offset -> log-normal variable
    ``z = (ln eta + mu) / sigma_r``, in which the conditional law is a
    standard normal truncated at ``mu / sigma_r``. ``method="gauss"`` uses
    fixed composite Gauss-Legendre rules with ``f`` called on arrays;
    ``method="adaptive"`` nests adaptive quadrature with scalar calls.
    """
    s = model.sigma_r
    r0, w = model._mix_nodes()
    if method == "gauss":
        total = 0.0
        for ri, wi in zip(r0, w):
            mu = float(model.mu(ri))
            hi = min(mu / s, Z_SPAN)
            lo = -Z_SPAN
            if hi <= lo:
                continue
            zs, zw = _gauss_nodes(np.linspace(lo, hi, 9))
            phi = np.exp(-0.5 * zs * zs) / math.sqrt(2 * math.pi)
            vals = np.asarray(f(np.exp(s * zs - mu)), dtype=float)
            total += wi * float(np.sum(zw * phi * vals)) / float(normal_cdf(mu / s))
        return total
    if method != "adaptive":
        raise ValueError("method must be 'gauss' or 'adaptive'")

    def inner(rr):
        mu = float(model.mu(rr))
        hi = min(mu / s, Z_SPAN)
        if hi <= -Z_SPAN:
            return 0.0
        v, _ = integrate_adaptive(lambda z: math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
                                  * float(f(math.exp(s * z - mu))), (-Z_SPAN, hi), spec)
        return v / float(normal_cdf(mu / s))

    if model.sigma_bw_or_tr == 0.0:
        return inner(0.0)
    sig = model.sigma_bw_or_tr
    v, _ = integrate_adaptive(lambda u: u * math.exp(-0.5 * u * u) * inner(u * sig), (0.0, U_MAX), spec)
    return v


def pdt_moments(model: PdtModel, orders=(1, 2, 3)) -> tuple[float, ...]:
    return tuple(average_over_pdt(model, lambda e, p=p: e ** p) for p in orders)


def pdt_summary(model: PdtModel) -> dict:
    m1, m2, m3 = pdt_moments(model)
    var = m2 - m1 * m1
    skew = (m3 - 3 * m1 * var - m1 ** 3) / var ** 1.5 if var > 0 else 0.0
    return {"eta_mean": m1, "eta2_mean": m2, "skew": skew,
            "mass_below_0.01": float(pdt_cdf(model, 0.01)[0])}


def write_pdt_files(model: PdtModel, csv_path: str | Path, json_path: str | Path, n_grid: int = 2048,
                    header_lines=()) -> tuple[Path, Path]:
    """Density on an ``n_grid`` grid over (0, 1] plus a JSON summary."""
    csv_path, json_path = Path(csv_path), Path(json_path)
    grid = (np.arange(n_grid) + 0.5) / n_grid
    dens = pdt_density_grid(model, grid)
    with csv_path.open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["eta", "density"])
        for e, d in zip(grid, dens):
            w.writerow([f"{e:.10g}", f"{d:.10e}"])
    json_path.write_text(json.dumps(pdt_summary(model), indent=2, sort_keys=True) + "\n")
    return csv_path, json_path
