"""Finite-key vacuum + weak-decoy BB84 over a fluctuating channel.

Every gain, Chernoff bound and single-photon estimate is written as a
function of the instantaneous transmittance ``eta`` and then averaged over
the channel distribution. A channel is either a :class:`PdtModel` or a
fixed transmittance (a plain float).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .transmittance_distribution import PdtModel, average_over_pdt

Channel = PdtModel | float


@dataclass(frozen=True)
class DecoyConfig:
    """QKD system parameters.

    ``vacuum_counts`` is the number of sifted clicks registered for vacuum
    pulses; with the default 0 the background yield equals the dark-count
    yield ``Y0_dark``.
    """

    mu_s: float = 0.8
    mu_d: float = 0.1
    N: float = 1e11
    rate_rN: float = 150e6
    p_s: float = 0.65
    p_d: float = 0.25
    p_x: float = 0.6
    eta_det: float = 0.6
    chi_opt: float = 0.84
    Y0_dark: float = 5.89e-7
    e_det: float = 0.01
    e0: float = 0.5
    failure_eps: float = 1e-5
    f_EC: float = 1.16
    vacuum_counts: float = 0.0
    finite_key: bool = True

    def __post_init__(self):
        if not 0 < self.mu_d < self.mu_s < 1:
            raise ValueError("intensities must satisfy 0 < mu_d < mu_s < 1")
        if not (0 <= self.p_s <= 1 and 0 <= self.p_d <= 1 and self.p_s + self.p_d <= 1 + 1e-15):
            raise ValueError("generation probabilities must be in [0, 1] with p_s + p_d <= 1")
        for name in ("p_x", "eta_det", "chi_opt", "e_det", "e0"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 < self.failure_eps < 1:
            raise ValueError("failure_eps must lie in (0, 1)")
        if self.N <= 0 or self.rate_rN <= 0 or self.Y0_dark < 0 or self.f_EC < 1:
            raise ValueError("N and rate must be positive, Y0 non-negative, f_EC >= 1")

    @property
    def p_v(self) -> float:
        return max(0.0, 1.0 - self.p_s - self.p_d)

    def eta_d(self, chi_ext: float) -> float:
        return self.eta_det * chi_ext * self.chi_opt

    def Y0(self) -> float:
        """Background yield from the vacuum-decoy counts plus dark counts."""
        denom = self.N * (math.exp(-self.mu_s) * self.p_s + math.exp(-self.mu_d) * self.p_d + self.p_v)
        return self.vacuum_counts / denom + self.Y0_dark


# -- elementary functions ----------------------------------------------------------

def binary_entropy(x):
    """``-x log2 x - (1-x) log2 (1-x)`` with ``0 log 0 = 0``."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("binary entropy argument must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(x > 0, x * np.log2(x), 0.0) - np.where(x < 1, (1 - x) * np.log2(1 - x), 0.0)
    return float(h) if h.ndim == 0 else h


def overall_gain(eta, mu: float, cfg: DecoyConfig, chi_ext: float = 1.0):
    """Click probability per pulse of mean photon number ``mu``."""
    return 1.0 - np.exp(-cfg.eta_d(chi_ext) * np.asarray(eta, dtype=float) * mu) * (1.0 - cfg.Y0())


def overall_error_gain(eta, mu: float, cfg: DecoyConfig, chi_ext: float = 1.0):
    Y0 = cfg.Y0()
    return cfg.e0 * Y0 + cfg.e_det * -np.expm1(-cfg.eta_d(chi_ext) * np.asarray(eta, dtype=float) * mu) * (1 - Y0)


class InsufficientStatistics(ValueError):
    pass


def chernoff_delta(x, eps: float, strict: bool = False):
    """Relative Chernoff deviation for an expected count ``x`` at failure probability ``eps``.

    Defined for ``x + ln(eps/2) > 0``. Below that threshold the bound is
    meaningless; ``inf`` is returned (or :class:`InsufficientStatistics`
    raised when ``strict``).
    """
    le = math.log(eps / 2)
    x = np.asarray(x, dtype=float)
    ok = x + le > 0
    if strict and not np.all(ok):
        raise InsufficientStatistics("expected count too small for the Chernoff bound")
    with np.errstate(invalid="ignore", divide="ignore"):
        d = (-3 * le + np.sqrt(le * le - 8 * le * x)) / (2 * (x + le))
    d = np.where(ok, d, np.inf)
    return float(d) if d.ndim == 0 else d


# -- per-eta bounds ---------------------------------------------------------------

@dataclass(frozen=True)
class EtaBounds:
    """Functions of ``eta`` for one configuration and extinction."""

    cfg: DecoyConfig
    chi_ext: float

    def _delta(self, x):
        if not self.cfg.finite_key:
            return np.zeros_like(np.asarray(x, dtype=float))
        return chernoff_delta(x, self.cfg.failure_eps)

    def _lower(self, value, count):
        value = np.asarray(value, dtype=float)
        return np.where(value == 0.0, 0.0, value / (1.0 + self._delta(count)))

    def _upper(self, value, count):
        # a quantity that is exactly zero stays zero; otherwise the bound is void once delta >= 1
        value = np.asarray(value, dtype=float)
        d = self._delta(count)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(d < 1.0, value / (1.0 - np.minimum(d, 1.0 - 1e-300)), np.inf)
        return np.where(value == 0.0, 0.0, out)

    def counts(self, basis: str):
        c = self.cfg
        frac = c.p_x if basis == "x" else 1.0 - c.p_x
        return c.N * c.p_s * frac, c.N * c.p_d * frac

    def Q(self, eta, mu):
        return overall_gain(eta, mu, self.cfg, self.chi_ext)

    def EQ(self, eta, mu):
        return overall_error_gain(eta, mu, self.cfg, self.chi_ext)

    def Y0_bounds(self):
        c = self.cfg
        Y0 = c.Y0()
        n_v = c.N * c.p_v
        return float(self._lower(Y0, n_v * Y0)), float(self._upper(Y0, n_v * Y0))

    def Q_d_lower(self, eta, basis):
        _, n_d = self.counts(basis)
        q = self.Q(eta, self.cfg.mu_d)
        return self._lower(q, n_d * q)

    def Q_s_upper(self, eta, basis):
        n_s, _ = self.counts(basis)
        q = self.Q(eta, self.cfg.mu_s)
        return self._upper(q, n_s * q)

    def EQ_d_upper(self, eta):
        _, n_d = self.counts("x")
        v = self.EQ(eta, self.cfg.mu_d)
        return self._upper(v, n_d * v)

    def Y1_lower_raw(self, eta, basis):
        c = self.cfg
        ms, md = c.mu_s, c.mu_d
        _, Y0U = self.Y0_bounds()
        return ms / (ms * md - md * md) * (
            self.Q_d_lower(eta, basis) * math.exp(md)
            - md * md / (ms * ms) * self.Q_s_upper(eta, basis) * math.exp(ms)
            - (ms * ms - md * md) / (ms * ms) * Y0U)

    def Y1_lower(self, eta, basis):
        return np.maximum(self.Y1_lower_raw(eta, basis), 0.0)

    def e1x_upper(self, eta):
        """Single-photon phase-error bound, capped at 1/2 (no key from single photons)."""
        c = self.cfg
        Y0L, _ = self.Y0_bounds()
        y1 = self.Y1_lower(eta, "x")
        num = self.EQ_d_upper(eta) * math.exp(c.mu_d) - c.e0 * Y0L
        with np.errstate(divide="ignore", invalid="ignore"):
            e = np.where(y1 > 0, num / (c.mu_d * np.where(y1 > 0, y1, 1.0)), 0.5)
        return np.clip(e, 0.0, 0.5)

    def Q1_lower(self, eta, basis):
        c = self.cfg
        return self.Y1_lower(eta, basis) * c.mu_s * math.exp(-c.mu_s)

    def M1_lower(self, eta, basis):
        c = self.cfg
        return self.Y1_lower(eta, basis) * c.N * (math.exp(-c.mu_s) * c.mu_s * c.p_s
                                                  + math.exp(-c.mu_d) * c.mu_d * c.p_d)

    def p1_signal(self):
        c = self.cfg
        a = c.p_s * math.exp(-c.mu_s) * c.mu_s
        b = c.p_d * math.exp(-c.mu_d) * c.mu_d
        return a / (a + b)

    def M1_signal_z_lower(self, eta):
        p1 = self.p1_signal()
        m = p1 * self.M1_lower(eta, "z")
        with np.errstate(invalid="ignore"):
            return np.where(m > 0, np.maximum((1.0 - self._delta(m)) * m, 0.0), 0.0)


def channel_average(channel: Channel, f: Callable) -> float:
    if isinstance(channel, PdtModel):
        return average_over_pdt(channel, f)
    eta = float(channel)
    if not 0 <= eta <= 1:
        raise ValueError("fixed transmittance must lie in [0, 1]")
    return float(np.asarray(f(np.array([eta])), dtype=float)[0])


def channel_mean(channel: Channel) -> float:
    return channel_average(channel, lambda e: e)


# -- theta solve ---------------------------------------------------------------

THETA_SENTINEL = 1.0


def solve_theta_upper(M1x: float, M1sz: float, e1x: float, eps: float, tol: float = 1e-10) -> float:
    """Phase-error shift ``theta^U`` from the finite-sample sampling bound.

    Solves ``eps = A 2^(-(M1x + M1sz) xi(theta))`` with
    ``A = sqrt(M1x + M1sz) / sqrt(e1x (1 - e1x) M1x M1sz)`` and
    ``xi(theta) = (ln 2 / 2) q (1 - q) theta^2 / ((1 - e1x) e1x)``,
    ``q = M1x / (M1x + M1sz)``, by bisection on ``(0, 1 - e1x)``.
    Returns 0 when the bound already holds at ``theta = 0`` and
    :data:`THETA_SENTINEL` when no root exists.
    """
    if not (M1x > 0 and M1sz > 0) or not 0 < e1x < 1:
        return THETA_SENTINEL
    M = M1x + M1sz
    q = M1x / M
    logA = 0.5 * math.log(M) - 0.5 * math.log(e1x * (1 - e1x) * M1x * M1sz)
    c = 0.5 * math.log(2) * q * (1 - q) / ((1 - e1x) * e1x)

    def g(theta):
        # log of the right-hand side minus log(eps); decreasing in theta
        return logA - M * c * theta * theta * math.log(2) - math.log(eps)

    hi = 1.0 - e1x
    if g(0.0) <= 0:
        return 0.0
    if g(hi) > 0:
        return THETA_SENTINEL
    return _bisect(g, 0.0, hi, tol)


def _bisect(g, lo, hi, tol):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


# -- key rate -----------------------------------------------------------------------

@dataclass(frozen=True)
class KeyRateResult:
    qber: float
    key_rate_lower: float
    key_rate_unclamped: float
    Q_mu_s_mean: float
    Y1_L: dict
    e1_xU: float
    e1_U: dict
    theta_U: float
    sifted_counts: dict
    eta_mean: float
    flags: tuple = field(default_factory=tuple)

    @property
    def clamped(self) -> bool:
        return "key_rate_clamped" in self.flags

    def key_rate_per_second(self, cfg: DecoyConfig) -> float:
        return self.key_rate_lower * cfg.rate_rN


def sifted_counts(channel: Channel, cfg: DecoyConfig, chi_ext: float = 1.0) -> dict:
    """Mean sifted counts ``0.5 eta_d <eta> N^a`` for signal, decoy and vacuum classes."""
    m = channel_mean(channel)
    base = 0.5 * cfg.eta_d(chi_ext) * m * cfg.N
    return {"s": base * cfg.p_s, "d": base * cfg.p_d, "v": base * cfg.p_v}


def qber(channel: Channel, cfg: DecoyConfig, chi_ext: float = 1.0) -> float:
    b = EtaBounds(cfg, chi_ext)
    num = channel_average(channel, lambda e: b.EQ(e, cfg.mu_s))
    den = channel_average(channel, lambda e: b.Q(e, cfg.mu_s))
    return num / den


def key_rate(channel: Channel, cfg: DecoyConfig, chi_ext: float = 1.0) -> KeyRateResult:
    """Lower bound of the channel-averaged secret key rate per pulse."""
    b = EtaBounds(cfg, chi_ext)
    avg = lambda f: channel_average(channel, f)  # noqa: E731
    flags = []

    Qs = avg(lambda e: b.Q(e, cfg.mu_s))
    EQs = avg(lambda e: b.EQ(e, cfg.mu_s))
    E = min(EQs / Qs, 1.0) if Qs > 0 else 0.5

    raw_x = avg(lambda e: b.Y1_lower_raw(e, "x"))
    if not np.isfinite(raw_x) or raw_x < 0 or avg(lambda e: (b.Y1_lower_raw(e, "x") < 0).astype(float)) > 0:
        flags.append("Y1_clamped")
    Y1 = {g: avg(lambda e, g=g: b.Y1_lower(e, g)) for g in ("x", "z")}
    Q1 = {g: avg(lambda e, g=g: b.Q1_lower(e, g)) for g in ("x", "z")}
    e1x_mean = avg(lambda e: b.e1x_upper(e))

    if cfg.finite_key:
        M1x = avg(lambda e: b.M1_lower(e, "x"))
        M1sz = avg(lambda e: b.M1_signal_z_lower(e))
        theta = solve_theta_upper(M1x, M1sz, e1x_mean, cfg.failure_eps)
        if theta == THETA_SENTINEL:
            flags.append("theta_no_root")
    else:
        theta = 0.0

    e1Q = {
        "x": avg(lambda e: b.e1x_upper(e) * b.Q1_lower(e, "x")),
        "z": avg(lambda e: np.minimum(b.e1x_upper(e) + theta, 0.5) * b.Q1_lower(e, "z")),
    }
    e1 = {g: (min(e1Q[g] / Q1[g], 0.5) if Q1[g] > 0 else 0.5) for g in ("x", "z")}

    q = cfg.p_s / 2.0
    rate = q * (-Qs * cfg.f_EC * binary_entropy(min(E, 0.5))
                + sum(Q1[g] * (1.0 - binary_entropy(e1[g])) for g in ("x", "z")))
    if theta == THETA_SENTINEL:
        rate_clamped = 0.0
        flags.append("key_rate_clamped")
    elif rate < 0 or not math.isfinite(rate):
        rate_clamped = 0.0
        flags.append("key_rate_clamped")
    else:
        rate_clamped = rate
    if "Y1_clamped" in flags:
        warnings.warn("single-photon yield bound clamped at zero for part of the channel distribution",
                      stacklevel=2)
    return KeyRateResult(
        qber=E, key_rate_lower=rate_clamped, key_rate_unclamped=rate, Q_mu_s_mean=Qs, Y1_L=Y1,
        e1_xU=e1x_mean, e1_U=e1, theta_U=theta, sifted_counts=sifted_counts(channel, cfg, chi_ext),
        eta_mean=channel_mean(channel), flags=tuple(flags),
    )


def asymptotic_config(cfg: DecoyConfig) -> DecoyConfig:
    """Same system with the Chernoff deviations switched off."""
    return replace(cfg, finite_key=False)
