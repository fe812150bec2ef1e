"""Shared numerical kernels.

Adaptive quadrature, bracketed root finding, the special functions used by
the channel models, and a seeded block Monte Carlo driver whose output does
not depend on how many workers evaluate it.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special


class NumericalError(RuntimeError):
    """Raised when a numerical kernel cannot meet its accuracy contract."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for :func:`integrate_adaptive`.

    ``max_depth`` bounds the number of interval subdivisions.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    max_depth: int = 200

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")


@dataclass(frozen=True)
class McSpec:
    """Monte Carlo budget and reproducibility key.

    Results are bitwise identical for a fixed ``seed`` irrespective of
    ``workers``: samples are drawn in fixed-size blocks, block ``b`` always
    uses the ``b``-th spawned Philox stream, and partial sums are reduced in
    block order.
    """

    seed: int = 20190521
    max_samples: int = 4_000_000
    target_rel_se: float = 0.01
    workers: int = 1
    block_size: int = 100_000

    def __post_init__(self):
        if self.max_samples < 1 or self.block_size < 2:
            raise ValueError("max_samples and block_size must be positive")
        if self.target_rel_se <= 0:
            raise ValueError("target_rel_se must be positive")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


# -- quadrature -------------------------------------------------------------

def integrate_adaptive(f: Callable[[float], float], interval, spec: QuadratureSpec | None = None,
                       points=None) -> tuple[float, float]:
    """Adaptive Gauss-Kronrod integration of ``f`` over ``interval``.

    Infinite endpoints are accepted and handled by an interval map.

    Returns
    -------
    value, err_estimate

    Raises
    ------
    NumericalError
        If the error estimate exceeds ``max(rel_tol*|value|, abs_tol)``.
    """
    spec = spec or QuadratureSpec()
    lo, hi = interval
    kwargs = dict(epsabs=spec.abs_tol, epsrel=spec.rel_tol, limit=spec.max_depth, full_output=1)
    if points is not None and math.isfinite(lo) and math.isfinite(hi):
        kwargs["points"] = points
    out = integrate.quad(f, lo, hi, **kwargs)
    value, err = out[0], out[1]
    if not math.isfinite(value):
        raise NumericalError("integrand produced a non-finite value")
    if abs(err) > max(spec.rel_tol * abs(value), spec.abs_tol) * 10.0:
        # quad's estimate is conservative; allow one decade of slack before failing
        raise NumericalError(f"quadrature did not converge: value={value!r}, err={err!r}")
    return value, err


def find_root_bracketed(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12,
                        max_iter: int = 400) -> float:
    """Bisection on a sign-changing bracket.

    Stops when ``|f(x)| <= tol`` or the bracket is narrower than ``tol``.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise ValueError("no sign change on the bracket")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) <= tol or (hi - lo) < tol:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- special functions ------------------------------------------------------

def bessel_j0(x):
    return special.j0(x)


def bessel_j1(x):
    return special.j1(x)


def bessel_i0e(x):
    """Exponentially scaled ``I0(x) * exp(-|x|)``."""
    return special.i0e(x)


def bessel_i1e(x):
    """Exponentially scaled ``I1(x) * exp(-|x|)``."""
    return special.i1e(x)


def bessel_i0(x):
    x = np.asarray(x, dtype=float)
    return special.i0e(x) * np.exp(np.abs(x))


def bessel_i1(x):
    x = np.asarray(x, dtype=float)
    return special.i1e(x) * np.exp(np.abs(x))


def bessel_suite(order: str, x):
    """Evaluate ``J0``, ``J1``, ``I0`` or ``I1`` by name."""
    table = {"J0": bessel_j0, "J1": bessel_j1, "I0": bessel_i0, "I1": bessel_i1}
    try:
        return table[order](x)
    except KeyError:
        raise ValueError(f"unknown Bessel order {order!r}") from None


def normal_cdf(x):
    return special.ndtr(x)


def _hyp2f3_series(a1, a2, b1, b2, b3, x, max_terms=4000):
    """Power series with Neumaier summation.

    Returns the sum and an estimate of the relative rounding error from the
    largest term magnitude.
    """
    total, comp = 1.0, 0.0
    term = 1.0
    biggest = 1.0
    for m in range(max_terms):
        term *= (a1 + m) * (a2 + m) / ((b1 + m) * (b2 + m) * (b3 + m) * (m + 1)) * x
        t = total + term
        if abs(total) >= abs(term):
            comp += (total - t) + term
        else:
            comp += (term - t) + total
        total = t
        biggest = max(biggest, abs(term))
        if abs(term) < 1e-17 * abs(total + comp) and m > abs(x) ** 0.5:
            break
    else:
        return total + comp, math.inf
    value = total + comp
    rel_err = 64 * np.finfo(float).eps * biggest / max(abs(value), 1e-300)
    return value, rel_err


def _hyp2f3_bessel_quadrature(c, x):
    """``2F3(c, 3/2; 2, c+1, 3; x)`` for ``x < 0`` from its Bessel integral.

    Uses  2F3(c, 3/2; 2, c+1, 3; -y^2) = 2c * int_0^1 t^(2c-1) [2 J1(y t)/(y t)]^2 dt.
    """
    y = math.sqrt(-x)

    def integrand(t):
        u = y * t
        if u < 1e-8:
            f = 1.0 - u * u / 8.0
        else:
            f = 2.0 * special.j1(u) / u
        return t ** (2 * c - 1) * f * f

    # split at Bessel zeros so every panel is smooth
    nz = int(y / math.pi) + 2
    zeros = special.jn_zeros(1, nz) / y
    edges = [0.0] + [z for z in zeros if z < 1.0] + [1.0]
    total, comp = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-13, limit=200)
        t = total + v
        comp += (total - t) + v if abs(total) >= abs(v) else (v - t) + total
        total = t
    return 2 * c * (total + comp)


def hyp2f3(a1, a2, b1, b2, b3, x, rel_tol=1e-8):
    """Generalised hypergeometric function ``2F3(a1, a2; b1, b2, b3; x)`` for ``x <= 0``.

    The power series is summed with compensation; when the term magnitudes
    indicate cancellation beyond ``rel_tol`` the function switches to a
    Bessel-integral representation. That fallback exists for the parameter
    family ``2F3(c, 3/2; 2, c+1, 3; x)`` met by aperture-averaged scintillation
    (in any ordering of the lower parameters); other parameter sets raise.
    """
    if x > 0:
        raise ValueError("hyp2f3 is implemented for non-positive arguments only")
    if x == 0:
        return 1.0
    value, err = _hyp2f3_series(a1, a2, b1, b2, b3, x)
    if err <= rel_tol:
        return value
    c = _bessel_family_parameter(a1, a2, b1, b2, b3)
    if c is None:
        raise NumericalError("2F3 series lost accuracy and no fallback applies to these parameters")
    return _hyp2f3_bessel_quadrature(c, x)


def _bessel_family_parameter(a1, a2, b1, b2, b3):
    uppers = [a1, a2]
    lowers = sorted([b1, b2, b3])
    if 1.5 not in uppers:
        return None
    c = uppers[1 - uppers.index(1.5)]
    want = sorted([2.0, 3.0, c + 1.0])
    if c > 0 and all(math.isclose(p, q, rel_tol=0, abs_tol=1e-14) for p, q in zip(lowers, want)):
        return c
    return None


# -- Monte Carlo ------------------------------------------------------------

def rng_streams(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` independent counter-based Philox generators derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.Philox(s)) for s in children]


def _block_stream(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class McEstimate:
    mean: complex
    std_err: float
    n_samples: int
    std_err_imag: float = 0.0

    @property
    def rel_se(self) -> float:
        return self.std_err / abs(self.mean) if self.mean != 0 else math.inf


def mc_mean(sample_block: Callable[[np.random.Generator, int], np.ndarray], spec: McSpec,
            min_blocks: int = 2) -> McEstimate:
    """Blockwise Monte Carlo mean with early stopping on relative standard error.

    ``sample_block(rng, n)`` must return ``n`` (possibly complex) samples.
    The standard error is that of the real part. Blocks are evaluated in
    batches of ``spec.workers`` threads but always accumulated in block order
    and the stopping rule is checked after every block, so the estimate is
    independent of the worker count.
    """
    n_blocks_max = max(1, spec.max_samples // spec.block_size)
    s1 = 0j
    s2 = 0.0
    s2i = 0.0
    n = 0
    block = 0

    def run(b):
        vals = np.asarray(sample_block(_block_stream(spec.seed, b), spec.block_size))
        return complex(np.sum(vals)), float(np.sum(vals.real ** 2)), float(np.sum(vals.imag ** 2))

    pool = ThreadPoolExecutor(spec.workers) if spec.workers > 1 else None
    try:
        while block < n_blocks_max:
            batch = list(range(block, min(block + spec.workers, n_blocks_max)))
            results = list(pool.map(run, batch)) if pool else [run(b) for b in batch]
            for b, (bs1, bs2, bs2i) in zip(batch, results):
                s1 += bs1
                s2 += bs2
                s2i += bs2i
                n += spec.block_size
                block = b + 1
                mean = s1 / n
                se = _se(s2 / n, mean.real, n)
                if block >= min_blocks and se <= spec.target_rel_se * abs(mean.real):
                    return McEstimate(mean, se, n, _se(s2i / n, mean.imag, n))
    finally:
        if pool:
            pool.shutdown()
    mean = s1 / n
    return McEstimate(mean, _se(s2 / n, mean.real, n), n, _se(s2i / n, mean.imag, n))


def _se(second_moment, mean, n):
    return math.sqrt(max(second_moment - mean * mean, 0.0) / (n - 1))
