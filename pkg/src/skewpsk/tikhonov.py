"""Circular-density kernels shared by the phase demodulators.

A Tikhonov (von Mises) density on the circle is parameterised by a single
complex number ``z``::

    t(theta; z) = exp(Re[z * exp(-j theta)]) / (2 pi I0(|z|))

``|z|`` is the concentration and ``arg z`` the mean direction. Products of
Tikhonov densities stay Tikhonov (the parameters add), which is what makes
the mixture demodulator cheap. All Bessel quantities are handled in the log
domain so concentrations up to ~1e6 never overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import i0e, i1e

LOG_2PI = float(np.log(2.0 * np.pi))

# below this argument log(i0e(x)) + x cancels badly; use the Taylor series
_SERIES_CUTOFF = 1e-2


@dataclass(frozen=True)
class TikhonovParam:
    """Tikhonov density parameter ``z`` (complex, dimensionless)."""

    z: complex

    @property
    def concentration(self) -> float:
        return abs(self.z)

    @property
    def mean_direction(self) -> float:
        return float(np.angle(self.z))

    def log_pdf(self, theta: ArrayLike) -> NDArray:
        return tikhonov_log_pdf(theta, self.z)

    def pdf(self, theta: ArrayLike) -> NDArray:
        return np.exp(self.log_pdf(theta))


@dataclass(frozen=True)
class WrappedGaussianParams:
    """Wrapped zero-mean Gaussian with std ``sigma`` (rad), summed over
    ``truncation_l`` wraps on each side."""

    sigma: float
    truncation_l: int = 5

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.truncation_l < 1:
            raise ValueError(f"truncation_l must be >= 1, got {self.truncation_l}")


def log_bessel_i0(x: ArrayLike) -> NDArray | float:
    """Natural log of the modified Bessel function I0, stable for large x.

    Uses ``log(i0e(x)) + x``, except below 0.01 where the Taylor series
    ``x^2/4 - x^4/64 + x^6/576`` keeps full relative precision.

    Raises
    ------
    ValueError
        If any entry of ``x`` is negative.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("log_bessel_i0 is defined for x >= 0 only")
    out = np.log(i0e(arr)) + arr
    small = arr < _SERIES_CUTOFF
    if np.any(small):
        q = 0.25 * arr * arr
        out = np.where(small, q * (1.0 - q * (0.25 - q / 9.0)), out)
    if out.ndim == 0:
        return float(out)
    return out


def bessel_ratio_i1_i0(x: ArrayLike) -> NDArray:
    """Mean resultant length A(x) = I1(x)/I0(x) of a Tikhonov density."""
    arr = np.asarray(x, dtype=float)
    return i1e(arr) / i0e(arr)


def inverse_bessel_ratio(rho: ArrayLike) -> NDArray:
    """Solve A(kappa) = rho for kappa >= 0.

    Starts from the Best & Fisher piecewise approximation and polishes with
    Newton steps on A(kappa) - rho, using A'(k) = 1 - A/k - A^2.
    """
    rho = np.clip(np.asarray(rho, dtype=float), 0.0, 1.0 - 1e-15)
    with np.errstate(divide="ignore"):
        kappa = np.where(
            rho < 0.53,
            2 * rho + rho**3 + 5 * rho**5 / 6,
            np.where(rho < 0.85, -0.4 + 1.39 * rho + 0.43 / (1 - rho),
                     1.0 / (rho**3 - 4 * rho**2 + 3 * rho)),
        )
    kappa = np.maximum(kappa, 0.0)
    # the starting point is within a few percent; Newton converges quadratically
    for _ in range(5):
        a = bessel_ratio_i1_i0(kappa)
        safe_k = np.maximum(kappa, 1e-300)
        deriv = np.where(kappa > 1e-8, 1.0 - a / safe_k - a * a, 0.5)
        step = (a - rho) / np.maximum(deriv, 1e-300)
        kappa = np.maximum(kappa - step, 0.5 * kappa)
    return kappa


def tikhonov_log_pdf(theta: ArrayLike, z: ArrayLike) -> NDArray:
    """log t(theta; z); broadcasts over ``theta`` and ``z``."""
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=complex)
    return np.real(z * np.exp(-1j * theta)) - LOG_2PI - log_bessel_i0(np.abs(z))


def tikhonov_multiply(a: TikhonovParam, b: TikhonovParam) -> tuple[TikhonovParam, float]:
    """Product of two Tikhonov densities.

    Returns ``(TikhonovParam(a.z + b.z), log_scale)`` such that
    ``t(.; a) * t(.; b) == exp(log_scale) * t(.; a + b)`` pointwise.
    """
    z = a.z + b.z
    log_scale = (log_bessel_i0(abs(z)) - log_bessel_i0(abs(a.z))
                 - log_bessel_i0(abs(b.z)) - LOG_2PI)
    return TikhonovParam(z), float(log_scale)


def shrink_concentration(z: ArrayLike, sigma_delta: float) -> NDArray:
    """Vectorised ``z / (1 + sigma_delta^2 |z|)``."""
    z = np.asarray(z, dtype=complex)
    return z / (1.0 + sigma_delta**2 * np.abs(z))


def tikhonov_convolve_wrapped_gaussian(t: TikhonovParam, sigma_delta: float) -> TikhonovParam:
    """Tikhonov approximation of ``t`` convolved with a wrapped Gaussian.

    The concentration is shrunk as ``z' = z / (1 + sigma_delta^2 |z|)``;
    the mean direction is unchanged.
    """
    if sigma_delta < 0:
        raise ValueError("sigma_delta must be non-negative")
    return TikhonovParam(complex(shrink_concentration(t.z, sigma_delta)))


def observation_factor(r: ArrayLike, c: ArrayLike, noise_var: float):
    """Write ``exp(-|r - c e^{j theta}|^2 / (2 noise_var))`` as a scaled
    Tikhonov kernel in theta.

    Returns ``(z, log_const)`` with ``z = r conj(c) / noise_var`` and
    ``log_const = -(|r|^2 + |c|^2) / (2 noise_var)`` so that the factor equals
    ``exp(log_const + Re[z e^{-j theta}])``. Scalars give a
    ``TikhonovParam``; arrays broadcast and return a complex array.
    """
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    r = np.asarray(r, dtype=complex)
    c = np.asarray(c, dtype=complex)
    z = r * np.conj(c) / noise_var
    log_const = -(np.abs(r) ** 2 + np.abs(c) ** 2) / (2.0 * noise_var)
    if z.ndim == 0:
        return TikhonovParam(complex(z)), float(log_const)
    return z, log_const


def wrapped_gaussian_pdf(theta: ArrayLike, p: WrappedGaussianParams) -> NDArray:
    """Wrapped N(0, sigma^2) density, summing wraps ``l = -L..L``."""
    theta = np.asarray(theta, dtype=float)
    ls = np.arange(-p.truncation_l, p.truncation_l + 1)
    shifted = theta[..., None] - 2.0 * np.pi * ls
    g = np.exp(-0.5 * (shifted / p.sigma) ** 2) / (np.sqrt(2.0 * np.pi) * p.sigma)
    return g.sum(axis=-1)
