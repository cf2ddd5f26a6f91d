"""Discrete-phase (DP) sum-product demodulator.

The phase is quantised onto ``L`` points ``theta_l = 2 pi l / L`` and the
forward/backward phase messages are propagated exactly on that grid:

    p_f(k+1) = [p_f(k) * p_d(k)] (*) p_delta
    p_b(k)   = [p_b(k+1) * p_d(k+1)] (*) p_delta
    P_u(k, m) ~ sum_l p_f(k, l) p_b(k, l) f_k(s_m, theta_l)

where ``(*)`` is circular convolution with the wrapped-Gaussian increment
density, done by FFT. ``P_u`` is extrinsic: it never includes the prior of
symbol k itself.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.special import logsumexp

from .channel import ChannelParams, FrameRecord
from .constellation import Constellation
from .tikhonov import WrappedGaussianParams, wrapped_gaussian_pdf

DEFAULT_GRID = 512
_KERNEL_CUTOFF = 1e-12
_FLOOR = 1e-300


@dataclass(frozen=True)
class GridMessage:
    """Log density over the grid ``2 pi l / L``, normalised so that
    ``sum(exp(log_density)) * 2 pi / L == 1``."""

    log_density: NDArray

    @property
    def grid_size(self) -> int:
        return self.log_density.size

    @property
    def grid(self) -> NDArray:
        return phase_grid(self.grid_size)

    def normalized(self) -> "GridMessage":
        return GridMessage(_normalize_log(self.log_density))


def phase_grid(grid_size: int) -> NDArray:
    return 2 * np.pi * np.arange(grid_size) / grid_size


def _normalize_log(log_density: NDArray) -> NDArray:
    n = log_density.shape[-1]
    return log_density - logsumexp(log_density, axis=-1, keepdims=True) - np.log(2 * np.pi / n)


def _check_grid(grid_size: int) -> None:
    if grid_size < 64 or grid_size & (grid_size - 1):
        raise ValueError(f"grid size must be a power of two >= 64 for FFT convolution, got {grid_size}")


def increment_kernel(grid_size: int, sigma_delta: float) -> NDArray:
    """Probability mass of the wrapped-Gaussian phase step at each grid offset.

    Entries below 1e-12 of the peak are zeroed; the kernel sums to one.
    """
    kernel = np.zeros(grid_size)
    step = 2 * np.pi / grid_size
    if sigma_delta * grid_size < 1e-3:
        kernel[0] = 1.0
        return kernel
    offsets = phase_grid(grid_size)
    kernel = wrapped_gaussian_pdf(offsets, WrappedGaussianParams(sigma_delta, 5)) * step
    kernel[kernel < _KERNEL_CUTOFF * kernel.max()] = 0.0
    return kernel / kernel.sum()


def observation_log_factors(received: NDArray, c: Constellation, noise_var: float,
                            grid_size: int) -> NDArray:
    """log f_k(s_m, theta_l) for every k, m, l; shape (K, M, L)."""
    theta = phase_grid(grid_size)
    z = received[:, None] * np.conj(c.points)[None, :] / noise_var
    const = -(np.abs(received[:, None]) ** 2 + np.abs(c.points[None, :]) ** 2) / (2 * noise_var)
    rot = np.exp(-1j * theta)
    return (np.real(z[..., None] * rot) + const[..., None])


def dp_pd(r_k: complex, priors: NDArray, c: Constellation, noise_var: float,
          grid_size: int = DEFAULT_GRID) -> GridMessage:
    """Grid version of p_d(theta) = sum_m P_d(s_m) f_k(s_m, theta)."""
    priors = np.asarray(priors, dtype=float)
    if abs(priors.sum() - 1.0) > 1e-9:
        raise ValueError("priors must sum to 1")
    log_f = observation_log_factors(np.array([r_k]), c, noise_var, grid_size)[0]
    with np.errstate(divide="ignore"):
        log_p = np.log(priors)
    return GridMessage(_normalize_log(logsumexp(log_p[:, None] + log_f, axis=0)))


class _Convolver:
    def __init__(self, grid_size: int, sigma_delta: float):
        self.kernel = increment_kernel(grid_size, sigma_delta)
        self.kernel_fft = np.fft.rfft(self.kernel)
        self.identity = self.kernel[0] == 1.0
        self.n = grid_size

    def __call__(self, x: NDArray) -> NDArray:
        if self.identity:
            return x
        y = np.fft.irfft(np.fft.rfft(x) * self.kernel_fft, n=self.n)
        # FFT round-off can leave tiny negatives in the far tails
        return np.maximum(y, _FLOOR)


@dataclass
class DPDiagnostics:
    log_forward: NDArray
    log_backward: NDArray
    grid_size: int

    def log_posterior(self, log_pd: NDArray | None = None) -> NDArray:
        post = self.log_forward + self.log_backward
        if log_pd is not None:
            post = post + log_pd
        return _normalize_log(post)

    def to_csv(self, path: str | Path, log_pd: NDArray | None = None) -> None:
        post = np.exp(self.log_posterior(log_pd))
        grid = phase_grid(self.grid_size)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "theta", "density"])
            for k in range(post.shape[0]):
                for l in range(self.grid_size):
                    w.writerow([k, f"{grid[l]:.9g}", f"{post[k, l]:.9g}"])


def _log_pd_all(log_f: NDArray, priors: NDArray) -> NDArray:
    with np.errstate(divide="ignore"):
        log_p = np.log(priors)
    return logsumexp(log_p[:, :, None] + log_f, axis=1)


def _recursion(lin_pd: NDArray, conv: _Convolver, reverse: bool) -> NDArray:
    k_len, n = lin_pd.shape
    out = np.empty((k_len, n))
    msg = np.full(n, 1.0 / n)
    order = range(k_len - 1, -1, -1) if reverse else range(k_len)
    for k in order:
        out[k] = msg
        prod = msg * lin_pd[k]
        total = prod.sum()
        if not total > 0:
            # message and observation disjoint to machine precision: restart
            prod, total = lin_pd[k].copy(), lin_pd[k].sum()
        prod /= total
        msg = conv(prod)
        msg /= msg.sum()
    return np.log(np.maximum(out, _FLOOR)) - np.log(2 * np.pi / n)


def dp_forward_backward(frame: FrameRecord, priors: NDArray, c: Constellation,
                        params: ChannelParams, grid_size: int = DEFAULT_GRID,
                        noise_var: float | None = None):
    """Run the grid SPA over one frame.

    Parameters
    ----------
    priors : (K, M) array
        Symbol priors P_d; pilot rows should be one-hot.

    Returns
    -------
    p_u : (K, M) array
        Extrinsic symbol probabilities, rows sum to one.
    diag : DPDiagnostics
        Normalised log forward/backward messages on the grid.
    """
    _check_grid(grid_size)
    priors = np.asarray(priors, dtype=float)
    k_len = len(frame)
    if priors.shape != (k_len, c.m_order):
        raise ValueError(f"priors must have shape {(k_len, c.m_order)}, got {priors.shape}")
    nv = params.noise_var if noise_var is None else noise_var
    log_f = observation_log_factors(frame.received, c, nv, grid_size)
    log_pd = _log_pd_all(log_f, priors)
    lin_pd = np.exp(log_pd - log_pd.max(axis=1, keepdims=True))
    conv = _Convolver(grid_size, params.sigma_delta)
    log_fwd = _recursion(lin_pd, conv, reverse=False)
    log_bwd = _recursion(lin_pd, conv, reverse=True)
    log_pu = logsumexp((log_fwd + log_bwd)[:, None, :] + log_f, axis=2)
    p_u = np.exp(log_pu - logsumexp(log_pu, axis=1, keepdims=True))
    p_u /= p_u.sum(axis=1, keepdims=True)
    return p_u, DPDiagnostics(log_fwd, log_bwd, grid_size)
