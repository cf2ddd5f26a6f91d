"""Wrong-trajectory decay analysis for asymmetric constellations.

Two phase hypotheses are tracked: the correct one with Tikhonov parameter
``z`` and a wrong one offset by an ambiguity ``phi`` (parameter
``z * exp(j phi)``). Per symbol the posterior odds of the two change by the
log ratio

    X = log sum_l P(s_l) I0(|z + r e^{-j arg s_l} / s2|)
      - log sum_l P(s_l) I0(|z e^{j phi} + r e^{-j arg s_l} / s2|)

and the decay factor is ``delta = -E[X]`` (nats/symbol, negative when the
wrong hypothesis dies out). For rotationally symmetric constellations and
``phi`` a symmetry angle, X vanishes sample by sample.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.special import logsumexp

from .channel import ChannelParams
from .constellation import Constellation
from .tikhonov import log_bessel_i0, shrink_concentration

MODES = ("full_sum", "dominant", "genie")


class TrackingDivergenceError(RuntimeError):
    """The single-loop tracker never settles (no phase noise or lost lock)."""


@dataclass
class TwoTrajectoryState:
    """Vectorised over frames: correct/wrong Tikhonov parameters and log
    weights ``(log alpha_correct, log alpha_wrong)``."""

    z_correct: NDArray
    z_wrong: NDArray
    log_alpha: NDArray  # (n_frames, 2)
    phi: float

    @property
    def alpha_wrong(self) -> NDArray:
        lw = self.log_alpha
        return np.exp(lw[:, 1] - np.logaddexp(lw[:, 0], lw[:, 1]))


@dataclass
class DecayEstimate:
    delta: float
    stderr: float
    n_trials: int
    skew: float | None
    snr_db: float
    sigma_delta: float
    phi: float
    concentration: float
    mode: str = "full_sum"

    def as_row(self) -> dict:
        return asdict(self)


@dataclass
class TrajectoryTrace:
    k: NDArray
    mean_alpha_wrong: NDArray
    stderr: NDArray
    mean_log_odds: NDArray  # E[log(alpha_wrong / alpha_correct)]
    n_frames: int

    def log_slope(self, lo: float = 0.01, hi: float = 0.4) -> tuple[float, NDArray]:
        """Least-squares slope of ln E[alpha_wrong] where lo <= E <= hi.

        Returns the slope and the boolean mask of steps used.
        """
        mask = (self.mean_alpha_wrong >= lo) & (self.mean_alpha_wrong <= hi)
        if mask.sum() < 3:
            raise ValueError("fewer than three steps inside the fitting window")
        slope = np.polyfit(self.k[mask], np.log(self.mean_alpha_wrong[mask]), 1)[0]
        return float(slope), mask

    def to_csv(self, path: str | Path, delta: float | None = None, header: str = "") -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh)
            cols = ["k", "mean_alpha_wrong", "stderr"]
            if delta is not None:
                cols.append("model")
            w.writerow(cols)
            for i, k in enumerate(self.k):
                row = [int(k), f"{self.mean_alpha_wrong[i]:.9g}", f"{self.stderr[i]:.9g}"]
                if delta is not None:
                    row.append(f"{0.5 * np.exp(delta * k):.9g}")
                w.writerow(row)


def default_ambiguity(c: Constellation) -> float:
    """Smallest angular gap between neighbouring points; equals
    2 pi / (M + skew) for skewed MPSK."""
    ang = np.sort(c.angles)
    gaps = np.diff(np.append(ang, ang[0] + 2 * np.pi))
    return float(gaps.min())


def _draw(c: Constellation, noise_var: float, n: int, rng: np.random.Generator):
    idx = rng.integers(0, c.m_order, n)
    noise = np.sqrt(noise_var) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return idx, c.points[idx] + noise


def steady_state_concentration(c: Constellation, params: ChannelParams, n_warmup: int = 1000,
                               seed: int = 0, n_average: int | None = None) -> float:
    """Mean |z| of a single data-aided Tikhonov tracking loop in steady state.

    The loop ``z <- shrink(z + r_k conj(c_k) / s2)`` runs ``n_warmup``
    symbols, then |z| is averaged over ``n_average`` (default ``n_warmup``)
    more.

    Raises
    ------
    TrackingDivergenceError
        If |z| keeps growing (no phase noise: the loop is a pure integrator)
        or collapses towards zero.
    """
    if n_warmup < 100:
        raise ValueError("n_warmup must be >= 100")
    n_average = n_warmup if n_average is None else n_average
    rng = np.random.default_rng(seed)
    nv = params.noise_var
    total = n_warmup + n_average
    idx, r_tilde = _draw(c, nv, total, rng)
    theta = np.cumsum(params.sigma_delta * rng.standard_normal(total))
    r = r_tilde * np.exp(1j * theta)
    z = 0j
    mags = np.empty(total)
    for k in range(total):
        z = complex(shrink_concentration(z + r[k] * np.conj(c.points[idx[k]]) / nv,
                                         params.sigma_delta))
        mags[k] = abs(z)
    tail = mags[n_warmup:]
    half = tail.size // 2
    first, second = tail[:half].mean(), tail[half:].mean()
    if second > 1.05 * first:
        raise TrackingDivergenceError(
            f"|z| still growing after {n_warmup} symbols ({first:.3g} -> {second:.3g}); "
            "no steady state without phase noise")
    if second < 1e-3:
        raise TrackingDivergenceError("tracking loop collapsed (|z| -> 0)")
    return float(tail.mean())


def _log_ratio(z: NDArray, r: NDArray, phi: float, c: Constellation, noise_var: float,
               mode: str, tx_idx: NDArray | None = None) -> NDArray:
    """Per-sample log(alpha_correct gain / alpha_wrong gain)."""
    derot = np.exp(-1j * np.angle(c.points))
    obs = r[:, None] * derot[None, :] / noise_var
    if mode == "genie":
        obs_tx = obs[np.arange(r.size), tx_idx]
        return log_bessel_i0(np.abs(z + obs_tx)) - log_bessel_i0(np.abs(z * np.exp(1j * phi) + obs_tx))
    l1 = log_bessel_i0(np.abs(z[:, None] + obs))
    l2 = log_bessel_i0(np.abs((z * np.exp(1j * phi))[:, None] + obs))
    if mode == "dominant":
        return l1.max(axis=1) - l2.max(axis=1)
    if mode == "full_sum":
        # uniform symbol priors: the common log(1/M) cancels
        return logsumexp(l1, axis=1) - logsumexp(l2, axis=1)
    raise ValueError(f"mode must be one of {MODES}")


def decay_factor(c: Constellation, params: ChannelParams, phi: float | None = None,
                 concentration: float | None = None, n_samples: int = 100_000, seed: int = 0,
                 mode: str = "full_sum") -> DecayEstimate:
    """Monte Carlo decay factor ``delta = -E[X]`` with its standard error.

    The correct trajectory is a steady-state Tikhonov of concentration
    ``concentration`` (estimated by :func:`steady_state_concentration` if not
    given) aligned with the true phase; the received sample is
    ``c + n`` with ``c`` uniform over the constellation.

    ``mode`` picks how symbol hypotheses enter: ``full_sum`` (uniform
    priors, exact two-component update), ``dominant`` (each trajectory keeps
    its best-matching symbol), or ``genie`` (both use the transmitted
    symbol, i.e. fully known data).
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    phi = default_ambiguity(c) if phi is None else float(phi)
    if concentration is None:
        concentration = steady_state_concentration(c, params, seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    nv = params.noise_var
    idx, r = _draw(c, nv, n_samples, rng)
    z = np.full(n_samples, concentration, dtype=complex)
    x = _log_ratio(z, r, phi, c, nv, mode, idx)
    return DecayEstimate(
        delta=float(-x.mean()), stderr=float(x.std(ddof=1) / np.sqrt(n_samples)),
        n_trials=n_samples, skew=c.skew, snr_db=params.snr_db,
        sigma_delta=params.sigma_delta, phi=phi, concentration=float(concentration), mode=mode,
    )


def simulate_two_trajectories(c: Constellation, params: ChannelParams, phi: float | None = None,
                              n_symbols: int = 200, n_frames: int = 500, seed: int = 0,
                              init_weights: tuple[float, float] = (0.5, 0.5),
                              n_warmup: int = 100, mode: str = "full_sum") -> TrajectoryTrace:
    """Monte Carlo of the two-hypothesis weight recursion.

    Each frame runs a data-aided tracking loop for ``n_warmup`` symbols to
    reach steady state, then for ``n_symbols`` more symbols multiplies the
    odds by the per-symbol Bessel ratios. The wrong hypothesis is always the
    correct loop's parameter rotated by ``phi``. Returns E[alpha_wrong] at
    k = 0..n_symbols.
    """
    if n_symbols < 50 or n_frames < 100:
        raise ValueError("need n_symbols >= 50 and n_frames >= 100")
    phi = default_ambiguity(c) if phi is None else float(phi)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    nv, sd = params.noise_var, params.sigma_delta
    total = n_warmup + n_symbols
    idx = rng.integers(0, c.m_order, (n_frames, total))
    theta = (rng.uniform(0, 2 * np.pi, (n_frames, 1))
             + np.cumsum(sd * rng.standard_normal((n_frames, total)), axis=1))
    noise = np.sqrt(nv) * (rng.standard_normal((n_frames, total))
                           + 1j * rng.standard_normal((n_frames, total)))
    sym = c.points[idx]
    r = sym * np.exp(1j * theta) + noise
    w0 = np.log(np.asarray(init_weights, dtype=float))
    state = TwoTrajectoryState(np.zeros(n_frames, dtype=complex), np.zeros(n_frames, dtype=complex),
                               np.tile(w0, (n_frames, 1)), phi)
    alpha = np.empty((n_frames, n_symbols + 1))
    log_odds = np.empty((n_frames, n_symbols + 1))
    for k in range(total):
        j = k - n_warmup
        if j >= 0:
            if j == 0:
                alpha[:, 0] = state.alpha_wrong
                log_odds[:, 0] = state.log_alpha[:, 1] - state.log_alpha[:, 0]
            x = _log_ratio(state.z_correct, r[:, k], phi, c, nv, mode, idx[:, k])
            state.log_alpha[:, 0] += x
            state.log_alpha -= np.logaddexp(state.log_alpha[:, 0], state.log_alpha[:, 1])[:, None]
            alpha[:, j + 1] = state.alpha_wrong
            log_odds[:, j + 1] = state.log_alpha[:, 1] - state.log_alpha[:, 0]
        z = state.z_correct + r[:, k] * np.conj(sym[:, k]) / nv
        state.z_correct = shrink_concentration(z, sd)
        state.z_wrong = state.z_correct * np.exp(1j * phi)
    return TrajectoryTrace(
        k=np.arange(n_symbols + 1), mean_alpha_wrong=alpha.mean(axis=0),
        stderr=alpha.std(axis=0, ddof=1) / np.sqrt(n_frames),
        mean_log_odds=log_odds.mean(axis=0), n_frames=n_frames,
    )
