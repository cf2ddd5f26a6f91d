"""Wiener phase-noise + AWGN channel and frame construction.

SNR convention used everywhere in the package: ``snr_db`` is Es/N0 with
Es = 1, and ``noise_var`` is the per-real-dimension variance sigma^2, so
N0 = 2 sigma^2 and ``noise_var = 10**(-snr_db/10) / 2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

# period value meaning "no pilots"
PILOTLESS = math.inf


def snr_to_noise_var(snr_db: float) -> float:
    return 10.0 ** (-snr_db / 10.0) / 2.0


@dataclass(frozen=True)
class ChannelParams:
    sigma_delta: float
    snr_db: float

    def __post_init__(self):
        if self.sigma_delta < 0:
            raise ValueError("sigma_delta must be non-negative")

    @property
    def noise_var(self) -> float:
        return snr_to_noise_var(self.snr_db)


@dataclass
class FrameRecord:
    symbols: NDArray
    theta: NDArray
    received: NDArray
    noise: NDArray
    tx_bits: NDArray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    pilot_mask: NDArray | None = None
    symbol_indices: NDArray | None = None

    def __post_init__(self):
        if self.pilot_mask is None:
            self.pilot_mask = np.zeros(self.symbols.size, dtype=bool)
        k = self.symbols.size
        if not (self.theta.size == self.received.size == self.pilot_mask.size == k):
            raise ValueError("frame arrays must all have length K")

    def __len__(self) -> int:
        return self.symbols.size

    def reversed(self) -> "FrameRecord":
        """Time-reversed copy (used to check forward/backward symmetry)."""
        return FrameRecord(
            self.symbols[::-1].copy(), self.theta[::-1].copy(), self.received[::-1].copy(),
            self.noise[::-1].copy(), self.tx_bits.copy(), self.pilot_mask[::-1].copy(),
            None if self.symbol_indices is None else self.symbol_indices[::-1].copy(),
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "re_c", "im_c", "theta", "re_r", "im_r", "pilot"])
            for k in range(len(self)):
                c, r = self.symbols[k], self.received[k]
                w.writerow([k, repr(float(c.real)), repr(float(c.imag)), repr(float(self.theta[k])),
                            repr(float(r.real)), repr(float(r.imag)), int(self.pilot_mask[k])])

    @classmethod
    def from_csv(cls, path: str | Path) -> "FrameRecord":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        sym = data[:, 1] + 1j * data[:, 2]
        theta = data[:, 3]
        rec = data[:, 4] + 1j * data[:, 5]
        noise = rec - sym * np.exp(1j * theta)
        return cls(sym, theta, rec, noise, pilot_mask=data[:, 6].astype(bool))


def simulate_frame(symbols, params: ChannelParams, theta0: float | None = None,
                   seed: int = 0, noise_var: float | None = None) -> FrameRecord:
    """Pass ``symbols`` through r_k = c_k exp(j theta_k) + n_k.

    theta_k is a Wiener process with N(0, sigma_delta^2) increments started at
    ``theta0`` (uniform on [0, 2 pi) if None). ``noise_var`` overrides the
    value derived from ``params.snr_db``; pass 0 for a noiseless frame.
    """
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.size == 0:
        raise ValueError("symbols must be non-empty")
    rng = np.random.default_rng(seed)
    if theta0 is None:
        theta0 = rng.uniform(0.0, 2 * np.pi)
    else:
        rng.uniform()  # keep the stream layout identical either way
    k = symbols.size
    increments = params.sigma_delta * rng.standard_normal(k)
    increments[0] = 0.0
    theta = theta0 + np.cumsum(increments)
    var = params.noise_var if noise_var is None else noise_var
    noise = math.sqrt(var) * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
    received = symbols * np.exp(1j * theta) + noise
    # store the noise so that received - c exp(j theta) == noise bit for bit
    noise = received - symbols * np.exp(1j * theta)
    return FrameRecord(symbols, theta, received, noise)


def insert_pilots(data_symbols, pilot_symbol: complex, period: float = PILOTLESS):
    """Insert a known pilot at indices 0, period, 2 period, ...

    Returns ``(symbols, pilot_mask)``. ``period = PILOTLESS`` (inf) leaves the
    stream unchanged.
    """
    data = np.asarray(data_symbols, dtype=complex)
    if math.isinf(period):
        return data.copy(), np.zeros(data.size, dtype=bool)
    if period != int(period) or period < 2:
        raise ValueError(f"pilot period must be an integer >= 2, got {period}")
    period = int(period)
    per_block = period - 1
    n_pilots = -(-data.size // per_block)
    total = data.size + n_pilots
    mask = np.zeros(total, dtype=bool)
    mask[::period] = True
    out = np.empty(total, dtype=complex)
    out[mask] = pilot_symbol
    out[~mask] = data
    return out, mask
