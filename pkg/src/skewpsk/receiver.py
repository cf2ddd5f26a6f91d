"""Iterative receiver: phase demodulator <-> LDPC decoder.

Each outer pass turns the demodulator's extrinsic symbol probabilities into
extrinsic bit LLRs (marginalising over the labels with the decoder's bit
priors for the other bits of the symbol), runs BP, and feeds BP's extrinsic
LLRs back as symbol priors. Pilot symbols always carry one-hot priors and no
coded bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from numpy.typing import NDArray
from scipy.special import logsumexp

from .channel import PILOTLESS, ChannelParams, FrameRecord, insert_pilots, simulate_frame
from .constellation import Constellation
from .demod_dp import DEFAULT_GRID, dp_forward_backward
from .demod_mixture import mixture_demodulate
from .ldpc import ParityCheckCode, bp_decode, hamming74

_LLR_CLIP = 50.0

CODES = {
    "peg1024_r050": "peg1024_r050.alist",
    "peg1024_r088": "peg1024_r088.alist",
}


def load_code(code_id: str) -> ParityCheckCode:
    """Shipped codes: ``hamming74``, ``peg1024_r050`` (rate 1/2) and
    ``peg1024_r088`` (rate 7/8), or a path to any alist file."""
    if code_id == "hamming74":
        return hamming74()
    if code_id in CODES:
        ref = resources.files("skewpsk") / "codes" / CODES[code_id]
        with resources.as_file(ref) as path:
            return ParityCheckCode.from_alist(path)
    return ParityCheckCode.from_alist(code_id)


@dataclass(frozen=True)
class IterationSchedule:
    n_outer: int = 10
    n_inner: int = 25
    early_stop: bool = True

    def __post_init__(self):
        if self.n_outer < 1 or self.n_inner < 1:
            raise ValueError("n_outer and n_inner must be >= 1")


def _log_bit_probs(llr: NDArray) -> tuple[NDArray, NDArray]:
    """(log P(b=0), log P(b=1)) for LLRs log P0/P1."""
    return -np.logaddexp(0.0, -llr), -np.logaddexp(0.0, llr)


def bit_llrs_to_symbol_probs(llr: NDArray, c: Constellation) -> NDArray:
    """Symbol probabilities (K, M) implied by independent bit LLRs."""
    b = c.bits_per_symbol
    llr = np.clip(np.asarray(llr, dtype=float).reshape(-1, b), -_LLR_CLIP, _LLR_CLIP)
    lp0, lp1 = _log_bit_probs(llr)
    bits = c.bit_matrix()  # (M, b)
    log_p = np.where(bits[None, :, :] == 0, lp0[:, None, :], lp1[:, None, :]).sum(axis=2)
    p = np.exp(log_p - logsumexp(log_p, axis=1, keepdims=True))
    return p / p.sum(axis=1, keepdims=True)


def symbol_probs_to_bit_llrs(p_sym: NDArray, c: Constellation,
                             prior_llr: NDArray | None = None) -> NDArray:
    """Bit LLRs from symbol probabilities.

    With ``prior_llr`` given, the result is extrinsic: bit i is marginalised
    using the priors of the other bits of the same symbol only.
    """
    p_sym = np.asarray(p_sym, dtype=float)
    k_len, m = p_sym.shape
    b = c.bits_per_symbol
    bits = c.bit_matrix()
    with np.errstate(divide="ignore"):
        log_ps = np.log(p_sym)
    if prior_llr is None:
        prior = np.zeros((k_len, b))
    else:
        prior = np.clip(np.asarray(prior_llr, dtype=float).reshape(k_len, b), -_LLR_CLIP, _LLR_CLIP)
    lp0, lp1 = _log_bit_probs(prior)
    log_bitp = np.where(bits[None, :, :] == 0, lp0[:, None, :], lp1[:, None, :])  # (K, M, b)
    total = log_bitp.sum(axis=2)
    out = np.empty((k_len, b))
    for i in range(b):
        metric = log_ps + total - log_bitp[:, :, i]
        zero = bits[:, i] == 0
        out[:, i] = logsumexp(metric[:, zero], axis=1) - logsumexp(metric[:, ~zero], axis=1)
    return np.clip(out, -_LLR_CLIP, _LLR_CLIP).reshape(-1)


@dataclass
class TransmitFrame:
    frame: FrameRecord
    info_bits: NDArray
    codeword: NDArray


def build_frame(code: ParityCheckCode, c: Constellation, params: ChannelParams, seed: int,
                pilot_period: float = PILOTLESS, pilot_index: int = 0,
                theta0: float | None = None, noise_var: float | None = None) -> TransmitFrame:
    """Random information bits -> codeword -> symbols (+ pilots) -> channel."""
    if code.n % c.bits_per_symbol:
        raise ValueError("code length must be a multiple of bits per symbol")
    rng = np.random.default_rng(seed)
    info = rng.integers(0, 2, code.k).astype(np.uint8)
    word = code.encode(info)
    idx = c.bits_to_indices(word)
    symbols, mask = insert_pilots(c.points[idx], c.points[pilot_index], pilot_period)
    sym_idx = np.full(symbols.size, pilot_index)
    sym_idx[~mask] = idx
    fr = simulate_frame(symbols, params, theta0=theta0, seed=int(rng.integers(2**63)),
                        noise_var=noise_var)
    fr.pilot_mask = mask
    fr.tx_bits = word
    fr.symbol_indices = sym_idx
    return TransmitFrame(fr, info, word)


@dataclass
class DecodeResult:
    bits: NDArray  # decoded codeword bits
    converged: bool
    outer_iterations: int
    ber_trace: list[float] = field(default_factory=list)
    llr_trace: list[NDArray] = field(default_factory=list)


def demodulate(frame: FrameRecord, priors: NDArray, c: Constellation, params: ChannelParams,
               demod: str = "dp", grid_size: int = DEFAULT_GRID, order: int = 4,
               noise_var: float | None = None) -> NDArray:
    if demod == "dp":
        return dp_forward_backward(frame, priors, c, params, grid_size, noise_var=noise_var)[0]
    if demod == "mixture":
        return mixture_demodulate(frame, priors, c, params, order, order, noise_var=noise_var)
    raise ValueError(f"unknown demodulator {demod!r}; use 'dp' or 'mixture'")


def iterate_demod_decode(frame: FrameRecord, c: Constellation, params: ChannelParams,
                         code: ParityCheckCode, schedule: IterationSchedule = IterationSchedule(),
                         demod: str = "dp", grid_size: int = DEFAULT_GRID, order: int = 4,
                         pilot_index: int = 0, noise_var: float | None = None,
                         keep_llrs: bool = False) -> DecodeResult:
    """Joint phase demodulation and LDPC decoding of one frame.

    ``ber_trace`` holds the codeword BER after each outer pass when the
    frame carries its transmitted bits (empty otherwise).
    """
    data = ~frame.pilot_mask
    n_data = int(data.sum())
    if n_data * c.bits_per_symbol != code.n:
        raise ValueError(f"{n_data} data symbols x {c.bits_per_symbol} bits != code length {code.n}")
    priors = np.full((len(frame), c.m_order), 1.0 / c.m_order)
    priors[frame.pilot_mask] = 0.0
    priors[frame.pilot_mask, pilot_index] = 1.0
    prior_llr = np.zeros(code.n)
    have_truth = frame.tx_bits.size == code.n
    result = DecodeResult(np.zeros(code.n, dtype=np.uint8), False, 0)
    for it in range(1, schedule.n_outer + 1):
        p_u = demodulate(frame, priors, c, params, demod, grid_size, order, noise_var)
        llr_ch = symbol_probs_to_bit_llrs(p_u[data], c, prior_llr)
        bp = bp_decode(llr_ch, code, schedule.n_inner, early_stop=True)
        result.bits = bp.bits
        result.converged = bp.converged
        result.outer_iterations = it
        if keep_llrs:
            result.llr_trace.append(llr_ch)
        if have_truth:
            result.ber_trace.append(float(np.mean(bp.bits != frame.tx_bits)))
        if bp.converged and schedule.early_stop:
            break
        prior_llr = bp.llr_out
        priors[data] = bit_llrs_to_symbol_probs(prior_llr, c)
    return result
