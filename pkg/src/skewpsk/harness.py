"""Experiment driver: configuration, seeding, Monte Carlo loops, CSV output.

Every CSV starts with ``#`` comment lines holding the full configuration as
sorted JSON, so a file documents how to regenerate itself. Per-frame seeds
come from ``numpy.random.SeedSequence([master_seed, point_index,
frame_index])``, which is stable across numpy versions and platforms.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .channel import PILOTLESS, ChannelParams, insert_pilots, simulate_frame
from .constellation import (
    Constellation,
    awgn_mutual_information,
    load_constellation,
    make_skewed_mpsk,
    min_distance,
    rotational_symmetries,
)
from .decay import decay_factor, simulate_two_trajectories, steady_state_concentration
from .demod_mixture import DEFAULT_MERGE_THRESHOLD, run_recursion
from .receiver import IterationSchedule, build_frame, iterate_demod_decode, load_code

KINDS = ("constellation", "decay_sweep", "trajectory_trace", "ber_curve", "mi_curve", "track_demo")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str = "ber_curve"
    # constellation
    m_order: int = 4
    skew: float = 0.7
    constellation_file: str | None = None
    # channel
    snr_db: list[float] = field(default_factory=lambda: [4.0])
    sigma_delta: float = 0.1
    # receiver
    demod: str = "dp"
    grid: int = 512
    order: int = 4
    code: str = "peg1024_r088"
    pilot_period: float | None = None  # None = pilotless
    n_outer: int = 10
    n_inner: int = 25
    # Monte Carlo
    min_bit_errors: int = 100
    max_frames: int = 200
    master_seed: int = 0
    skews: list[float] = field(default_factory=lambda: [0.0, 0.1, 0.3, 0.5, 0.7])
    phi: float | None = None
    n_samples: int = 100_000
    n_symbols: int = 200
    n_frames: int = 500
    n_warmup: int = 1000
    decay_mode: str = "full_sum"
    n_track_symbols: int = 300
    out: str | None = None

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.m_order < 2 or self.m_order & (self.m_order - 1):
            raise ConfigError(f"m_order must be a power of two >= 2, got {self.m_order}")
        if not 0 <= self.skew < self.m_order:
            raise ConfigError(f"skew must lie in [0, m_order), got {self.skew}")
        if not self.snr_db:
            raise ConfigError("snr_db needs at least one value")
        if self.sigma_delta < 0:
            raise ConfigError("sigma_delta must be >= 0")
        if self.demod not in ("dp", "mixture"):
            raise ConfigError(f"demod must be 'dp' or 'mixture', got {self.demod!r}")
        if self.grid < 64 or self.grid & (self.grid - 1):
            raise ConfigError(f"grid must be a power of two >= 64, got {self.grid}")
        if self.order < 1:
            raise ConfigError("order must be >= 1")
        if self.pilot_period is not None and (self.pilot_period < 2
                                              or self.pilot_period != int(self.pilot_period)):
            raise ConfigError(f"pilot_period must be an integer >= 2, got {self.pilot_period}")
        if self.n_outer < 1 or self.n_inner < 1:
            raise ConfigError("n_outer and n_inner must be >= 1")
        if self.max_frames < 1 or self.min_bit_errors < 1:
            raise ConfigError("max_frames and min_bit_errors must be >= 1")
        if self.decay_mode not in ("full_sum", "dominant", "genie"):
            raise ConfigError(f"unknown decay_mode {self.decay_mode!r}")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("snr_db", "skews"):
            if key in data and not isinstance(data[key], list):
                data[key] = [data[key]]
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc

    def header(self) -> str:
        text = json.dumps(asdict(self), sort_keys=True)
        return f"# skewpsk experiment {self.kind}\n# config: {text}\n"

    @property
    def period(self) -> float:
        return PILOTLESS if self.pilot_period is None else int(self.pilot_period)

    def constellation(self) -> Constellation:
        if self.constellation_file:
            return load_constellation(self.constellation_file)
        return make_skewed_mpsk(self.m_order, self.skew)


def frame_seed(master_seed: int, point: int, frame: int) -> int:
    state = np.random.SeedSequence([master_seed, point, frame]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return f"{float(x):.10g}"


def _csv(cfg: ExperimentConfig, columns: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(cfg.header())
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def run_ber_curve(cfg: ExperimentConfig) -> str:
    """BER vs SNR: per point, frames until ``min_bit_errors`` information-bit
    errors or ``max_frames`` (flagged in the ``capped`` column)."""
    cfg.validate()
    c = cfg.constellation()
    code = load_code(cfg.code)
    schedule = IterationSchedule(cfg.n_outer, cfg.n_inner, True)
    rows = []
    for p_idx, snr in enumerate(cfg.snr_db):
        params = ChannelParams(cfg.sigma_delta, snr)
        frames = bits = bit_err = frame_err = outer = 0
        while frames < cfg.max_frames and bit_err < cfg.min_bit_errors:
            tx = build_frame(code, c, params, frame_seed(cfg.master_seed, p_idx, frames),
                             pilot_period=cfg.period)
            res = iterate_demod_decode(tx.frame, c, params, code, schedule, cfg.demod,
                                       cfg.grid, cfg.order)
            errors = int(np.sum(code.extract_info(res.bits) != tx.info_bits))
            frames += 1
            bits += code.k
            bit_err += errors
            frame_err += errors > 0
            outer += res.outer_iterations
        rows.append([snr, frames, bits, bit_err, bit_err / bits, frame_err, outer / frames,
                     bit_err < cfg.min_bit_errors])
    cols = ["snr_db", "frames", "bits", "bit_errors", "ber", "frame_errors", "avg_outer_iters",
            "capped"]
    return _csv(cfg, cols, rows)


def run_decay_sweep(cfg: ExperimentConfig) -> str:
    cfg.validate()
    rows = []
    for s_idx, skew in enumerate(cfg.skews):
        c = make_skewed_mpsk(cfg.m_order, skew)
        for p_idx, snr in enumerate(cfg.snr_db):
            params = ChannelParams(cfg.sigma_delta, snr)
            seed = frame_seed(cfg.master_seed, s_idx, p_idx)
            conc = steady_state_concentration(c, params, cfg.n_warmup, seed)
            est = decay_factor(c, params, cfg.phi, conc, cfg.n_samples, seed, cfg.decay_mode)
            rows.append([skew, snr, cfg.sigma_delta, est.phi, est.delta, est.stderr,
                         est.concentration])
    return _csv(cfg, ["skew", "snr_db", "sigma_delta", "phi", "delta", "stderr", "concentration"],
                rows)


def run_trajectory_trace(cfg: ExperimentConfig) -> str:
    """Simulated E[alpha_wrong] next to the model 0.5 exp(delta k)."""
    cfg.validate()
    c = cfg.constellation()
    params = ChannelParams(cfg.sigma_delta, cfg.snr_db[0])
    conc = steady_state_concentration(c, params, cfg.n_warmup, cfg.master_seed)
    est = decay_factor(c, params, cfg.phi, conc, cfg.n_samples, cfg.master_seed, cfg.decay_mode)
    trace = simulate_two_trajectories(c, params, cfg.phi, cfg.n_symbols, cfg.n_frames,
                                      cfg.master_seed, mode=cfg.decay_mode)
    rows = [[int(k), trace.mean_alpha_wrong[i], trace.stderr[i], 0.5 * np.exp(est.delta * k)]
            for i, k in enumerate(trace.k)]
    return _csv(cfg, ["k", "mean_alpha_wrong", "stderr", "model"], rows)


def run_mi_curve(cfg: ExperimentConfig) -> str:
    cfg.validate()
    c = cfg.constellation()
    rows = [[snr, awgn_mutual_information(c, snr, cfg.n_samples, frame_seed(cfg.master_seed, i, 0))]
            for i, snr in enumerate(cfg.snr_db)]
    return _csv(cfg, ["snr_db", "mi_bits"], rows)


def run_track_demo(cfg: ExperimentConfig) -> str:
    """Forward mixture components per symbol next to the true phase."""
    cfg.validate()
    c = cfg.constellation()
    params = ChannelParams(cfg.sigma_delta, cfg.snr_db[0])
    rng = np.random.default_rng(frame_seed(cfg.master_seed, 0, 0))
    idx = rng.integers(0, c.m_order, cfg.n_track_symbols)
    symbols, mask = insert_pilots(c.points[idx], c.points[0], cfg.period)
    sym_idx = np.zeros(symbols.size, dtype=int)
    sym_idx[~mask] = idx
    frame = simulate_frame(symbols, params, seed=frame_seed(cfg.master_seed, 0, 1))
    priors = np.full((symbols.size, c.m_order), 1.0 / c.m_order)
    priors[mask] = np.eye(c.m_order)[0]
    trace = run_recursion(frame.received, priors, c, params, cfg.order, DEFAULT_MERGE_THRESHOLD)
    rows = []
    for k in range(symbols.size):
        for i in range(cfg.order):
            lw = trace.log_weights[k, i]
            if not np.isfinite(lw):
                continue
            z = trace.z[k, i]
            rows.append([k, i, np.exp(lw), abs(z), np.angle(z),
                         np.angle(np.exp(1j * frame.theta[k]))])
    return _csv(cfg, ["k", "i", "weight", "abs_z", "arg_z", "theta_true"], rows)


def run_constellation(cfg: ExperimentConfig) -> str:
    cfg.validate()
    c = cfg.constellation()
    sym = rotational_symmetries(c)
    b = c.bits_per_symbol
    buf = io.StringIO()
    buf.write(cfg.header())
    buf.write(f"# min_distance: {min_distance(c):.12g}\n")
    buf.write(f"# rotational_symmetries: {json.dumps([round(s, 12) for s in sym])}\n")
    for p, lab in zip(c.points, c.labels):
        buf.write(f"{p.real:.17g} {p.imag:.17g} {lab:0{b}b}\n")
    return buf.getvalue()


RUNNERS = {
    "constellation": run_constellation,
    "decay_sweep": run_decay_sweep,
    "trajectory_trace": run_trajectory_trace,
    "ber_curve": run_ber_curve,
    "mi_curve": run_mi_curve,
    "track_demo": run_track_demo,
}


def run(cfg: ExperimentConfig) -> str:
    text = RUNNERS[cfg.validate().kind](cfg)
    if cfg.out:
        Path(cfg.out).write_text(text)
    return text
