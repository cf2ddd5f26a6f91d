"""Tikhonov-mixture sum-product demodulator.

Forward and backward phase messages are kept as bounded-order mixtures of
Tikhonov densities. One step of the forward recursion multiplies every
component by each symbol's observation factor (parameters add), weights the
child by the Bessel normaliser ratio, then shrinks the concentration to
account for the Wiener increment. The grown mixture (order N*M) is brought
back to order N by merging: near-coincident mean directions first, then the
cheapest pair in weighted entropy until the order fits.

Merging rule: a cluster with normalised weights ``w_i`` and parameters
``z_i`` has first trigonometric moment
``m1 = sum_i w_i A(|z_i|) exp(j arg z_i)`` where ``A = I1/I0``. The merged
component keeps the cluster mean direction ``arg m1`` and picks its
concentration ``kappa`` so that ``A(kappa) = |m1|``.
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
from .tikhonov import (
    LOG_2PI,
    bessel_ratio_i1_i0,
    inverse_bessel_ratio,
    log_bessel_i0,
    shrink_concentration,
)

# components closer than this in mean direction are merged unconditionally
DEFAULT_MERGE_THRESHOLD = 0.05


@dataclass(frozen=True)
class TikhonovMixture:
    """Weighted Tikhonov mixture held as log weights and complex parameters."""

    log_weights: NDArray
    z: NDArray

    def __post_init__(self):
        lw = np.atleast_1d(np.asarray(self.log_weights, dtype=float))
        z = np.atleast_1d(np.asarray(self.z, dtype=complex))
        if lw.shape != z.shape or lw.size == 0:
            raise ValueError("need matching, non-empty log_weights and z")
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "z", z)

    @classmethod
    def uniform(cls) -> "TikhonovMixture":
        return cls(np.zeros(1), np.zeros(1, dtype=complex))

    @property
    def order(self) -> int:
        return self.z.size

    @property
    def weights(self) -> NDArray:
        return np.exp(self.log_weights)

    def normalized(self) -> "TikhonovMixture":
        keep = np.isfinite(self.log_weights)
        lw = self.log_weights[keep]
        return TikhonovMixture(lw - _lse(lw), self.z[keep])

    def pdf(self, theta) -> NDArray:
        theta = np.asarray(theta, dtype=float)
        log_t = (np.real(self.z[:, None] * np.exp(-1j * theta[None, :]))
                 - LOG_2PI - log_bessel_i0(np.abs(self.z))[:, None])
        return np.exp(logsumexp(self.log_weights[:, None] + log_t, axis=0))


def _lse(x: NDArray) -> float:
    """logsumexp of a small 1-D array without scipy's dispatch overhead."""
    top = x.max()
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.exp(x - top).sum()))


def _log_priors(priors: NDArray) -> NDArray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(priors, dtype=float))


def mixture_step(msg: TikhonovMixture, r_k: complex, priors: NDArray, c: Constellation,
                 params: ChannelParams, noise_var: float | None = None) -> TikhonovMixture:
    """Grow one phase message through symbol k: every component spawns one
    child per constellation point with non-zero prior (order <= N*M).

    The same rule serves the forward and the backward direction since the
    Wiener increment density is symmetric.
    """
    nv = params.noise_var if noise_var is None else noise_var
    z_obs = r_k * np.conj(c.points) / nv
    # theta-independent part of f_k; only |s_m| varies across children
    log_const = -np.abs(c.points) ** 2 / (2 * nv)
    z_child = msg.z[:, None] + z_obs[None, :]
    log_w = (msg.log_weights[:, None] + _log_priors(priors)[None, :] + log_const[None, :]
             + log_bessel_i0(np.abs(z_child)) - log_bessel_i0(np.abs(msg.z))[:, None])
    z_child = shrink_concentration(z_child, params.sigma_delta)
    return TikhonovMixture(log_w.ravel(), z_child.ravel()).normalized()


mixture_step_forward = mixture_step


def _circ_diff(a: NDArray, b: float) -> NDArray:
    d = np.mod(a - b, 2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def tikhonov_entropy(kappa: NDArray) -> NDArray:
    kappa = np.asarray(kappa, dtype=float)
    return LOG_2PI + log_bessel_i0(kappa) - kappa * bessel_ratio_i1_i0(kappa)


def _moment_match(w: NDArray, u: NDArray) -> tuple[NDArray, NDArray]:
    """Merge weights ``w`` and first moments ``u`` along the last axis."""
    total = w.sum(axis=-1)
    m1 = (w * u).sum(axis=-1) / np.maximum(total, 1e-300)
    kappa = inverse_bessel_ratio(np.abs(m1))
    return total, kappa * np.exp(1j * np.angle(m1))


def _merge(log_w: NDArray, z: NDArray) -> tuple[float, complex]:
    if z.size == 1:
        return float(log_w[0]), complex(z[0])
    total = _lse(log_w)
    if z.size == 1:
        return float(total), complex(z[0])
    w = np.exp(log_w - total)
    u = bessel_ratio_i1_i0(np.abs(z)) * np.exp(1j * np.angle(z))
    _, zm = _moment_match(w, u)
    return float(total), complex(zm)


def _order(log_w: NDArray, z: NDArray) -> NDArray:
    # heaviest first; ties go to the more concentrated, then the lower index
    return np.lexsort((np.arange(z.size), -np.abs(z), -log_w))


def _threshold_merge(log_w: NDArray, z: NDArray, merge_threshold: float):
    """Seeded clustering by mean direction, heaviest seed first."""
    ang = np.angle(z)
    unassigned = np.ones(z.size, dtype=bool)
    new_w, new_z = [], []
    for i in range(z.size):
        if not unassigned[i]:
            continue
        members = unassigned & (_circ_diff(ang, ang[i]) < merge_threshold)
        unassigned &= ~members
        w_c, z_c = _merge(log_w[members], z[members])
        new_w.append(w_c)
        new_z.append(z_c)
    return np.array(new_w), np.array(new_z, dtype=complex)


def _pair_costs(w, u, ent, rows, cols):
    """Weighted entropy increase of merging each (row, col) pair, and the
    merged parameters."""
    tot, zm = _moment_match(np.stack([w[rows], w[cols]], -1), np.stack([u[rows], u[cols]], -1))
    cost = tot * tikhonov_entropy(np.abs(zm)) - w[rows] * ent[rows] - w[cols] * ent[cols]
    return cost, zm


def _pairwise_merge(log_w: NDArray, z: NDArray, target_order: int):
    """Merge the pair whose moment-matched merge raises the weighted entropy
    least, until ``target_order`` components remain.

    Disjoint pairs tied with the cheapest one (relative 1e-7) are merged in
    the same round before any cost is refreshed, so that symmetric copies
    are treated alike as long as the tied pairs do not share a component.
    """
    shift = log_w.max()
    w = np.exp(log_w - shift)
    kappa = np.abs(z)
    u = bessel_ratio_i1_i0(kappa) * np.exp(1j * np.angle(z))
    ent = tikhonov_entropy(kappa)
    alive = np.ones(z.size, dtype=bool)
    n = z.size
    iu, ju = np.triu_indices(n, 1)
    cost = np.full((n, n), np.inf)
    merged_z = np.zeros((n, n), dtype=complex)
    cost[iu, ju], merged_z[iu, ju] = _pair_costs(w, u, ent, iu, ju)
    count = n
    while count > target_order:
        c_min = cost.min()
        tol = 1e-7 * abs(c_min) + 1e-12 * w[alive].sum()
        cand_a, cand_b = np.nonzero(cost <= c_min + tol)
        rank = np.lexsort((cand_b, cand_a, cost[cand_a, cand_b]))
        touched = np.zeros(n, dtype=bool)
        for a, b in zip(cand_a[rank], cand_b[rank]):
            if count == target_order:
                break
            if touched[a] or touched[b]:
                continue
            # component a absorbs b
            z[a] = merged_z[a, b]
            w[a] = w[a] + w[b]
            kappa[a] = abs(z[a])
            u[a] = bessel_ratio_i1_i0(kappa[a]) * np.exp(1j * np.angle(z[a]))
            ent[a] = tikhonov_entropy(kappa[a])
            alive[b] = False
            touched[a] = touched[b] = True
            cost[b, :] = np.inf
            cost[:, b] = np.inf
            count -= 1
        for a in np.flatnonzero(touched & alive):
            others = np.flatnonzero(alive)
            others = others[others != a]
            if others.size:
                lo, hi = np.minimum(others, a), np.maximum(others, a)
                cost[lo, hi], merged_z[lo, hi] = _pair_costs(w, u, ent, lo, hi)
    keep = np.flatnonzero(alive)
    return np.log(w[keep]) + shift, z[keep]


def mixture_reduce(mix: TikhonovMixture, target_order: int,
                   merge_threshold: float = 0.0) -> TikhonovMixture:
    """Bring a mixture down to at most ``target_order`` components.

    Components whose mean directions lie within ``merge_threshold`` of a
    heavier seed are merged first. If more than ``target_order`` remain, the
    pair whose moment-matched merge adds the least weighted entropy
    ``(w_i + w_j) H(merged) - w_i H_i - w_j H_j`` is merged repeatedly.
    Both stages repeat until stable, so reducing an already reduced mixture
    with the same arguments returns it unchanged.
    """
    if target_order < 1:
        raise ValueError("target_order must be >= 1")
    mix = mix.normalized()
    log_w, z = mix.log_weights.copy(), mix.z.copy()
    while True:
        n_before = z.size
        if merge_threshold > 0:
            order = _order(log_w, z)
            log_w, z = _threshold_merge(log_w[order], z[order], merge_threshold)
        if z.size > target_order:
            log_w, z = _pairwise_merge(log_w, z, target_order)
        if z.size == n_before:
            break
    order = _order(log_w, z)
    log_w, z = log_w[order], z[order]
    if z.size < mix.order:
        log_w = log_w - _lse(log_w)
    return TikhonovMixture(log_w, z)


@dataclass
class MixtureTrace:
    """Per-step forward (or backward) mixtures, padded to a common order."""

    log_weights: NDArray  # (K, N), -inf where unused
    z: NDArray  # (K, N)

    def to_csv(self, path: str | Path, theta: NDArray | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["k", "i", "weight", "abs_z", "arg_z"]
            if theta is not None:
                header.append("theta_true")
            w.writerow(header)
            for k in range(self.z.shape[0]):
                for i in range(self.z.shape[1]):
                    if not np.isfinite(self.log_weights[k, i]):
                        continue
                    zz = self.z[k, i]
                    row = [k, i, f"{np.exp(self.log_weights[k, i]):.9g}", f"{abs(zz):.9g}",
                           f"{np.angle(zz):.9g}"]
                    if theta is not None:
                        row.append(f"{np.angle(np.exp(1j * theta[k])):.9g}")
                    w.writerow(row)


def run_recursion(received: NDArray, priors: NDArray, c: Constellation, params: ChannelParams,
                  order: int, merge_threshold: float, reverse: bool = False,
                  noise_var: float | None = None) -> MixtureTrace:
    """Messages entering each symbol from one side; entry k excludes symbol k."""
    k_len = received.size
    log_w = np.full((k_len, order), -np.inf)
    zs = np.zeros((k_len, order), dtype=complex)
    msg = TikhonovMixture.uniform()
    steps = range(k_len - 1, -1, -1) if reverse else range(k_len)
    for k in steps:
        n = msg.order
        log_w[k, :n] = msg.log_weights
        zs[k, :n] = msg.z
        grown = mixture_step(msg, received[k], priors[k], c, params, noise_var)
        msg = mixture_reduce(grown, order, merge_threshold)
    return MixtureTrace(log_w, zs)


def mixture_demodulate(frame: FrameRecord, priors: NDArray, c: Constellation,
                       params: ChannelParams, n_forward: int = 4, n_backward: int = 4,
                       merge_threshold: float | None = None, noise_var: float | None = None,
                       return_traces: bool = False):
    """Extrinsic symbol probabilities P_u (K, M) from mixture messages.

    For each symbol the forward and backward mixtures and the observation
    factor are all Tikhonov, so
    ``P_u(m) ~ sum_ij a_i b_j exp(-|s_m|^2/2s2) I0(|zf_i + zb_j + z_m|) / (I0(|zf_i|) I0(|zb_j|))``.
    """
    if n_forward < 1 or n_backward < 1:
        raise ValueError("mixture orders must be >= 1")
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (len(frame), c.m_order):
        raise ValueError(f"priors must have shape {(len(frame), c.m_order)}")
    thr = DEFAULT_MERGE_THRESHOLD if merge_threshold is None else merge_threshold
    nv = params.noise_var if noise_var is None else noise_var
    r = frame.received
    fwd = run_recursion(r, priors, c, params, n_forward, thr, False, nv)
    bwd = run_recursion(r, priors, c, params, n_backward, thr, True, nv)
    z_obs = r[:, None] * np.conj(c.points)[None, :] / nv  # (K, M)
    z_tot = fwd.z[:, :, None, None] + bwd.z[:, None, :, None] + z_obs[:, None, None, :]
    log_t = (fwd.log_weights[:, :, None, None] + bwd.log_weights[:, None, :, None]
             + log_bessel_i0(np.abs(z_tot))
             - log_bessel_i0(np.abs(fwd.z))[:, :, None, None]
             - log_bessel_i0(np.abs(bwd.z))[:, None, :, None]
             - (np.abs(c.points) ** 2 / (2 * nv))[None, None, None, :])
    log_pu = logsumexp(log_t.reshape(len(frame), -1, c.m_order), axis=1)
    p_u = np.exp(log_pu - logsumexp(log_pu, axis=1, keepdims=True))
    p_u /= p_u.sum(axis=1, keepdims=True)
    if return_traces:
        return p_u, fwd, bwd
    return p_u
