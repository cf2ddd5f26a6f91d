"""Signal constellations: skewed MPSK, symmetry checks, distance and AWGN MI."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.special import logsumexp


def gray_code(n: int) -> int:
    return n ^ (n >> 1)


@dataclass(frozen=True)
class Constellation:
    """Ordered unit-energy point set with bit labels.

    ``labels[m]`` is the integer label of ``points[m]``; its bits (MSB first,
    width ``bits_per_symbol``) are the coded bits carried by that point.
    """

    points: NDArray
    labels: NDArray
    skew: float | None = None
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        labels = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        m = pts.size
        if m < 2:
            raise ValueError("a constellation needs at least two points")
        if labels.shape != pts.shape:
            raise ValueError("one label per point required")
        if m & (m - 1):
            raise ValueError(f"M={m} is not a power of two; bit labels need M = 2^b")
        if sorted(labels.tolist()) != list(range(m)):
            raise ValueError("labels must be a permutation of 0..M-1")
        d = np.abs(pts[:, None] - pts[None, :]) + np.eye(m)
        if np.min(d) < 1e-12:
            raise ValueError("constellation points must be distinct")
        if abs(np.mean(np.abs(pts) ** 2) - 1.0) > 1e-6:
            raise ValueError("constellation must have unit average energy")

    @property
    def m_order(self) -> int:
        return self.points.size

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.m_order))

    @property
    def angles(self) -> NDArray:
        return np.mod(np.angle(self.points), 2 * np.pi)

    def bit_matrix(self) -> NDArray:
        """(M, b) array of label bits, MSB first."""
        b = self.bits_per_symbol
        shifts = np.arange(b - 1, -1, -1)
        return (self.labels[:, None] >> shifts) & 1

    def bits_to_indices(self, bits: NDArray) -> NDArray:
        """Map a flat bit vector (length multiple of b) to point indices."""
        b = self.bits_per_symbol
        bits = np.asarray(bits, dtype=int).reshape(-1, b)
        label = bits @ (1 << np.arange(b - 1, -1, -1))
        inv = np.empty(self.m_order, dtype=int)
        inv[self.labels] = np.arange(self.m_order)
        return inv[label]

    def indices_to_bits(self, idx: NDArray) -> NDArray:
        return self.bit_matrix()[np.asarray(idx, dtype=int)].reshape(-1)


def make_mpsk(m_order: int) -> Constellation:
    return make_skewed_mpsk(m_order, 0.0)


def make_skewed_mpsk(m_order: int, skew: float) -> Constellation:
    """Points ``exp(j 2 pi m / (M + skew))`` for ``m = 0..M-1``, Gray-labelled
    along the angular order.

    ``skew = 0`` is plain MPSK; any ``0 < skew < M`` removes the rotational
    symmetry.
    """
    if m_order < 2:
        raise ValueError(f"m_order must be >= 2, got {m_order}")
    if not 0.0 <= skew < m_order:
        raise ValueError(f"skew must lie in [0, {m_order}), got {skew}")
    m = np.arange(m_order)
    pts = np.exp(2j * np.pi * m / (m_order + skew))
    labels = np.array([gray_code(i) for i in m])
    name = f"{m_order}PSK" if skew == 0 else f"S{m_order}PSK({skew:g})"
    return Constellation(pts, labels, skew=float(skew), name=name)


def _circ_dist(a, b):
    d = np.mod(a - b, 2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def rotational_symmetries(c: Constellation, tol: float = 1e-9) -> list[float]:
    """All rotations in (0, 2 pi) that map the point set onto itself.

    Any such rotation must carry point 0 onto some point with the same
    modulus, so the candidates are finite; each is checked by matching every
    rotated point to its nearest neighbour.
    """
    pts = c.points
    found: list[float] = []
    p0 = pts[0]
    for q in pts[1:]:
        if abs(abs(q) - abs(p0)) > tol:
            continue
        rot = float(np.mod(np.angle(q) - np.angle(p0), 2 * np.pi))
        if rot < tol or rot > 2 * np.pi - tol:
            continue
        rotated = pts * np.exp(1j * rot)
        dist = np.abs(rotated[:, None] - pts[None, :]).min(axis=1)
        # tol is angular; on the unit circle chord ~ angle
        if np.all(dist <= tol * max(1.0, np.max(np.abs(pts)))):
            found.append(rot)
    return sorted(found)


def min_distance(c: Constellation) -> float:
    d = np.abs(c.points[:, None] - c.points[None, :])
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def awgn_mutual_information(c: Constellation, snr_db: float, n_samples: int = 100_000,
                            seed: int = 0) -> float:
    """Monte Carlo I(X; Y) in bits for equiprobable points over complex AWGN.

    ``snr_db`` is Es/N0 with the constellation's average energy as Es and
    N0 = 2 sigma^2 (sigma^2 per real dimension).
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    rng = np.random.default_rng(seed)
    pts = c.points
    es = np.mean(np.abs(pts) ** 2)
    n0 = es * 10 ** (-snr_db / 10)
    x_idx = rng.integers(0, c.m_order, n_samples)
    noise = np.sqrt(n0 / 2) * (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples))
    y = pts[x_idx] + noise
    # log p(y|x') up to a common constant
    metric = -np.abs(y[:, None] - pts[None, :]) ** 2 / n0
    own = metric[np.arange(n_samples), x_idx]
    info = np.log2(c.m_order) - np.mean(logsumexp(metric, axis=1) - own) / np.log(2)
    return float(info)


def save_constellation(c: Constellation, path: str | Path) -> None:
    """Write ``re im label`` lines (label as a binary string)."""
    b = c.bits_per_symbol
    lines = [f"{p.real:.17g} {p.imag:.17g} {lab:0{b}b}" for p, lab in zip(c.points, c.labels)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_constellation(path: str | Path) -> Constellation:
    pts, labels = [], []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        re_s, im_s, lab = line.split()
        pts.append(complex(float(re_s), float(im_s)))
        labels.append(int(lab, 2))
    return Constellation(np.array(pts), np.array(labels), name=Path(path).stem)
