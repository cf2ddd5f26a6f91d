"""Binary LDPC codes: alist I/O, PEG construction, encoding, sum-product BP.

LLR convention throughout: ``llr = log P(bit=0) / P(bit=1)``, so a positive
value favours 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

_LLR_CLIP = 50.0
_PHI_MIN = 1e-12


def gf2_row_reduce(mat: NDArray):
    """Reduced row echelon form over GF(2).

    Returns ``(rref, pivot_columns)``.
    """
    a = (np.asarray(mat) % 2).astype(np.uint8).copy()
    rows, cols = a.shape
    pivots = []
    r = 0
    for col in range(cols):
        if r >= rows:
            break
        hits = np.nonzero(a[r:, col])[0]
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        others = np.nonzero(a[:, col])[0]
        others = others[others != r]
        a[others] ^= a[r]
        pivots.append(col)
        r += 1
    return a[:r], pivots


def gf2_rank(mat: NDArray) -> int:
    return len(gf2_row_reduce(mat)[1])


class ParityCheckCode:
    """Binary linear code defined by a sparse parity-check matrix ``H``.

    Encoding is systematic on the non-pivot columns of the reduced ``H``:
    information bits are written there and the pivot (parity) bits solved.
    """

    def __init__(self, h: NDArray, name: str = "code"):
        self.h = (np.asarray(h) % 2).astype(np.uint8)
        self.name = name
        self.m, self.n = self.h.shape
        rref, pivots = gf2_row_reduce(self.h)
        self.rank = len(pivots)
        self.k = self.n - self.rank
        self._rref = rref
        self._pivots = np.array(pivots, dtype=int)
        self._info_cols = np.setdiff1d(np.arange(self.n), self._pivots)
        # parity = rref[:, info_cols] @ info  (mod 2)
        self._parity_map = rref[:, self._info_cols]
        self.check_idx, self.var_idx = np.nonzero(self.h)
        self.n_edges = self.check_idx.size

    @property
    def rate(self) -> float:
        return self.k / self.n

    def encode(self, info_bits: NDArray) -> NDArray:
        info = np.asarray(info_bits, dtype=np.uint8)
        if info.size != self.k:
            raise ValueError(f"expected {self.k} information bits, got {info.size}")
        word = np.zeros(self.n, dtype=np.uint8)
        word[self._info_cols] = info
        word[self._pivots] = (self._parity_map.astype(np.int64) @ info) % 2
        return word

    def extract_info(self, codeword: NDArray) -> NDArray:
        return np.asarray(codeword)[self._info_cols]

    def syndrome(self, word: NDArray) -> NDArray:
        return (self.h.astype(np.int64) @ np.asarray(word, dtype=np.int64)) % 2

    def is_codeword(self, word: NDArray) -> bool:
        return not np.any(self.syndrome(word))

    def codewords(self) -> NDArray:
        """All 2^k codewords; only sensible for tiny codes."""
        if self.k > 16:
            raise ValueError("refusing to enumerate more than 2^16 codewords")
        info = (np.arange(2**self.k)[:, None] >> np.arange(self.k - 1, -1, -1)) & 1
        return np.array([self.encode(row) for row in info])

    # -- alist ---------------------------------------------------------------

    @classmethod
    def from_alist(cls, path: str | Path) -> "ParityCheckCode":
        """Read MacKay's alist format (1-based indices, zero padding)."""
        tokens = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
        n, m = int(tokens[0][0]), int(tokens[0][1])
        h = np.zeros((m, n), dtype=np.uint8)
        for col in range(n):
            for idx in tokens[4 + col]:
                v = int(idx)
                if v:
                    h[v - 1, col] = 1
        return cls(h, name=Path(path).stem)

    def to_alist(self, path: str | Path) -> None:
        col_deg = self.h.sum(axis=0)
        row_deg = self.h.sum(axis=1)
        max_c, max_r = int(col_deg.max()), int(row_deg.max())
        lines = [f"{self.n} {self.m}", f"{max_c} {max_r}",
                 " ".join(map(str, col_deg)), " ".join(map(str, row_deg))]
        for col in range(self.n):
            rows = list(np.nonzero(self.h[:, col])[0] + 1)
            lines.append(" ".join(map(str, rows + [0] * (max_c - len(rows)))))
        for row in range(self.m):
            cols = list(np.nonzero(self.h[row])[0] + 1)
            lines.append(" ".join(map(str, cols + [0] * (max_r - len(cols)))))
        Path(path).write_text("\n".join(lines) + "\n")


def hamming74(redundant: bool = True) -> ParityCheckCode:
    """The (7,4) Hamming code.

    By default ``H`` lists all seven non-zero dual codewords. The plain
    3-row matrix has 4-cycles that make saturated BP jump to a weight-3
    codeword for some single flips; with the redundant checks BP agrees
    with ML decoding on every hard-decision pattern.
    """
    h = np.array([[1, 0, 1, 0, 1, 0, 1],
                  [0, 1, 1, 0, 0, 1, 1],
                  [0, 0, 0, 1, 1, 1, 1]], dtype=np.uint8)
    if redundant:
        combos = (np.arange(1, 8)[:, None] >> np.arange(2, -1, -1)) & 1
        h = (combos @ h % 2).astype(np.uint8)
    return ParityCheckCode(h, name="hamming74")


def peg_construct(n: int, m: int, col_weight: int, seed: int = 0) -> NDArray:
    """Progressive-edge-growth parity-check matrix with constant column weight.

    Each new edge of variable node ``v`` goes to a check node outside the
    current BFS neighbourhood of ``v`` (maximising local girth); ties are
    broken by lowest check degree, then by the seeded RNG.
    """
    rng = np.random.default_rng(seed)
    var_adj: list[list[int]] = [[] for _ in range(n)]
    chk_adj: list[list[int]] = [[] for _ in range(m)]
    chk_deg = np.zeros(m, dtype=int)
    for v in range(n):
        for e in range(col_weight):
            if e == 0:
                candidates = np.flatnonzero(chk_deg == chk_deg.min())
            else:
                reached = np.zeros(m, dtype=bool)
                frontier_v = {v}
                seen_v = {v}
                last_new = None
                while True:
                    new_c = set()
                    for u in frontier_v:
                        for cc in var_adj[u]:
                            if not reached[cc]:
                                new_c.add(cc)
                    if not new_c:
                        break
                    if reached.sum() + len(new_c) >= m:
                        last_new = None if reached.all() else (~reached)
                        break
                    for cc in new_c:
                        reached[cc] = True
                    nxt = set()
                    for cc in new_c:
                        for u in chk_adj[cc]:
                            if u not in seen_v:
                                seen_v.add(u)
                                nxt.add(u)
                    frontier_v = nxt
                    if not frontier_v:
                        break
                pool = ~reached if last_new is None else last_new
                pool = pool.copy()
                pool[var_adj[v]] = False
                if not pool.any():
                    pool = np.ones(m, dtype=bool)
                    pool[var_adj[v]] = False
                idx = np.flatnonzero(pool)
                candidates = idx[chk_deg[idx] == chk_deg[idx].min()]
            chosen = int(rng.choice(candidates))
            var_adj[v].append(chosen)
            chk_adj[chosen].append(v)
            chk_deg[chosen] += 1
    h = np.zeros((m, n), dtype=np.uint8)
    for v, checks in enumerate(var_adj):
        h[checks, v] = 1
    return h


@dataclass
class BPResult:
    bits: NDArray
    llr_out: NDArray  # extrinsic
    llr_post: NDArray
    converged: bool
    iterations: int


def _phi(x: NDArray) -> NDArray:
    x = np.clip(x, _PHI_MIN, _LLR_CLIP)
    return -np.log(np.tanh(0.5 * x))


def hard_decision(llr: NDArray) -> NDArray:
    return (np.asarray(llr) < 0).astype(np.uint8)


def bp_decode(llr_in: NDArray, code: ParityCheckCode, n_iter: int = 25,
              early_stop: bool = True) -> BPResult:
    """Flooding sum-product decoding.

    ``converged`` is true when the hard decision satisfies every parity check
    and no posterior LLR is exactly zero (a zero LLR is an erasure, not a
    decision).
    """
    llr_in = np.asarray(llr_in, dtype=float)
    if llr_in.size != code.n:
        raise ValueError(f"expected {code.n} LLRs, got {llr_in.size}")
    ci, vi = code.check_idx, code.var_idx
    m, n = code.m, code.n
    llr_in = np.clip(llr_in, -_LLR_CLIP, _LLR_CLIP)
    c2v = np.zeros(code.n_edges)
    post = llr_in.copy()
    converged = False
    it = 0
    for it in range(1, n_iter + 1):
        v2c = post[vi] - c2v
        mag = _phi(np.abs(v2c))
        neg = (v2c < 0).astype(np.int64)
        mag_sum = np.bincount(ci, weights=mag, minlength=m)
        neg_sum = np.bincount(ci, weights=neg, minlength=m).astype(np.int64)
        sign = np.where((neg_sum[ci] - neg) % 2 == 1, -1.0, 1.0)
        c2v = sign * _phi(np.maximum(mag_sum[ci] - mag, _PHI_MIN))
        ext = np.bincount(vi, weights=c2v, minlength=n)
        post = llr_in + ext
        bits = hard_decision(post)
        converged = bool(np.all(post != 0) and code.is_codeword(bits))
        if converged and early_stop:
            break
    ext = post - llr_in
    return BPResult(hard_decision(post), ext, post, converged, it)
