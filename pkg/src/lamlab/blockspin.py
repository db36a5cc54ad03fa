"""Coarse-graining a 1D finite-range model into a nearest-neighbour block model.

Block spins are words of length N over the base spin space, indexed in base
|S| with the leftmost site as the most significant digit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .lattice import CapacityError
from .potential import Hamiltonian


@dataclass
class BlockModel:
    base_spin_count: int
    block_size: int
    phi1: np.ndarray
    phi2: np.ndarray
    denominator: int | None = None

    def __post_init__(self):
        self.phibar2 = self.phi2 + self.phi1[:, None]

    @property
    def block_space_size(self) -> int:
        return self.phi1.shape[0]

    @property
    def exact(self) -> bool:
        return self.denominator is not None

    def value(self, raw):
        if self.exact:
            return Fraction(int(raw), self.denominator)
        return float(raw)

    def encode(self, word) -> int:
        idx = 0
        for s in word:
            idx = idx * self.base_spin_count + int(s)
        return idx

    def decode(self, index: int) -> tuple:
        out = []
        for _ in range(self.block_size):
            index, r = divmod(int(index), self.base_spin_count)
            out.append(r)
        return tuple(reversed(out))

    def to_dict(self) -> dict:
        def enc(a):
            return a.tolist()
        return {"base_spin_count": self.base_spin_count, "block_size": self.block_size,
                "phi1": enc(self.phi1), "phi2": enc(self.phi2), "denominator": self.denominator}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "BlockModel":
        dtype = np.int64 if doc.get("denominator") is not None else np.float64
        return cls(int(doc["base_spin_count"]), int(doc["block_size"]),
                   np.array(doc["phi1"], dtype=dtype), np.array(doc["phi2"], dtype=dtype),
                   doc.get("denominator"))

    @classmethod
    def from_json(cls, text: str) -> "BlockModel":
        return cls.from_dict(json.loads(text))


def block_digits(nspin: int, N: int) -> np.ndarray:
    """(nspin**N, N) array: row w holds the spins of block word w."""
    w = np.arange(nspin ** N, dtype=np.int64)
    powers = nspin ** np.arange(N - 1, -1, -1, dtype=np.int64)
    return (w[:, None] // powers[None, :]) % nspin


def coarse_grain(H: Hamiltonian, N: int, cap: int = 4096) -> BlockModel:
    """Block model whose chain energies equal the window energies of ``H``."""
    if H.dimension != 1:
        raise ValueError("coarse-graining is defined for one-dimensional models only")
    R = H.range
    if N < max(R, 1):
        raise ValueError(f"block size {N} is smaller than the interaction range {R}")
    if N % H.period:
        raise ValueError(f"block size {N} is not a multiple of the period {H.period}")
    M = H.nspin ** N
    if M > cap:
        raise CapacityError(f"|S|^N = {M} block spins exceed the cap {cap}; raise the cap to at least {M}")
    nS = H.nspin
    digits = block_digits(nS, N)
    dtype = np.int64 if H.exact else np.float64
    phi1 = np.zeros(M, dtype=dtype)
    phi2 = np.zeros((M, M), dtype=dtype)
    for term, raw in zip(H.terms, H.raw_tables()):
        offs = [a[0] for a in term.pattern]
        flat = raw.ravel()
        for x in range(N):
            if term.residue is not None and x % H.period != term.residue[0]:
                continue
            if x + max(offs) < N:
                idx = np.zeros(M, dtype=np.int64)
                for a in offs:
                    idx = idx * nS + digits[:, x + a]
                phi1 += flat[idx]
            else:
                ix = np.zeros(M, dtype=np.int64)
                iy = np.zeros(M, dtype=np.int64)
                n = len(offs)
                for j, a in enumerate(offs):
                    w = nS ** (n - 1 - j)
                    p = x + a
                    if p < N:
                        ix += w * digits[:, p]
                    else:
                        iy += w * digits[:, p - N]
                phi2 += flat[ix[:, None] + iy[None, :]]
    return BlockModel(nS, N, phi1, phi2, H.denominator)


def chain_energy(blocks, m: BlockModel, boundary: int):
    """Sum of phibar2 over consecutive block pairs, boundary block on both ends."""
    blocks = list(blocks)
    if not blocks:
        raise ValueError("empty block sequence")
    seq = np.array([boundary, *blocks, boundary], dtype=np.int64)
    return m.value(m.phibar2[seq[:-1], seq[1:]].sum())
