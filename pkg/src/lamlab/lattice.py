"""Finite boxes of Z^d, the Chebyshev metric and spin configurations.

Sites are plain tuples of ints. A :class:`Window` is an axis-aligned box with
inclusive bounds; a :class:`Configuration` stores one spin index per window
site and resolves sites outside the window either periodically or through a
fixed periodic background (a ground state).
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np


class CapacityError(RuntimeError):
    """An enumeration would exceed its configured cap."""


def distance(a, b) -> int:
    """Chebyshev distance max_k |a_k - b_k|."""
    a = tuple(a)
    b = tuple(b)
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    if not a:
        return 0
    return max(abs(x - y) for x, y in zip(a, b))


def set_distance(K, L) -> int:
    """Smallest site distance between two non-empty finite sets."""
    return min(distance(a, b) for a in K for b in L)


def neighbour_offsets(dim: int):
    return [o for o in itertools.product((-1, 0, 1), repeat=dim) if any(o)]


def connected_components(sites) -> list[set]:
    """Split a finite site set into maximal components under d(i, j) = 1.

    Components are returned ordered by their lexicographically smallest site.
    """
    remaining = {tuple(s) for s in sites}
    if not remaining:
        return []
    dim = len(next(iter(remaining)))
    offsets = neighbour_offsets(dim)
    out = []
    for start in sorted(remaining):
        if start not in remaining:
            continue
        remaining.discard(start)
        comp = {start}
        queue = deque([start])
        while queue:
            s = queue.popleft()
            for o in offsets:
                nb = tuple(x + y for x, y in zip(s, o))
                if nb in remaining:
                    remaining.discard(nb)
                    comp.add(nb)
                    queue.append(nb)
        out.append(comp)
    return out


@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``lo <= site <= hi`` (inclusive on every axis)."""

    lo: tuple
    hi: tuple
    periodic: bool = False

    def __post_init__(self):
        lo = tuple(int(x) for x in self.lo)
        hi = tuple(int(x) for x in self.hi)
        if len(lo) != len(hi):
            raise ValueError("lo and hi differ in dimension")
        if not 1 <= len(lo) <= 3:
            raise ValueError("only dimensions 1, 2 and 3 are supported")
        if any(h < l for l, h in zip(lo, hi)):
            raise ValueError(f"empty window lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_shape(cls, shape, lo=None, periodic=False):
        lo = tuple(lo) if lo is not None else (0,) * len(shape)
        return cls(lo, tuple(a + n - 1 for a, n in zip(lo, shape)), periodic)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def __contains__(self, site) -> bool:
        return all(l <= x <= h for x, l, h in zip(site, self.lo, self.hi))

    def sites(self):
        return itertools.product(*(range(l, h + 1) for l, h in zip(self.lo, self.hi)))


def tile(block: np.ndarray, lo, shape) -> np.ndarray:
    """Values of the periodic extension of ``block`` on the box at ``lo``."""
    block = np.asarray(block)
    idx = [np.arange(a, a + n) % p for a, n, p in zip(lo, shape, block.shape)]
    return block[np.ix_(*idx)]


class Configuration:
    """Spins on a window, with a rule for sites outside it.

    ``background`` is a periodic block (one axis per lattice axis) used for
    out-of-window sites when the window is not periodic; ``label`` names the
    ground state it represents.
    """

    def __init__(self, window: Window, spins, background=None, label=None):
        spins = np.array(spins, dtype=np.int64)
        if spins.shape != window.shape:
            raise ValueError(f"spins shape {spins.shape} != window shape {window.shape}")
        if not window.periodic:
            if background is None:
                raise ValueError("a fixed-boundary configuration needs a background block")
            background = np.array(background, dtype=np.int64)
            if background.ndim != window.dim:
                raise ValueError("background dimension mismatch")
            background.setflags(write=False)
        spins.setflags(write=False)
        self.window = window
        self.spins = spins
        self.background = background
        self.label = label

    @classmethod
    def uniform(cls, window: Window, background, label=None):
        return cls(window, tile(background, window.lo, window.shape), background, label)

    def same_exterior(self, other: "Configuration") -> bool:
        if self.window != other.window:
            return False
        if self.window.periodic:
            return True
        return self.label == other.label and np.array_equal(self.background, other.background)

    def __getitem__(self, site):
        site = tuple(site)
        w = self.window
        if w.periodic:
            return int(self.spins[tuple((x - l) % n for x, l, n in zip(site, w.lo, w.shape))])
        if site in w:
            return int(self.spins[tuple(x - l for x, l in zip(site, w.lo))])
        return int(self.background[tuple(x % p for x, p in zip(site, self.background.shape))])

    def resolve(self, lo, shape) -> np.ndarray:
        """Spin array on the box starting at ``lo`` with the given shape."""
        w = self.window
        if w.periodic:
            idx = [(np.arange(a, a + n) - l) % m for a, n, l, m in zip(lo, shape, w.lo, w.shape)]
            return self.spins[np.ix_(*idx)]
        out = tile(self.background, lo, shape)
        src, dst = [], []
        for a, n, l, h in zip(lo, shape, w.lo, w.hi):
            s0, s1 = max(a, l), min(a + n - 1, h)
            if s1 < s0:
                return out
            src.append(slice(s0 - l, s1 - l + 1))
            dst.append(slice(s0 - a, s1 - a + 1))
        out[tuple(dst)] = self.spins[tuple(src)]
        return out

    def restrict(self, sites) -> dict:
        """pr(s, V): the spins on a finite site set."""
        return {tuple(x): self[x] for x in sites}

    def with_spins(self, spins) -> "Configuration":
        return Configuration(self.window, spins, self.background, self.label)

    def replace(self, updates: dict) -> "Configuration":
        spins = self.spins.copy()
        for site, v in updates.items():
            spins[tuple(x - l for x, l in zip(site, self.window.lo))] = v
        return self.with_spins(spins)

    def __eq__(self, other):
        return (isinstance(other, Configuration) and self.same_exterior(other)
                and np.array_equal(self.spins, other.spins))

    def __repr__(self):
        return f"Configuration(window={self.window}, label={self.label})"
