"""Ground states of 1D models as minimum-mean cycles of the block energy graph.

The block model of :mod:`lamlab.blockspin` defines a complete oriented graph
on block spins with edge energies ``phibar2``. Periodic configurations are
closed walks, so the ground-state specific energy is the minimum cycle mean
(Karp) and the ground states are the minimal irreducible cycles. The Peierls
constant is the minimum ratio of excitation energy to boundary sites over
cycles of the graph of consecutive block pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

import networkx as nx
import numpy as np

from .blockspin import BlockModel, block_digits, coarse_grain
from .lattice import CapacityError
from .potential import Hamiltonian


@dataclass
class EnergyGraph:
    """Complete oriented graph with self-loops; ``weight[u, v]`` is the edge energy.

    Integer weights with a ``denominator`` are exact (energies are
    ``weight / denominator``).
    """

    weight: np.ndarray
    denominator: int | None = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight)
        n = self.weight.shape[0]
        if self.weight.shape != (n, n) or n < 1:
            raise ValueError("weight must be a non-empty square matrix")
        if self.exact:
            self.weight = self.weight.astype(np.int64)
        elif np.issubdtype(self.weight.dtype, np.integer):
            self.denominator = 1
            self.weight = self.weight.astype(np.int64)
        else:
            self.weight = self.weight.astype(np.float64)
            if not np.all(np.isfinite(self.weight)):
                raise ValueError("weights must be finite")

    @property
    def exact(self) -> bool:
        return self.denominator is not None

    @property
    def vertex_count(self) -> int:
        return self.weight.shape[0]

    def edges(self):
        n = self.vertex_count
        src, dst = np.divmod(np.arange(n * n), n)
        return src, dst, self.weight.ravel()

    def default_tol(self) -> float:
        if self.exact:
            return 0.0
        return 1e-9 * max(1.0, float(np.max(np.abs(self.weight))))


@dataclass(frozen=True)
class Cycle:
    vertices: tuple
    mean_energy: Fraction | float
    total: Fraction | float

    @property
    def length(self) -> int:
        return len(self.vertices)

    @property
    def irreducible(self) -> bool:
        return len(set(self.vertices)) == len(self.vertices)


def _canonical(vertices) -> tuple:
    vertices = list(vertices)
    k = vertices.index(min(vertices))
    return tuple(vertices[k:] + vertices[:k])


def _make_cycle(g: EnergyGraph, vertices) -> Cycle:
    vs = list(vertices)
    raw = sum(g.weight[vs[i], vs[(i + 1) % len(vs)]] for i in range(len(vs)))
    if g.exact:
        total = Fraction(int(raw), g.denominator)
        return Cycle(tuple(vs), total / len(vs), total)
    total = float(raw)
    return Cycle(tuple(vs), total / len(vs), total)


# -- Karp ---------------------------------------------------------------------

def _karp(n, src, dst, cost, exact):
    """Minimum cycle mean of a graph given as an edge list (raw units)."""
    big = np.iinfo(np.int64).max // 4 if exact else np.inf
    D = np.empty((n + 1, n), dtype=np.int64 if exact else np.float64)
    D[0] = 0
    for k in range(1, n + 1):
        row = np.full(n, big, dtype=D.dtype)
        np.minimum.at(row, dst, D[k - 1][src] + cost)
        D[k] = row
    if exact:
        best = None
        for v in range(n):
            worst = max(Fraction(int(D[n, v] - D[k, v]), n - k) for k in range(n))
            if best is None or worst < best:
                best = worst
        return best
    ks = np.arange(n)[:, None]
    ratios = (D[n][None, :] - D[:n]) / (n - ks)
    return float(np.min(np.max(ratios, axis=0)))


def _reduced(cost, mean, exact):
    if exact:
        mean = Fraction(mean)
        return cost * mean.denominator - mean.numerator
    return cost - mean


def _potentials(n, src, dst, red):
    pi = np.zeros(n, dtype=red.dtype)
    for _ in range(n + 1):
        new = pi.copy()
        np.minimum.at(new, dst, pi[src] + red)
        if np.array_equal(new, pi):
            break
        pi = new
    return pi


def _tight_graph(n, src, dst, red, slack, exact):
    pi = _potentials(n, src, dst, red)
    gap = pi[src] + red - pi[dst]
    keep = gap == 0 if exact else gap <= slack
    G = nx.DiGraph()
    G.add_nodes_from(range(n))
    G.add_edges_from(zip(src[keep].tolist(), dst[keep].tolist()))
    return G


def min_mean_cycle(g: EnergyGraph):
    """Exact minimum cycle mean (Karp) and one irreducible witness cycle."""
    n = g.vertex_count
    src, dst, cost = g.edges()
    mean = _karp(n, src, dst, cost, g.exact)
    red = _reduced(cost, mean, g.exact)
    G = _tight_graph(n, src, dst, red, n * g.default_tol() + 1e-12 * n, g.exact)
    edges = nx.find_cycle(G)
    cyc = _make_cycle(g, _canonical([u for u, _ in edges]))
    value = Fraction(mean, g.denominator) if g.exact else mean
    return value, cyc


def minimal_cycles(g: EnergyGraph, tol: float | None = None, max_vertices: int | None = 12):
    """All irreducible cycles with mean within ``tol`` of the minimum.

    Cycles are returned once each (up to rotation), sorted by length then
    vertices. Exact graphs ignore ``tol`` and compare exactly.
    """
    n = g.vertex_count
    if max_vertices is not None and n > max_vertices:
        raise CapacityError(f"graph has {n} vertices; exhaustive cycle search capped at {max_vertices}")
    tol = g.default_tol() if tol is None else float(tol)
    src, dst, cost = g.edges()
    mean = _karp(n, src, dst, cost, g.exact)
    red = _reduced(cost, mean, g.exact)
    G = _tight_graph(n, src, dst, red, n * tol + 1e-12 * n, g.exact)
    best = Fraction(mean, g.denominator) if g.exact else mean
    out = {}
    for vs in nx.simple_cycles(G):
        c = _make_cycle(g, _canonical(vs))
        if g.exact:
            ok = c.mean_energy == best
        else:
            ok = c.mean_energy <= best + tol
        if ok:
            out[c.vertices] = c
    return [out[k] for k in sorted(out, key=lambda v: (len(v), v))]


# -- Peierls constant ---------------------------------------------------------

def _pair_graph(W, Q):
    """Edges (x,y)->(y,z) of the consecutive-pair graph with energy and boundary flag."""
    M = W.shape[0]
    x, y, z = np.meshgrid(np.arange(M), np.arange(M), np.arange(M), indexing="ij")
    x, y, z = x.ravel(), y.ravel(), z.ravel()
    inQ = np.zeros(M, dtype=bool)
    inQ[list(Q)] = True
    regular = (x == y) & (y == z) & inQ[y]
    return x * M + y, y * M + z, W[y, z], (~regular).astype(np.int64)


def peierls_constant(m: BlockModel, Q, shift=None, tol: float | None = None, max_blocks: int = 16):
    """Largest c with H(s, s_q) >= c * (boundary sites of s) for every local excitation.

    A block site i is regular when s(i-1) = s(i) = s(i+1) is in ``Q``; every
    other site is a boundary site. Energies are taken relative to ``shift``
    per block bond (the ground specific energy per block). Returns ``inf``
    when the block space has a single element.
    """
    Q = sorted(set(int(q) for q in Q))
    if not Q:
        raise ValueError("empty set of ground blocks")
    M = m.block_space_size
    if M == 1:
        return math.inf
    if M > max_blocks:
        raise CapacityError(f"Peierls search over {M} block spins exceeds cap {max_blocks}")
    exact = m.exact
    if shift is None:
        shift = m.value(m.phibar2[Q[0], Q[0]])
    if exact:
        s = Fraction(shift) * m.denominator
        if s.denominator != 1:
            raise ValueError("shift is not representable in the exact energy unit")
        W = m.phibar2.astype(np.int64) - int(s)
    else:
        W = m.phibar2.astype(np.float64) - float(shift)
    src, dst, w, b = _pair_graph(W, Q)
    n = M * M
    tol = (1e-9 * max(1.0, float(np.max(np.abs(W))))) if tol is None and not exact else (tol or 0.0)

    # start from a cycle that contains a boundary site
    non_ground = [v for v in range(M) if v not in Q]
    if non_ground:
        v = non_ground[0]
        c = Fraction(int(W[v, v])) if exact else float(W[v, v])
    else:
        x, y = Q[0], Q[1]
        c = Fraction(int(W[x, y] + W[y, x]), 2) if exact else float(W[x, y] + W[y, x]) / 2
    for _ in range(10 * n + 10):
        if exact:
            cost = w * c.denominator - c.numerator * b
        else:
            cost = w - c * b
        mean = _karp(n, src, dst, cost, exact)
        if (mean >= 0) if exact else (mean >= -tol):
            break
        red = _reduced(cost, mean, exact)
        G = _tight_graph(n, src, dst, red, n * tol + 1e-12 * n, exact)
        edges = nx.find_cycle(G)
        ids = [u for u, _ in edges]
        nxt = [vv for _, vv in edges]
        lookup = {(int(s_), int(d_)): i for i, (s_, d_) in enumerate(zip(src, dst))}
        sel = [lookup[(a, bb)] for a, bb in zip(ids, nxt)]
        wsum, bsum = w[sel].sum(), b[sel].sum()
        if bsum == 0:
            break
        c_new = Fraction(int(wsum), int(bsum)) if exact else float(wsum) / float(bsum)
        if c_new >= c:
            break
        c = c_new
    if exact:
        return Fraction(c, m.denominator)
    return float(c)


def boundary_count(blocks, Q, q: int) -> int:
    """Boundary sites of the chain ``blocks`` embedded in the constant ground state ``q``."""
    Qs = set(Q)
    seq = [q, q, *blocks, q, q]
    n = 0
    for i in range(1, len(seq) - 1):
        if not (seq[i - 1] == seq[i] == seq[i + 1] and seq[i] in Qs):
            n += 1
    return n


@dataclass
class PeierlsAudit:
    violations: int
    checked: int
    min_slack: float


def peierls_audit(m: BlockModel, Q, q: int, c, shift=None, length: int = 12,
                  chunk: int = 1 << 18) -> PeierlsAudit:
    """Check H(s, s_q) >= c * n(s) for every block configuration of ``length`` sites."""
    Q = sorted(set(Q))
    M = m.block_space_size
    if shift is None:
        shift = m.value(m.phibar2[Q[0], Q[0]])
    if m.exact:
        W = m.phibar2.astype(np.int64) * 1 - int(Fraction(shift) * m.denominator)
        cr = Fraction(c) * m.denominator
        num, den = cr.numerator, cr.denominator
    else:
        W = m.phibar2 - float(shift)
    inQ = np.zeros(M, dtype=bool)
    inQ[Q] = True
    total = M ** length
    violations = 0
    min_slack = math.inf
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        powers = M ** np.arange(length - 1, -1, -1, dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % M
        pad = np.full((len(idx), length + 4), q, dtype=np.int64)
        pad[:, 2:-2] = digits
        energy = W[pad[:, 1:-2], pad[:, 2:-1]].sum(axis=1)
        mid = pad[:, 1:-1]
        regular = (pad[:, :-2] == mid) & (mid == pad[:, 2:]) & inQ[mid]
        nb = (~regular).sum(axis=1)
        if m.exact:
            slack_num = energy * den - num * nb
            violations += int(np.sum(slack_num < 0))
            min_slack = min(min_slack, float(np.min(slack_num)) / den / m.denominator)
        else:
            slack = energy - float(c) * nb
            tol = 1e-9 * max(1.0, float(np.max(np.abs(W))))
            violations += int(np.sum(slack < -tol))
            min_slack = min(min_slack, float(np.min(slack)))
    return PeierlsAudit(violations, total, min_slack)


# -- pipeline -----------------------------------------------------------------

@dataclass
class GroundReport:
    min_mean: Fraction | float
    cycles: list
    block_size: int
    ground_blocks: list
    words: list
    peierls_c: Fraction | float
    shift: Fraction | float
    block_model: BlockModel = dc_field(repr=False)
    source_block_size: int = 1

    @property
    def finite(self) -> bool:
        return self.peierls_c > 0

    def specific_energy(self):
        """Ground-state energy per original site."""
        return self.min_mean / self.source_block_size

    def periods(self):
        """Ground states as minimal-period words over the base spins."""
        out = []
        for w in self.words:
            out.append(minimal_period_word(w))
        return out

    def to_dict(self) -> dict:
        def num(x):
            if isinstance(x, Fraction):
                return str(x) if x.denominator != 1 else int(x)
            return float(x)

        return {
            "min_mean": num(self.min_mean),
            "cycles": [{"vertices": list(c.vertices), "mean": num(c.mean_energy)} for c in self.cycles],
            "block_size": self.block_size,
            "Q": list(self.ground_blocks),
            "words": [list(w) for w in self.words],
            "peierls_c": ("inf" if self.peierls_c == math.inf
                          else None if self.peierls_c != self.peierls_c else num(self.peierls_c)),
            "shift": num(self.shift),
        }


def minimal_period_word(word) -> tuple:
    word = tuple(word)
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word == word[:p] * (n // p):
            return word[:p]
    return word


def ground_states(H: Hamiltonian, N: int, tol: float | None = None, cap: int = 4096,
                  peierls_cap: int = 16) -> GroundReport:
    """Coarse-grain, find minimal cycles, re-block so ground states are constant, shift, Peierls."""
    m = coarse_grain(H, N, cap)
    g = EnergyGraph(m.phibar2, m.denominator)
    cycles = minimal_cycles(g, tol, max_vertices=None)
    min_mean = cycles[0].mean_energy
    L = math.lcm(*(c.length for c in cycles))
    if L > 1:
        m2 = coarse_grain(H, N * L, cap)
    else:
        m2 = m
    Q = set()
    for c in cycles:
        vs = list(c.vertices)
        for r in range(len(vs)):
            rot = vs[r:] + vs[:r]
            word = []
            for v in rot * (L // len(vs)):
                word.extend(m.decode(v))
            Q.add(m2.encode(word))
    Q = sorted(Q)
    shift = min_mean * L
    for q in Q:
        e = m2.value(m2.phibar2[q, q]) - shift
        if (e != 0) if m2.exact else abs(e) > 1e-8 * max(1.0, abs(float(shift))):
            raise AssertionError("ground block does not reach the minimal specific energy")
    if m2.block_space_size <= peierls_cap:
        c = peierls_constant(m2, Q, shift, tol)
    else:
        c = math.nan
    words = [m2.decode(q) for q in Q]
    return GroundReport(min_mean, cycles, N * L, Q, words, c, shift, m2, N)
