"""Brute-force reference computations, written without the library's algorithms."""

import itertools
import math
from fractions import Fraction

import numpy as np


def brute_min_mean(W):
    """Minimum mean over all simple cycles of a complete digraph given as a weight matrix."""
    n = len(W)
    best = None
    for k in range(1, n + 1):
        for combo in itertools.combinations(range(n), k):
            first, rest = combo[0], combo[1:]
            for perm in itertools.permutations(rest):
                cyc = (first, *perm)
                tot = sum(Fraction(int(W[cyc[i]][cyc[(i + 1) % k]])) for i in range(k))
                mean = tot / k
                if best is None or mean < best:
                    best = mean
    return best


def term_list(H):
    """(offsets, table as dict, residue) for each term, with exact values."""
    out = []
    for t in H.terms:
        offs = [a[0] for a in t.pattern]
        tab = {idx: Fraction(t.table[idx]) if H.exact else float(t.table[idx])
               for idx in np.ndindex(t.table.shape)}
        res = None if t.residue is None else t.residue[0]
        out.append((offs, tab, res))
    return out


def ring_energy(word, H):
    """Energy of one period of the periodic 1D configuration ``word``."""
    p = len(word)
    tot = 0
    for offs, tab, res in term_list(H):
        for x in range(p):
            if res is not None and x % H.period != res:
                continue
            tot += tab[tuple(word[(x + o) % p] for o in offs)]
    return tot


def segment_energy(spins, anchors, H):
    """Sum of the terms anchored at positions ``anchors`` of the list ``spins``."""
    tot = 0
    for offs, tab, res in term_list(H):
        for x in anchors:
            if res is not None and x % H.period != res:
                continue
            tot += tab[tuple(spins[x + o] for o in offs)]
    return tot


def minimal_period(word):
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and tuple(word) == tuple(word[:p]) * (n // p):
            return tuple(word[:p])
    return tuple(word)


def brute_ground_words(H, max_period=4):
    """Minimal-period words of least specific energy among all periods <= max_period."""
    best = None
    words = set()
    for p in range(1, max_period + 1):
        if p % H.period:
            continue
        for w in itertools.product(range(H.nspin), repeat=p):
            e = Fraction(ring_energy(w, H)) / p
            if best is None or e < best:
                best, words = e, set()
            if e == best:
                words.add(minimal_period(w))
    return best, words


def ising_laminate_energy(padded, lam, J=1.0):
    """Disagreement energy of all bonds touching the inner region of a (W+2) x (T+2) array.

    Horizontal bonds between columns 0..W+1 and vertical bonds between rows
    0..T+1 are counted when at least one endpoint is interior.
    """
    a = np.asarray(padded)
    W, T = a.shape[0] - 2, a.shape[1] - 2
    e = 0.0
    for i in range(W + 1):
        for t in range(1, T + 1):
            e += J * (a[i, t] != a[i + 1, t])
    for i in range(1, W + 1):
        for t in range(T + 1):
            e += lam * (a[i, t] != a[i, t + 1])
    return e


def gibbs_marginals(shape, q, beta, lam, J=1.0):
    """P(s_x = 1) for every site of a window of the Ising laminate with boundary q."""
    W, T = shape
    n = W * T
    probs = np.zeros(shape)
    weights = []
    confs = []
    for bits in itertools.product((0, 1), repeat=n):
        a = np.full((W + 2, T + 2), q)
        a[1:-1, 1:-1] = np.array(bits).reshape(shape)
        weights.append(ising_laminate_energy(a, lam, J))
        confs.append(bits)
    e = np.array(weights)
    w = np.exp(-beta * (e - e.min()))
    w /= w.sum()
    probs = (np.array(confs).reshape(-1, W, T) * w[:, None, None]).sum(axis=0)
    return probs


def ring_free_energy(beta, W, J=1.0):
    """log Z / W of a periodic Ising ring with disagreement energy J."""
    x = math.exp(-beta * J)
    return math.log((1 + x) ** W + (1 - x) ** W) / W


def _row_matrix(beta, lam, W, J=1.0):
    rows = np.array(list(itertools.product((0, 1), repeat=W)))
    eh = np.array([J * sum(r[i] != r[(i + 1) % W] for i in range(W)) for r in rows])
    dis = (rows[:, None, :] != rows[None, :, :]).sum(axis=2)
    half = np.exp(-beta * eh / 2)
    return half[:, None] * np.exp(-beta * lam * dis) * half[None, :]


def strip_free_energy(beta, lam, W, J=1.0):
    """log of the top eigenvalue (eigvalsh) of the Ising laminate row transfer matrix, per site."""
    return math.log(np.linalg.eigvalsh(_row_matrix(beta, lam, W, J)).max()) / W


def torus_log_z(beta, lam, W, T, J=1.0):
    """log Z of the W x T Ising laminate torus from the eigenvalues of its row transfer matrix."""
    mu = np.linalg.eigvalsh(_row_matrix(beta, lam, W, J))
    top = mu.max()
    return T * math.log(top) + math.log(np.sum((mu / top) ** T))
