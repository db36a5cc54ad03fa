"""Exact partition functions of small volumes and the contour factorization.

Volumes are finite sets of columns. A configuration of ``R_q(V)`` equals the
lifted ground state q outside V, keeps its boundary at distance > 1 from the
complement of V and has external contours whose interiors lie in V. Such a
configuration can only differ from s_q on the core of V (columns whose whole
neighbourhood lies in V), so enumeration runs over core sites by default.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .blockspin import block_digits
from .contour import (ColumnBox, Contour, _column_sites, _structure, classify_array,
                      connected_subsets, extract_contours, interior_components, standard_config)
from .laminate import LaminatedModel, _float, layer_energies, relative_energy_laminated
from .lattice import CapacityError, Configuration, Window, tile
from .potential import anchor_energies

MAX_SITES = 24


@dataclass(frozen=True)
class PartitionResult:
    value: float
    terms: int
    log_value: float


def _columns(V) -> list:
    if isinstance(V, ColumnBox):
        return sorted(V.columns())
    return sorted(tuple(int(x) for x in c) for c in V)


def _neighbours(col):
    for o in itertools.product((-1, 0, 1), repeat=len(col)):
        if any(o):
            yield tuple(a + b for a, b in zip(col, o))


def core_columns(V) -> list:
    cols = set(_columns(V))
    return sorted(c for c in cols if all(nb in cols for nb in _neighbours(c)))


class _Canvas:
    """Column-aligned window around a set of columns, filled with a ground state."""

    def __init__(self, cols, q, model: LaminatedModel):
        self.model = model
        d = model.hdim
        l = model.l
        a = np.array(cols).reshape(-1, d + 1)
        margin = max(model.r, model.H.range) + 2
        hlo = a[:, :d].min(axis=0) - margin
        hhi = a[:, :d].max(axis=0) + margin
        klo = int(a[:, d].min()) - 2
        khi = int(a[:, d].max()) + 2
        self.window = Window(tuple(int(x) for x in hlo) + (klo * l,),
                             tuple(int(x) for x in hhi) + ((khi + 1) * l - 1,))
        self.origin = tuple(int(x) for x in hlo) + (klo,)
        self.q = q
        self.base = tile(model.lifted(q), self.window.lo, self.window.shape)
        self.grid_shape = self.window.shape[:d] + (self.window.shape[d] // l,)

    def mask(self, cols) -> np.ndarray:
        m = np.zeros(self.grid_shape, dtype=bool)
        if cols:
            idx = np.array(cols) - np.array(self.origin)
            m[tuple(idx.T)] = True
        return m

    def site_index(self, cols):
        return _column_sites(self.window, None, cols, self.model.l)

    def batch(self, cols, values) -> np.ndarray:
        """Canvas copies with the sites of ``cols`` set from rows of ``values``."""
        n = len(values)
        arr = np.repeat(self.base[None], n, axis=0)
        if cols:
            ix = self.site_index(cols)
            flat = values.reshape(n, len(cols), self.model.l)
            arr[(slice(None),) + ix] = flat
        return arr

    def classify(self, arr):
        return classify_array(arr, self.window.lo[:self.model.hdim], self.model, self.q)

    def energies(self, arr) -> np.ndarray:
        """Laminated energy of each canvas relative to the ground state (float)."""
        model = self.model
        d = model.hdim
        R = model.H.range
        lo = tuple(a - R for a in self.window.lo[:d]) + (self.window.lo[d],)
        pad = [(0, 0)] + [(R, R)] * d + [(0, 0)]
        shape = tuple(n + 2 * R for n in self.window.shape[:d]) + (self.window.shape[d],)
        ground = tile(model.lifted(self.q), lo, shape)
        full = np.pad(arr, pad)
        inner = tuple(slice(R, R + n) for n in self.window.shape[:d])
        outside = np.ones(shape, dtype=bool)
        outside[inner + (slice(None),)] = False
        full[:, outside] = ground[outside]
        ashape = tuple(n + R for n in self.window.shape[:d])
        eh = layer_energies(model, full, lo, lo[:d], ashape).sum(axis=-1)
        e0 = layer_energies(model, ground[None], lo, lo[:d], ashape).sum()
        vert = np.sum(arr[..., 1:] != arr[..., :-1], axis=tuple(range(1, arr.ndim)))
        return (eh - e0) + model.lam * vert


def _weights(energies, beta):
    return np.exp(-beta * np.asarray(energies, dtype=np.float64))


def _result(weights) -> PartitionResult:
    v = math.fsum(np.asarray(weights).tolist())
    return PartitionResult(v, int(np.size(weights)), math.log(v) if v > 0 else -math.inf)


def _check_sites(n_sites: int, cap: int):
    if n_sites > cap:
        raise CapacityError(f"{n_sites} free sites exceed the enumeration cap of {cap} sites")


def _complement_connected(canvas: _Canvas, vmask) -> bool:
    lab, n = ndimage.label(~vmask, structure=_structure(vmask.ndim))
    return n <= 1


def volume_energies(V, q: int, model: LaminatedModel, core_only: bool = True,
                    cap: int = MAX_SITES, chunk: int = 1 << 14) -> np.ndarray:
    """Relative energies of all configurations of R_q(V)."""
    cols = _columns(V)
    if not cols:
        return np.zeros(1)
    free = core_columns(cols) if core_only else cols
    n_sites = len(free) * model.l
    _check_sites(n_sites, cap)
    canvas = _Canvas(cols, q, model)
    core_mask = canvas.mask(core_columns(cols))
    vmask = canvas.mask(cols)
    simple = _complement_connected(canvas, vmask)
    S = model.nspin
    total = S ** n_sites
    out = []
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        powers = S ** np.arange(n_sites - 1, -1, -1, dtype=np.int64)
        vals = (idx[:, None] // powers[None, :]) % S if n_sites else np.zeros((len(idx), 0), np.int64)
        arr = canvas.batch(free, vals)
        kind, _ = canvas.classify(arr)
        B = kind != 0
        ok = ~np.any(B & ~core_mask, axis=tuple(range(1, B.ndim)))
        if not simple:
            for j in np.nonzero(ok)[0]:
                s = Configuration(canvas.window, arr[j], model.lifted(q), label=q)
                for g in extract_contours(s, model):
                    if g.external and not all(vmask[tuple(np.array(c) - canvas.origin)] for c in g.interior):
                        ok[j] = False
                        break
        if ok.any():
            out.append(canvas.energies(arr[ok]))
    return np.concatenate(out) if out else np.zeros(0)


def xi_volume(V, q: int, model: LaminatedModel, core_only: bool = True,
              cap: int = MAX_SITES) -> PartitionResult:
    """Xi^q(V): sum of exp(-beta H(s, s_q)) over R_q(V)."""
    return _result(_weights(volume_energies(V, q, model, core_only, cap), model.beta))


# -- contour partition functions ----------------------------------------------

@dataclass
class SupportSums:
    """Energies of every configuration whose unique external contour has support M.

    ``groups`` maps (spins on M, interior labels) to the energies of the
    configurations of L(Gamma) for that contour Gamma.
    """

    support: tuple
    interior: tuple
    groups: dict


def support_sums(M, q: int, model: LaminatedModel, fixed_local=None, cap: int = MAX_SITES,
                 chunk: int = 1 << 14) -> SupportSums:
    M = sorted(tuple(int(x) for x in c) for c in M)
    comps = [sorted(c) for c in interior_components(M)]
    inner = sorted(set().union(*map(set, comps))) if comps else []
    canvas = _Canvas(M + inner, q, model)
    l = model.l
    S = model.nspin
    free = inner if fixed_local is not None else M + inner
    n_sites = len(free) * l
    _check_sites(n_sites, cap)
    mmask = canvas.mask(M)
    region = canvas.mask(M + inner)
    st = _structure(mmask.ndim)
    near = ndimage.binary_dilation(mmask, structure=st) & ~mmask
    inner_edge = near & canvas.mask(inner)
    outer_edge = near & ~region
    comp_edges = [canvas.mask(c) & near for c in comps]
    total = S ** n_sites
    groups = {}
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        powers = S ** np.arange(n_sites - 1, -1, -1, dtype=np.int64)
        vals = (idx[:, None] // powers[None, :]) % S if n_sites else np.zeros((len(idx), 0), np.int64)
        arr = canvas.batch(free, vals)
        if fixed_local is not None:
            arr[(slice(None),) + canvas.site_index(M)] = np.asarray(fixed_local)
        kind, label = canvas.classify(arr)
        B = kind != 0
        ax = tuple(range(1, B.ndim))
        ok = ~np.any(B & ~region, axis=ax)
        ok &= np.all(B | ~mmask, axis=ax)
        ok &= ~np.any(B & inner_edge, axis=ax)
        # the exterior next to M must carry the label q
        ok &= np.all((label == q) | ~outer_edge, axis=ax)
        labs = []
        for e in comp_edges:
            lab_e = np.where(e, label, -2)
            lo_ = np.where(e, label, 10 ** 6).min(axis=ax)
            hi_ = lab_e.max(axis=ax)
            ok &= lo_ == hi_
            labs.append(hi_)
        sel = np.nonzero(ok)[0]
        if not len(sel):
            continue
        en = canvas.energies(arr[sel])
        local = arr[sel][(slice(None),) + canvas.site_index(M)]
        for j, e in enumerate(en):
            key = (local[j].tobytes(), tuple(int(x[sel[j]]) for x in labs))
            groups.setdefault(key, []).append(float(e))
    return SupportSums(tuple(M), tuple(inner), {k: np.array(v) for k, v in groups.items()})


def xi_contour(g: Contour, model: LaminatedModel, cap: int = MAX_SITES) -> PartitionResult:
    """Xi(Gamma): sum over configurations whose unique external contour is Gamma."""
    sums = support_sums(g.support, g.exterior_q, model, fixed_local=g.local_config, cap=cap)
    comps = [sorted(c) for c in interior_components(g.support)]
    want = []
    for c in comps:
        m = [k for k, cols in g.interiors.items() if set(c) <= cols]
        want.append(m[0] if m else -1)
    key = (np.asarray(g.local_config, dtype=np.int64).tobytes(), tuple(want))
    energies = sums.groups.get(key, np.zeros(0))
    if energies.size == 0:
        return PartitionResult(0.0, 0, -math.inf)
    return _result(_weights(energies, model.beta))


# -- factorization ------------------------------------------------------------

@dataclass
class FactorizationReport:
    volume: tuple
    q: int
    beta: float
    lam: float
    xi: float
    rhs: float
    residual: float
    contour_residual: float
    contours: int
    collections: int

    @property
    def log_xi(self) -> float:
        return math.log(self.xi)

    @property
    def max_residual(self) -> float:
        return max(self.residual, self.contour_residual)


def _collections(items, compatible):
    """All families of pairwise compatible items (as index tuples), including the empty one."""
    n = len(items)
    out = [()]

    def rec(start, chosen):
        for j in range(start, n):
            if all(compatible[j][i] for i in chosen):
                cur = chosen + (j,)
                out.append(cur)
                rec(j + 1, cur)
    rec(0, ())
    return out


def verify_factorization(V, q: int, model: LaminatedModel, cap: int = MAX_SITES) -> FactorizationReport:
    """Both sides of the volume factorization and the per-contour factorization.

    The left side is :func:`xi_volume`. The right side sums, over every family
    of pairwise distant and non-nested supports admissible in V, the product
    of the contour partition functions grouped by support; each contour
    partition function is found by enumerating the configurations on its
    support and interior. Each contour is also checked against
    exp(-beta H(Gamma)) times the interior volume partition functions.
    """
    cols = _columns(V)
    beta = model.beta
    lhs = xi_volume(cols, q, model, cap=cap) if cols else PartitionResult(1.0, 1, 0.0)
    vset = set(cols)
    core = core_columns(cols) if cols else []
    supports = []
    for M in connected_subsets(core, len(core)):
        inner = interior_components(M)
        if all(c in vset for comp in inner for c in comp):
            supports.append(sorted(M))
    z = []
    worst_contour = 0.0
    n_contours = 0
    xi_cache = {}
    for M in supports:
        sums = support_sums(M, q, model, cap=cap)
        comps = [sorted(c) for c in interior_components(M)]
        total = 0.0
        for (local_bytes, labels), energies in sums.groups.items():
            xi_g = math.fsum(_weights(energies, beta).tolist())
            total += xi_g
            n_contours += 1
            # per-contour factorization
            local = np.frombuffer(local_bytes, dtype=np.int64).reshape(len(M), model.l)
            interiors = {}
            for m, comp in zip(labels, comps):
                interiors.setdefault(m, set()).update(comp)
            g = Contour(tuple(M), local, q, interiors, 0, 0, 0, model.l)
            if g.conflict:
                continue
            s = standard_config(g, model)
            h = relative_energy_laminated(s, model.ground_config(s.window, q), model)
            prod = math.exp(-beta * h)
            for m, cs in g.interiors.items():
                key = (m, tuple(sorted(cs)))
                if key not in xi_cache:
                    xi_cache[key] = xi_volume(sorted(cs), m, model, cap=cap).value
                prod *= xi_cache[key]
            worst_contour = max(worst_contour, abs(xi_g - prod) / max(xi_g, 1e-300))
        z.append(total)
    # families of distant, non-nested supports
    n = len(supports)
    compat = [[True] * n for _ in range(n)]
    sets = [set(M) for M in supports]
    regions = [set(M).union(*interior_components(M)) if interior_components(M) else set(M) for M in supports]
    for i in range(n):
        for j in range(i + 1, n):
            close = any(nb in sets[j] for c in sets[i] for nb in _neighbours(c)) or bool(sets[i] & sets[j])
            nested = bool(sets[i] & regions[j]) or bool(sets[j] & regions[i])
            compat[i][j] = compat[j][i] = not (close or nested)
    fams = _collections(supports, compat)
    rhs = math.fsum(math.prod(z[i] for i in fam) for fam in fams)
    res = abs(lhs.value - rhs) / lhs.value
    return FactorizationReport(tuple(map(tuple, cols)), q, beta, model.lam, lhs.value, rhs, res,
                               worst_contour, n_contours, len(fams))


# -- transfer matrix ----------------------------------------------------------

def _strip_tables(model: LaminatedModel, W: int, cap: int = 4096):
    if model.hdim != 1:
        raise ValueError("transfer matrices need a (1+1)-dimensional model")
    S = model.nspin
    if S ** W > cap:
        raise CapacityError(f"|S|^W = {S ** W} exceeds cap {cap}")
    if W % model.H.period:
        raise ValueError("strip width must be a multiple of the horizontal period")
    rows = block_digits(S, W)
    R = model.H.range
    idx = (np.arange(W + R)) % W
    ext = rows[:, idx]
    eh = _float(model.H, anchor_energies(model.H, ext, (0,), (0,), (W,)).sum(axis=1))
    dis = np.zeros((len(rows), len(rows)), dtype=np.int64)
    for i in range(W):
        dis += rows[:, i][:, None] != rows[:, i][None, :]
    return eh, dis


def _leading(Tm, tol=1e-10, maxiter=100000):
    v = np.ones(Tm.shape[0]) / math.sqrt(Tm.shape[0])
    lam = 0.0
    for _ in range(maxiter):
        w = Tm @ v
        new = float(v @ w)
        v = w / np.linalg.norm(w)
        if abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    return lam, v


def transfer_free_energy(model: LaminatedModel, W: int, beta: float | None = None,
                         tol: float = 1e-10, cap: int = 4096) -> float:
    """log of the leading eigenvalue of the strip transfer matrix, per site of a layer.

    The strip is periodic with width ``W``; the matrix is symmetrised by
    splitting each layer's horizontal energy between its two vertical bonds.
    """
    beta = model.beta if beta is None else beta
    eh, dis = _strip_tables(model, W, cap)
    shift = eh.min()
    half = np.exp(-beta * (eh - shift) / 2)
    Tm = half[:, None] * np.exp(-beta * model.lam * dis) * half[None, :]
    lam, _ = _leading(Tm, tol)
    return (math.log(lam) - beta * shift) / W


def transfer_energy(model: LaminatedModel, W: int, beta: float | None = None,
                    tol: float = 1e-12, cap: int = 4096) -> float:
    """Mean energy per site, minus the beta-derivative of the strip free energy."""
    beta = model.beta if beta is None else beta
    eh, dis = _strip_tables(model, W, cap)
    shift = eh.min()
    half = np.exp(-beta * (eh - shift) / 2)
    Tm = half[:, None] * np.exp(-beta * model.lam * dis) * half[None, :]
    lam, v = _leading(Tm, tol)
    E = (eh[:, None] / 2 + eh[None, :] / 2 + model.lam * dis) * Tm
    return float(v @ E @ v) / (lam * float(v @ v)) / W
