"""Metropolis sampling of the laminated model with ground-state boundary conditions.

Sites outside the simulated window keep the lifted ground state (or the window
is a torus). Updates sweep the window in lexicographic order of (i..., t); the
proposal is a uniformly chosen different spin and is accepted with probability
min(1, exp(-beta dH)). Random numbers come from numpy's Philox generator, one
block of sweeps at a time, so a chain is reproducible from its seed alone.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .contour import REGULAR, classify_array
from .laminate import LaminatedModel, layer_energies
from .lattice import Configuration, Window, tile

RNG_NAME = "numpy.random.Philox"
SCHEDULE = "sequential-lexicographic"


@dataclass(frozen=True)
class ChainSpec:
    shape: tuple
    q: int | None
    beta: float
    sweeps: int
    thermalization: int = 0
    seed: int = 0
    stride: int = 1
    periodic: bool = False
    init: str = "ground"
    record: bool = False

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if not self.sweeps > self.thermalization >= 0:
            raise ValueError("need sweeps > thermalization >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if not self.periodic and self.q is None:
            raise ValueError("a fixed-boundary chain needs a boundary label q")
        if self.init not in ("ground", "random"):
            raise ValueError(f"unknown initial state {self.init!r}")

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "q": self.q, "beta": self.beta, "sweeps": self.sweeps,
                "thermalization": self.thermalization, "seed": self.seed, "stride": self.stride,
                "periodic": self.periodic, "init": self.init}


@dataclass(frozen=True)
class Measurement:
    sweep: int
    fractions: tuple
    energy: float
    acceptance: float


@dataclass
class ChainResult:
    spec: ChainSpec
    measurements: list
    acceptance: float
    final: np.ndarray
    recorded: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def series(self, name: str) -> np.ndarray:
        if name == "energy":
            return np.array([m.energy for m in self.measurements])
        if name == "acceptance":
            return np.array([m.acceptance for m in self.measurements])
        if name == "fractions":
            return np.array([m.fractions for m in self.measurements])
        raise KeyError(name)

    @property
    def autocorrelation(self) -> float:
        return integrated_autocorr(self.series("energy"))

    def mean_stderr(self, x) -> tuple:
        x = np.asarray(x, dtype=float)
        return float(x.mean()), stderr(x)


# -- statistics ---------------------------------------------------------------

def integrated_autocorr(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's self-consistent window."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4 or np.var(x) == 0:
        return 0.5
    y = x - x.mean()
    f = np.fft.rfft(y, n=2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 0.5
    for m in range(1, n):
        tau += acf[m]
        if m >= c * tau:
            break
    return max(float(tau), 0.5)


def stderr(x) -> float:
    """Standard error of the mean corrected by the integrated autocorrelation time."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        return math.inf
    return float(math.sqrt(np.var(x, ddof=1) * 2 * integrated_autocorr(x) / n))


# -- site tables --------------------------------------------------------------

class SiteTables:
    """Flat index tables of the term instances and vertical neighbours of each site."""

    def __init__(self, model: LaminatedModel, shape, periodic: bool, lo=None):
        d = model.hdim
        H = model.H
        R = H.range
        self.model = model
        self.shape = tuple(shape)
        if len(self.shape) != d + 1:
            raise ValueError("window dimension mismatch")
        self.periodic = periodic
        self.lo = tuple(lo) if lo is not None else (0,) * (d + 1)
        if periodic:
            self.pad = (0,) * (d + 1)
            self.full_shape = self.shape
        else:
            self.pad = (R,) * d + (1,)
            self.full_shape = tuple(n + 2 * p for n, p in zip(self.shape, self.pad))
        nsites = int(np.prod(self.shape))
        coords = np.array(np.unravel_index(np.arange(nsites), self.shape))  # (d+1, n)
        self.site_flat = self._flat(coords)
        tabs, offs, widths = [], [], []
        off = 0
        pmax = max(len(t.pattern) for t in H.terms) if H.terms else 1
        inst = []
        for k, (term, raw) in enumerate(zip(H.terms, H.raw_tables())):
            vals = np.asarray(raw, dtype=np.float64).ravel()
            if H.exact:
                vals = vals / H.denominator
            tabs.append(vals)
            offs.append(off)
            off += vals.size
            p = len(term.pattern)
            for j, oj in enumerate(term.pattern):
                anchor = coords.copy()
                anchor[:d] -= np.array(oj)[:, None]
                keep = np.ones(nsites, dtype=bool)
                if term.residue is not None:
                    for a in range(d):
                        keep &= (anchor[a] + self.lo[a]) % H.period == term.residue[a]
                sites = np.full((nsites, pmax), -1, dtype=np.int64)
                for m, om in enumerate(term.pattern):
                    c = anchor.copy()
                    c[:d] += np.array(om)[:, None]
                    sites[:, m] = self._flat(c)
                inst.append((keep, k, j, p, sites))
        self.tables = np.concatenate(tabs) if tabs else np.zeros(1)
        self.offsets = np.array(offs, dtype=np.int64)
        n_inst = len(inst)
        self.inst_on = np.zeros((nsites, max(n_inst, 1)), dtype=np.bool_)
        self.inst_term = np.zeros(max(n_inst, 1), dtype=np.int64)
        self.inst_pos = np.zeros(max(n_inst, 1), dtype=np.int64)
        self.inst_len = np.zeros(max(n_inst, 1), dtype=np.int64)
        self.inst_sites = np.zeros((nsites, max(n_inst, 1), pmax), dtype=np.int64)
        for a, (keep, k, j, p, sites) in enumerate(inst):
            self.inst_on[:, a] = keep
            self.inst_term[a] = k
            self.inst_pos[a] = j
            self.inst_len[a] = p
            self.inst_sites[:, a, :] = sites
        up = coords.copy()
        up[d] += 1
        down = coords.copy()
        down[d] -= 1
        self.vert = np.stack([self._flat(up), self._flat(down)], axis=1)

    def _flat(self, coords) -> np.ndarray:
        c = np.asarray(coords) + np.array(self.pad)[:, None]
        if self.periodic:
            return np.ravel_multi_index(tuple(c), self.full_shape, mode="wrap")
        return np.ravel_multi_index(tuple(c), self.full_shape)

    def embed(self, spins, q: int | None) -> np.ndarray:
        """Flat working array: window spins surrounded by the fixed ground state."""
        if self.periodic:
            return np.array(spins, dtype=np.int64).ravel().copy()
        lo = tuple(a - p for a, p in zip(self.lo, self.pad))
        full = tile(self.model.lifted(q), lo, self.full_shape).copy()
        inner = tuple(slice(p, p + n) for p, n in zip(self.pad, self.shape))
        full[inner] = spins
        return full.ravel()

    def window_spins(self, flat) -> np.ndarray:
        full = flat.reshape(self.full_shape)
        inner = tuple(slice(p, p + n) for p, n in zip(self.pad, self.shape))
        return full[inner].copy()


@numba.njit(cache=True, nogil=True)
def _delta(spins, x, new, site_flat, inst_on, inst_term, inst_pos, inst_len, inst_sites,
           tables, offsets, vert, lam, nspin):
    fx = site_flat[x]
    old = spins[fx]
    d = 0.0
    for a in range(inst_on.shape[1]):
        if not inst_on[x, a]:
            continue
        p = inst_len[a]
        idx = 0
        w_j = 1
        for m in range(p):
            idx = idx * nspin + spins[inst_sites[x, a, m]]
        for m in range(p - 1 - inst_pos[a]):
            w_j *= nspin
        base = offsets[inst_term[a]]
        d += tables[base + idx + (new - old) * w_j] - tables[base + idx]
    for b in range(2):
        nb = spins[vert[x, b]]
        d += lam * ((1.0 if new != nb else 0.0) - (1.0 if old != nb else 0.0))
    return d


@numba.njit(cache=True, nogil=True)
def _sweeps(spins, u, site_flat, inst_on, inst_term, inst_pos, inst_len, inst_sites,
            tables, offsets, vert, lam, beta, nspin):
    accepted = 0
    nsweeps = u.shape[0]
    n = site_flat.shape[0]
    for s in range(nsweeps):
        for x in range(n):
            old = spins[site_flat[x]]
            new = (old + 1 + int(u[s, x, 0] * (nspin - 1))) % nspin
            dE = _delta(spins, x, new, site_flat, inst_on, inst_term, inst_pos, inst_len,
                        inst_sites, tables, offsets, vert, lam, nspin)
            if dE <= 0.0 or u[s, x, 1] < math.exp(-beta * dE):
                spins[site_flat[x]] = new
                accepted += 1
    return accepted


def acceptance_probability(dE: float, beta: float) -> float:
    return 1.0 if dE <= 0 else math.exp(-beta * dE)


def local_delta(tables: SiteTables, flat_spins, site: int, new: int) -> float:
    """Energy change of setting window site number ``site`` to ``new``."""
    t = tables
    return float(_delta(flat_spins, site, new, t.site_flat, t.inst_on, t.inst_term, t.inst_pos,
                        t.inst_len, t.inst_sites, t.tables, t.offsets, t.vert, t.model.lam, t.model.nspin))


# -- observables --------------------------------------------------------------

def order_parameters(s: Configuration, model: LaminatedModel) -> np.ndarray:
    """Fraction of columns of the window that are q-regular, for every q."""
    q_ext = None if s.window.periodic else s.label
    kind, label = classify_array(s.spins, s.window.lo[:model.hdim], model, q_ext, s.window.periodic)
    regular = kind == REGULAR
    n = kind.size
    return np.array([np.sum(regular & (label == q)) / n for q in range(model.nground)])


def energy_per_site(tables: SiteTables, flat) -> float:
    """Energy per window site of every term touching the window.

    On a torus this is the horizontal terms anchored in the window plus one
    vertical bond per site.
    """
    model = tables.model
    d = model.hdim
    R = model.H.range
    full = flat.reshape(tables.full_shape)
    T = tables.shape[d]
    if tables.periodic:
        idx = [np.arange(n + R) % n for n in tables.shape[:d]]
        arr = full[np.ix_(*idx, np.arange(T))]
        vert = np.sum(full != np.roll(full, -1, axis=d))
        lo = tables.lo[:d]
        eh = layer_energies(model, arr, lo, lo, tables.shape[:d]).sum()
    else:
        hs = tuple(slice(p, p + n) for p, n in zip(tables.pad[:d], tables.shape[:d]))
        arr = full[..., 1:1 + T]
        lo = tuple(a - R for a in tables.lo[:d])
        eh = layer_energies(model, arr, lo, lo, tuple(n + R for n in tables.shape[:d])).sum()
        col = full[hs]
        vert = np.sum(col[..., 1:] != col[..., :-1])
    return float(eh + model.lam * vert) / int(np.prod(tables.shape))


def _measure(tables: SiteTables, flat, spec: ChainSpec, sweep: int, acc: float) -> Measurement:
    model = tables.model
    spins = tables.window_spins(flat)
    q_ext = None if spec.periodic else spec.q
    kind, label = classify_array(spins, tables.lo[:model.hdim], model, q_ext, spec.periodic)
    regular = kind == REGULAR
    fr = tuple(float(np.sum(regular & (label == q)) / kind.size) for q in range(model.nground))
    return Measurement(sweep, fr, energy_per_site(tables, flat), acc)


# -- chains -------------------------------------------------------------------

def run_chain(spec: ChainSpec, model: LaminatedModel) -> ChainResult:
    """Metropolis chain; one measurement every ``stride`` sweeps after thermalization."""
    if spec.shape[-1] % model.l:
        raise ValueError("window height must be a multiple of the column height l")
    tables = SiteTables(model, spec.shape, spec.periodic)
    rng = np.random.Generator(np.random.Philox(spec.seed))
    q0 = spec.q if spec.q is not None else 0
    if spec.init == "ground":
        spins = tile(model.lifted(q0), tables.lo, spec.shape)
    else:
        spins = rng.integers(0, model.nspin, size=spec.shape)
    flat = tables.embed(spins, spec.q)
    nsites = len(tables.site_flat)
    args = (tables.site_flat, tables.inst_on, tables.inst_term, tables.inst_pos, tables.inst_len,
            tables.inst_sites, tables.tables, tables.offsets, tables.vert, float(model.lam),
            float(spec.beta), int(model.nspin))
    done = 0
    total_acc = 0
    meas = []
    rec = []
    block = max(1, min(spec.stride, 256))
    if spec.thermalization:
        left = spec.thermalization
        while left:
            n = min(left, 256)
            u = rng.random((n, nsites, 2))
            _sweeps(flat, u, *args)
            left -= n
        done = spec.thermalization
    while done < spec.sweeps:
        acc = 0
        n_block = min(spec.stride, spec.sweeps - done)
        left = n_block
        while left:
            n = min(left, block)
            u = rng.random((n, nsites, 2))
            acc += _sweeps(flat, u, *args)
            left -= n
        done += n_block
        total_acc += acc
        rate = acc / (n_block * nsites)
        meas.append(_measure(tables, flat, spec, done, rate))
        if spec.record:
            rec.append(tables.window_spins(flat))
    measured = spec.sweeps - spec.thermalization
    meta = {"rng": RNG_NAME, "schedule": SCHEDULE, "numba": numba.__version__}
    return ChainResult(spec, meas, total_acc / (measured * nsites), tables.window_spins(flat),
                       np.array(rec) if spec.record else None, meta)


# -- scans --------------------------------------------------------------------

@dataclass
class ScanRow:
    lam: float
    q_boundary: int
    seed: int
    fractions: tuple
    fraction_stderr: tuple
    energy: float
    energy_stderr: float
    acceptance: float
    tau: float
    measurements: list = field(default_factory=list, repr=False)


@dataclass
class ScanResult:
    rows: list
    dependence: dict
    dependence_stderr: dict
    threshold: float | None
    metadata: dict = field(default_factory=dict)


def boundary_dependence(rows, lam, nground: int):
    """Mean over q of (fraction q under boundary q) - (fraction q under the other boundaries)."""
    vals, errs = [], []
    for q in range(nground):
        own = [r.fractions[q] for r in rows if r.lam == lam and r.q_boundary == q]
        other = [r.fractions[q] for r in rows if r.lam == lam and r.q_boundary != q]
        if not own or not other:
            continue
        vals.append(np.mean(own) - np.mean(other))
        e_own = np.std(own, ddof=1) / math.sqrt(len(own)) if len(own) > 1 else 0.0
        e_oth = np.std(other, ddof=1) / math.sqrt(len(other)) if len(other) > 1 else 0.0
        errs.append(math.hypot(e_own, e_oth))
    if not vals:
        return math.nan, math.nan
    return float(np.mean(vals)), float(math.sqrt(np.sum(np.square(errs))) / len(errs))


def coexistence_scan(model: LaminatedModel, beta: float, lambda_grid, shape, seeds,
                     sweeps: int, thermalization: int, stride: int = 10, threads: int = 1,
                     level: float = 0.5) -> ScanResult:
    """Chains for every (lambda, boundary q, seed); the threshold is the first lambda
    whose boundary dependence exceeds ``level``."""
    grid = [float(x) for x in lambda_grid]
    if not grid:
        raise ValueError("empty lambda grid")
    jobs = [(lam, q, int(seed)) for lam in grid for q in range(model.nground) for seed in seeds]

    def work(job):
        lam, q, seed = job
        spec = ChainSpec(shape, q, beta, sweeps, thermalization, seed, stride)
        res = run_chain(spec, model.with_lambda(lam))
        fr = res.series("fractions")
        en = res.series("energy")
        return ScanRow(lam, q, seed, tuple(fr.mean(axis=0).tolist()),
                       tuple(stderr(fr[:, k]) for k in range(fr.shape[1])),
                       float(en.mean()), stderr(en), res.acceptance, integrated_autocorr(en),
                       res.measurements)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(work, jobs))
    else:
        rows = [work(j) for j in jobs]
    rows.sort(key=lambda r: (r.lam, r.q_boundary, r.seed))
    dep, err = {}, {}
    for lam in grid:
        dep[lam], err[lam] = boundary_dependence(rows, lam, model.nground)
    threshold = next((lam for lam in sorted(grid) if dep[lam] > level), None)
    meta = {"rng": RNG_NAME, "schedule": SCHEDULE, "beta": beta, "shape": list(shape),
            "sweeps": sweeps, "thermalization": thermalization, "stride": stride}
    return ScanResult(rows, dep, err, threshold, meta)


def anisotropic_ising_critical_lambda(beta: float, J: float = 1.0) -> float:
    """Vertical coupling at which the square-lattice Ising model with disagreement
    energies J (horizontal) and lambda (vertical) is critical:
    sinh(beta J) sinh(beta lambda) = 1."""
    return math.asinh(1.0 / math.sinh(beta * J)) / beta
