"""Finite-range pattern potentials and horizontal Hamiltonians.

A Hamiltonian is a list of pattern potentials ``phi_A``; the energy of a
finite window is the sum of ``phi_A(s_{A+x})`` over anchors ``x`` in the
window. Tables may be floats or, in exact mode, rationals sharing a common
denominator; exact tables are evaluated as scaled integers so that energy
ties are decided without rounding.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .lattice import Configuration, Window


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(repr(float(x)))


def _normalize_pattern(pattern, dimension):
    out = []
    for a in pattern:
        a = (int(a),) if np.isscalar(a) else tuple(int(x) for x in a)
        if len(a) != dimension:
            raise ValueError(f"pattern element {a} has wrong dimension")
        if any(x < 0 for x in a):
            raise ValueError("pattern coordinates must be non-negative")
        out.append(a)
    if len(set(out)) != len(out):
        raise ValueError("pattern has repeated sites")
    if (0,) * dimension not in out:
        raise ValueError("pattern must contain the origin")
    return tuple(out)


@dataclass(frozen=True)
class PatternPotential:
    """Energy table over spin assignments of a finite pattern A containing 0.

    ``residue`` restricts the anchors to sites congruent to it modulo the
    Hamiltonian period; ``None`` means every site.
    """

    pattern: tuple
    table: np.ndarray
    residue: tuple | None = None

    @property
    def reach(self) -> int:
        return max(max(a) for a in self.pattern)


class Hamiltonian:
    """Finite-range Hamiltonian on Z^d built from pattern potentials.

    ``denominator`` switches on exact mode: every table entry times the
    denominator must be an integer.
    """

    def __init__(self, spin_labels, terms, period: int = 1, dimension: int = 1,
                 denominator: int | None = None):
        self.spin_labels = tuple(str(x) for x in spin_labels)
        self.nspin = len(self.spin_labels)
        if self.nspin < 1:
            raise ValueError("empty spin space")
        if period < 1:
            raise ValueError("period must be >= 1")
        self.period = int(period)
        self.dimension = int(dimension)
        self.denominator = int(denominator) if denominator is not None else None
        norm = []
        for t in terms:
            if not isinstance(t, PatternPotential):
                t = PatternPotential(*t)
            pattern = _normalize_pattern(t.pattern, self.dimension)
            residue = t.residue
            if residue is not None:
                residue = (int(residue),) * self.dimension if np.isscalar(residue) else tuple(residue)
                if len(residue) != self.dimension:
                    raise ValueError("residue dimension mismatch")
                residue = tuple(r % self.period for r in residue)
            shape = (self.nspin,) * len(pattern)
            if self.exact:
                table = np.empty(shape, dtype=object)
                src = np.asarray(t.table, dtype=object)
                if src.shape != shape:
                    raise ValueError(f"table shape {src.shape} != {shape}")
                for idx in np.ndindex(shape):
                    table[idx] = _as_fraction(src[idx])
            else:
                table = np.array(t.table, dtype=np.float64)
                if table.shape != shape:
                    raise ValueError(f"table shape {table.shape} != {shape}")
                if not np.all(np.isfinite(table)):
                    raise ValueError("non-finite energy")
            table.setflags(write=False)
            norm.append(PatternPotential(pattern, table, residue))
        self.terms = tuple(norm)
        self._raw = [self._to_raw(t.table) for t in self.terms]

    @property
    def exact(self) -> bool:
        return self.denominator is not None

    @property
    def range(self) -> int:
        return max((t.reach for t in self.terms), default=0)

    def _to_raw(self, table):
        if not self.exact:
            return table
        raw = np.empty(table.shape, dtype=np.int64)
        for idx in np.ndindex(table.shape):
            v = table[idx] * self.denominator
            if v.denominator != 1:
                raise ValueError(f"entry {table[idx]} is not a multiple of 1/{self.denominator}")
            raw[idx] = int(v)
        return raw

    def value(self, raw):
        """Convert a raw (possibly scaled) energy sum to an energy."""
        if self.exact:
            return Fraction(int(raw), self.denominator)
        return float(raw)

    def raw_tables(self):
        return list(self._raw)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def combine(cls, hams, coeffs):
        """sum_k coeffs[k] * hams[k] as a single Hamiltonian."""
        hams = list(hams)
        base = hams[0]
        for h in hams[1:]:
            if (h.spin_labels, h.dimension) != (base.spin_labels, base.dimension):
                raise ValueError("Hamiltonians do not share spin space and dimension")
        period = math.lcm(*(h.period for h in hams))
        exact = all(h.exact for h in hams)
        terms = []
        for h, c in zip(hams, coeffs):
            c = _as_fraction(c) if exact else float(c)
            for t in h.terms:
                if exact:
                    table = np.vectorize(lambda x, c=c: x * c, otypes=[object])(t.table)
                else:
                    table = t.table * c
                residue = t.residue
                if residue is not None and period != h.period:
                    # spread the residue class over the finer period
                    for shift in itertools.product(range(period // h.period), repeat=h.dimension):
                        r = tuple(x + s * h.period for x, s in zip(residue, shift))
                        terms.append(PatternPotential(t.pattern, table, r))
                    continue
                terms.append(PatternPotential(t.pattern, table, residue))
        den = None
        if exact:
            den = 1
            for t in terms:
                for v in t.table.flat:
                    den = math.lcm(den, v.denominator)
        return cls(base.spin_labels, terms, period, base.dimension, den)

    def scaled(self, alpha):
        return Hamiltonian.combine([self], [alpha])

    # -- JSON -----------------------------------------------------------------

    def to_dict(self) -> dict:
        def enc(v):
            if self.exact:
                return int(v) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
            return float(v)

        terms = []
        for t in self.terms:
            table = {}
            for idx in np.ndindex(t.table.shape):
                table[",".join(self.spin_labels[i] for i in idx)] = enc(t.table[idx])
            pattern = [a[0] for a in t.pattern] if self.dimension == 1 else [list(a) for a in t.pattern]
            entry = {"pattern": pattern, "table": table}
            if t.residue is not None:
                entry["residue"] = t.residue[0] if self.dimension == 1 else list(t.residue)
            terms.append(entry)
        out = {"spins": list(self.spin_labels), "dimension": self.dimension,
               "period": self.period, "terms": terms}
        if self.exact:
            out["denominator"] = self.denominator
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "Hamiltonian":
        allowed = {"spins", "dimension", "period", "terms", "denominator"}
        extra = set(doc) - allowed
        if extra:
            raise ValueError(f"unknown Hamiltonian keys: {sorted(extra)}")
        labels = [str(x) for x in doc["spins"]]
        index = {lab: i for i, lab in enumerate(labels)}
        dim = int(doc.get("dimension", 1))
        den = doc.get("denominator")
        terms = []
        for entry in doc["terms"]:
            extra = set(entry) - {"pattern", "table", "residue"}
            if extra:
                raise ValueError(f"unknown term keys: {sorted(extra)}")
            pattern = entry["pattern"]
            shape = (len(labels),) * len(pattern)
            table = np.empty(shape, dtype=object)
            seen = set()
            for key, val in entry["table"].items():
                parts = key.split(",")
                if len(parts) != len(pattern) or any(p not in index for p in parts):
                    raise ValueError(f"bad assignment key {key!r}")
                idx = tuple(index[p] for p in parts)
                table[idx] = _as_fraction(val) if den is not None else float(val)
                seen.add(idx)
            if len(seen) != table.size:
                raise ValueError(f"table for pattern {pattern} does not cover all assignments")
            terms.append(PatternPotential(pattern, table, entry.get("residue")))
        return cls(labels, terms, int(doc.get("period", 1)), dim, den)

    @classmethod
    def from_json(cls, text: str) -> "Hamiltonian":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        mode = f"exact/{self.denominator}" if self.exact else "float"
        return (f"Hamiltonian(|S|={self.nspin}, d={self.dimension}, R={self.range}, "
                f"period={self.period}, terms={len(self.terms)}, {mode})")


@dataclass
class HamiltonianFamily:
    """H_g = base + sum_k mu_k * perturbations[k]."""

    base: Hamiltonian
    perturbations: list
    mu: list

    def __post_init__(self):
        self.perturbations = list(self.perturbations)
        self.mu = list(self.mu)
        if len(self.mu) != len(self.perturbations):
            raise ValueError("need one mu per perturbation")
        for h in self.perturbations:
            if (h.spin_labels, h.dimension) != (self.base.spin_labels, self.base.dimension):
                raise ValueError("perturbation does not share spin space/dimension")

    def combined(self) -> Hamiltonian:
        if not self.perturbations:
            return self.base
        return Hamiltonian.combine([self.base, *self.perturbations], [1, *self.mu])

    @property
    def range(self) -> int:
        return max(h.range for h in [self.base, *self.perturbations])


# -- evaluation ---------------------------------------------------------------

def anchor_energies(H: Hamiltonian, arr, arr_lo, anchor_lo, anchor_shape):
    """Raw energy of every anchored term, summed per anchor.

    ``arr`` holds spins on the box starting at ``arr_lo``; its last
    ``H.dimension`` axes are spatial and any leading axes are batch axes.
    The box must extend ``H.range`` past the anchor box on the upper side.
    """
    arr = np.asarray(arr)
    d = H.dimension
    lead = arr.shape[:-d] if d else arr.shape
    dtype = np.int64 if H.exact else np.float64
    total = np.zeros(lead + tuple(anchor_shape), dtype=dtype)
    base = [a - b for a, b in zip(anchor_lo, arr_lo)]
    for term, raw in zip(H.terms, H._raw):
        idx = np.zeros(lead + tuple(anchor_shape), dtype=np.int64)
        for a in term.pattern:
            sl = tuple(slice(b + x, b + x + n) for b, x, n in zip(base, a, anchor_shape))
            idx = idx * H.nspin + arr[(Ellipsis,) + sl]
        vals = raw.ravel()[idx]
        if term.residue is not None:
            mask = np.ones(tuple(anchor_shape), dtype=bool)
            for k, (a0, n, r) in enumerate(zip(anchor_lo, anchor_shape, term.residue)):
                m = (np.arange(a0, a0 + n) % H.period) == r
                shp = [1] * d
                shp[k] = n
                mask = mask & m.reshape(shp)
            vals = vals * mask
        total += vals
    return total


def _check_dim(c: Configuration, H: Hamiltonian):
    if c.window.dim != H.dimension:
        raise ValueError(f"configuration dimension {c.window.dim} != Hamiltonian dimension {H.dimension}")


def window_energy(c: Configuration, H: Hamiltonian):
    """H_V(s): sum of all terms anchored at sites of the window."""
    _check_dim(c, H)
    R = H.range
    w = c.window
    arr = c.resolve(w.lo, tuple(n + R for n in w.shape))
    return H.value(anchor_energies(H, arr, w.lo, w.lo, w.shape).sum())


def relative_energy(s1: Configuration, s2: Configuration, H: Hamiltonian):
    """H(s1, s2) for two configurations that agree outside a common window."""
    _check_dim(s1, H)
    if not s1.same_exterior(s2):
        raise ValueError("configurations do not share window and exterior")
    w = s1.window
    if w.periodic:
        return window_energy(s1, H) - window_energy(s2, H)
    R = H.range
    lo = tuple(a - R for a in w.lo)
    shape = tuple(n + 2 * R for n in w.shape)
    ashape = tuple(n + R for n in w.shape)
    e1 = anchor_energies(H, s1.resolve(lo, shape), lo, lo, ashape)
    e2 = anchor_energies(H, s2.resolve(lo, shape), lo, lo, ashape)
    return H.value((e1 - e2).sum())


def specific_energy(block, H: Hamiltonian):
    """Energy per site of the periodic configuration generated by ``block``."""
    block = np.asarray(block, dtype=np.int64)
    if block.ndim == 0:
        block = block.reshape((1,) * H.dimension)
    if block.ndim != H.dimension:
        raise ValueError("block dimension mismatch")
    if any(n % H.period for n in block.shape):
        raise ValueError(f"block shape {block.shape} is not a multiple of period {H.period}")
    c = Configuration(Window.from_shape(block.shape, periodic=True), block)
    return window_energy(c, H) / block.size


@dataclass
class Nondegeneracy:
    nondegenerate: bool
    determinant: float
    condition: float
    matrix: np.ndarray


def nondegeneracy_check(family: HamiltonianFamily, ground_states, rtol: float = 1e-9) -> Nondegeneracy:
    """Test the specific-energy matrix of the perturbations completed by a row of ones."""
    r = len(ground_states)
    if len(family.perturbations) != r - 1:
        raise ValueError(f"{r} ground states need {r - 1} perturbations, got {len(family.perturbations)}")
    rows = [[float(specific_energy(g, h)) for g in ground_states] for h in family.perturbations]
    m = np.array(rows + [[1.0] * r], dtype=float)
    det = float(np.linalg.det(m))
    scale = float(np.prod(np.linalg.norm(m, axis=1)))
    with np.errstate(divide="ignore"):
        cond = float(np.linalg.cond(m))
    return Nondegeneracy(abs(det) > rtol * scale, det, cond, m)


# -- standard models ----------------------------------------------------------

def disagreement(nspin: int = 2, J=1, dimension: int = 1, exact: bool = True) -> Hamiltonian:
    """Nearest-neighbour Potts energy J * (1 - delta(s, s')) along each axis."""
    terms = []
    for k in range(dimension):
        other = tuple(1 if j == k else 0 for j in range(dimension))
        table = [[0 if a == b else J for b in range(nspin)] for a in range(nspin)]
        terms.append(PatternPotential([(0,) * dimension, other], np.array(table, dtype=object)))
    den = _as_fraction(J).denominator if exact else None
    return Hamiltonian([str(i) for i in range(nspin)], terms, 1, dimension, den)


def agreement(nspin: int = 2, J=1, exact: bool = True) -> Hamiltonian:
    """Antiferromagnetic 1D model J * delta(s, s')."""
    table = [[J if a == b else 0 for b in range(nspin)] for a in range(nspin)]
    den = _as_fraction(J).denominator if exact else None
    return Hamiltonian([str(i) for i in range(nspin)],
                       [PatternPotential([0, 1], np.array(table, dtype=object))], 1, 1, den)


def field(values, dimension: int = 1, exact: bool = True) -> Hamiltonian:
    """Single-site potential phi_{0}(s) = values[s]."""
    values = [_as_fraction(v) for v in values] if exact else [float(v) for v in values]
    den = math.lcm(*(v.denominator for v in values)) if exact else None
    return Hamiltonian([str(i) for i in range(len(values))],
                       [PatternPotential([(0,) * dimension], np.array(values, dtype=object))],
                       1, dimension, den)
