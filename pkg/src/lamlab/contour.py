"""Columns, their classification, contours and the energy bounds on contours.

The vertical axis of a laminated configuration is cut into columns
C_{i,k} = {(i, t): k l <= t < (k+1) l}. Columns are addressed by tuples
``(i_1, ..., i_d, k)`` in absolute coordinates, so a column grid is itself a
box of Z^{d+1} with the block index last.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .laminate import LaminatedModel, ModelStats, _float, ground_field, layer_split
from .lattice import CapacityError, Configuration, Window, tile
from .potential import anchor_energies

REGULAR, FACED, FRUSTRATED, DEFECTIVE = 0, 1, 2, 3
KIND_NAMES = {REGULAR: "regular", FACED: "faced", FRUSTRATED: "frustrated", DEFECTIVE: "defective"}


class FrameError(ValueError):
    """The boundary of a configuration reaches the frame of its window."""


@dataclass(frozen=True)
class ColumnLabel:
    kind: str
    q: int | None = None
    other: int | None = None


# -- classification -----------------------------------------------------------

def column_types(arr, l: int):
    """Split the last axis into columns of height ``l``.

    Returns ``(variable, value)`` with the column axis last; ``value`` is the
    bottom spin (the column's spin when it is invariable).
    """
    arr = np.asarray(arr)
    T = arr.shape[-1]
    if T % l:
        raise ValueError(f"vertical extent {T} is not a multiple of l={l}")
    cols = arr.reshape(arr.shape[:-1] + (T // l, l))
    variable = np.any(cols != cols[..., :1], axis=-1)
    return variable, cols[..., 0]


def _footprint(ndim_lead, d, r):
    return np.ones((1,) * ndim_lead + (2 * r + 1,) * d + (1,), dtype=bool)


def classify_array(arr, hlo, model: LaminatedModel, q_ext: int | None, periodic: bool = False):
    """Kind and label of every column of ``arr`` (vertical axis last, aligned to l).

    Outside the array the configuration is the lifted ground state ``q_ext``
    (or the array is wrapped when ``periodic``). Leading batch axes are
    allowed. Labels are -1 where no ground state matches.
    """
    d = model.hdim
    r = model.r
    arr = np.asarray(arr)
    lead = arr.ndim - d - 1
    variable, value = column_types(arr, model.l)
    hshape = arr.shape[lead:lead + d]
    fp = _footprint(lead, d, r)
    mode = "wrap" if periodic else "constant"
    frustrated = ndimage.maximum_filter(variable.astype(np.uint8), footprint=fp, mode=mode, cval=0) > 0
    label = np.full(variable.shape, -1, dtype=np.int64)
    regular_any = np.zeros(variable.shape, dtype=bool)
    for q in range(model.nground):
        g = model.ground_row(q, hlo, hshape)[..., None]
        match = (~variable) & (value == g)
        cval = 1 if (q_ext is not None and q == q_ext) else 0
        reg = ndimage.minimum_filter(match.astype(np.uint8), footprint=fp, mode=mode, cval=cval) > 0
        label = np.where(reg & (label < 0), q, label)
        regular_any |= reg
    kind = np.full(variable.shape, REGULAR, dtype=np.int8)
    # faced: a vertical neighbour is regular with another label
    if periodic:
        up, down = np.roll(label, -1, axis=-1), np.roll(label, 1, axis=-1)
    else:
        edge = q_ext if q_ext is not None else -1
        pad = [(0, 0)] * (label.ndim - 1)
        up = np.pad(label[..., 1:], pad + [(0, 1)], constant_values=edge)
        down = np.pad(label[..., :-1], pad + [(1, 0)], constant_values=edge)
    faced = regular_any & (((up >= 0) & (up != label)) | ((down >= 0) & (down != label)))
    kind[faced] = FACED
    kind[~regular_any] = DEFECTIVE
    kind[frustrated] = FRUSTRATED
    return kind, label


@dataclass
class ColumnClassification:
    kind: np.ndarray
    label: np.ndarray
    origin: tuple
    q_ext: int | None

    @property
    def boundary(self) -> np.ndarray:
        return self.kind != REGULAR

    def column(self, index) -> tuple:
        return tuple(int(a + b) for a, b in zip(index, self.origin))

    def labels(self) -> dict:
        """Map every column to its :class:`ColumnLabel`."""
        out = {}
        K = self.kind.shape[-1]
        for idx in np.ndindex(self.kind.shape):
            kd = int(self.kind[idx])
            q = int(self.label[idx])
            other = None
            if kd == FACED:
                nb = [int(self.label[idx[:-1] + (k,)]) for k in (idx[-1] - 1, idx[-1] + 1) if 0 <= k < K]
                other = next((x for x in nb if x >= 0 and x != q), None)
            out[self.column(idx)] = ColumnLabel(KIND_NAMES[kd], q if q >= 0 else None, other)
        return out

    def counts(self) -> dict:
        return {KIND_NAMES[k]: int(np.sum(self.kind == k)) for k in KIND_NAMES}


def _column_origin(window: Window, l: int) -> tuple:
    d = window.dim - 1
    if window.lo[d] % l or window.shape[d] % l:
        raise ValueError(f"window {window} is not aligned to columns of height {l}")
    return window.lo[:d] + (window.lo[d] // l,)


def classify_columns(s: Configuration, model: LaminatedModel) -> ColumnClassification:
    """Classify every column of the window of ``s``."""
    origin = _column_origin(s.window, model.l)
    q_ext = None if s.window.periodic else s.label
    if not s.window.periodic and q_ext is None:
        raise ValueError("fixed-boundary configuration needs a ground-state label")
    kind, label = classify_array(s.spins, s.window.lo[:model.hdim], model, q_ext, s.window.periodic)
    return ColumnClassification(kind, label, origin, q_ext)


# -- contours -----------------------------------------------------------------

@dataclass(eq=False)
class Contour:
    support: tuple
    local_config: np.ndarray
    exterior_q: int
    interiors: dict
    n_b: int
    n_c: int
    n_d: int
    l: int
    external: bool = True

    def __post_init__(self):
        self.support = tuple(sorted(tuple(int(x) for x in c) for c in self.support))
        self.local_config = np.asarray(self.local_config, dtype=np.int64).reshape(len(self.support), self.l)
        self.local_config.setflags(write=False)
        self.interiors = {int(m): frozenset(tuple(int(x) for x in c) for c in cols)
                          for m, cols in self.interiors.items() if cols}

    @classmethod
    def from_support(cls, support, l: int, exterior_q: int = 0, interior_label: int = 0,
                     local_config=None, counts=(0, 0, 0)) -> "Contour":
        """Geometric contour: interiors are the bounded complement components of ``support``."""
        support = sorted(set(tuple(c) for c in support))
        interiors = {}
        for comp in interior_components(support):
            interiors.setdefault(interior_label, set()).update(comp)
        if local_config is None:
            local_config = np.zeros((len(support), l), dtype=np.int64)
        n_b, n_c, n_d = counts
        return cls(tuple(support), local_config, exterior_q, interiors, n_b, n_c, n_d, l)

    @property
    def hdim(self) -> int:
        return len(self.support[0]) - 1

    @property
    def norm(self) -> int:
        """Number of columns of the support."""
        return len(self.support)

    @property
    def volumes(self) -> dict:
        return {m: len(c) for m, c in self.interiors.items()}

    @property
    def interior_volume(self) -> int:
        return sum(self.volumes.values())

    @property
    def interior(self) -> frozenset:
        return frozenset().union(*self.interiors.values()) if self.interiors else frozenset()

    @property
    def conflict(self) -> bool:
        return -1 in self.interiors

    @property
    def diameter(self) -> int:
        """Chebyshev diameter of the support as a set of sites."""
        a = np.array(self.support)
        spans = [int(a[:, j].max() - a[:, j].min()) for j in range(a.shape[1] - 1)]
        spans.append(int(a[:, -1].max() - a[:, -1].min() + 1) * self.l - 1)
        return max(spans)

    def key(self):
        return (self.support, self.local_config.tobytes(), self.exterior_q,
                tuple(sorted((m, tuple(sorted(c))) for m, c in self.interiors.items())))

    def __eq__(self, other):
        return isinstance(other, Contour) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def to_dict(self) -> dict:
        return {
            "support": [list(c) for c in self.support],
            "local_config": self.local_config.tolist(),
            "exterior_q": self.exterior_q,
            "interiors": {str(m): sorted(list(c) for c in cols) for m, cols in sorted(self.interiors.items())},
            "counts": {"faced": self.n_b, "frustrated": self.n_c, "defective": self.n_d},
            "l": self.l,
            "external": self.external,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "Contour":
        c = doc["counts"]
        return cls([tuple(x) for x in doc["support"]], np.array(doc["local_config"]), int(doc["exterior_q"]),
                   {int(m): [tuple(x) for x in cols] for m, cols in doc["interiors"].items()},
                   c["faced"], c["frustrated"], c["defective"], int(doc["l"]), bool(doc.get("external", True)))


_STRUCT = {}


def _structure(ndim):
    if ndim not in _STRUCT:
        _STRUCT[ndim] = np.ones((3,) * ndim, dtype=bool)
    return _STRUCT[ndim]


def interior_components(support) -> list:
    """Bounded components of the complement of a finite column set."""
    a = np.array(sorted(support))
    lo = a.min(axis=0) - 1
    shape = tuple(a.max(axis=0) - lo + 2)
    mask = np.zeros(shape, dtype=bool)
    mask[tuple((a - lo).T)] = True
    lab, n = ndimage.label(~mask, structure=_structure(len(shape)))
    frame = _frame_labels(lab)
    out = []
    for j in range(1, n + 1):
        if j in frame:
            continue
        out.append({tuple(int(x) for x in p + lo) for p in np.argwhere(lab == j)})
    return out


def _frame_labels(lab) -> set:
    s = set()
    for ax in range(lab.ndim):
        for end in (0, -1):
            s.update(np.unique(np.take(lab, end, axis=ax)).tolist())
    s.discard(0)
    return s


def _touches_frame(mask) -> bool:
    return any(np.take(mask, end, axis=ax).any() for ax in range(mask.ndim) for end in (0, -1))


def _column_sites(window: Window, origin, cols, l):
    """Index arrays (into the window spin array) for the given columns, shape (n, l)."""
    d = window.dim - 1
    cols = np.asarray(cols, dtype=np.int64).reshape(-1, d + 1)
    idx = [np.repeat(cols[:, j:j + 1] - window.lo[j], l, axis=1) for j in range(d)]
    t = cols[:, d:d + 1] * l + np.arange(l)[None, :] - window.lo[d]
    return tuple(idx) + (t,)


def extract_contours(s: Configuration, model: LaminatedModel,
                     classification: ColumnClassification | None = None) -> list:
    """Connected components of the boundary of ``s`` as contours, with interiors."""
    cls_ = classification or classify_columns(s, model)
    B = cls_.boundary
    if not B.any():
        return []
    if _touches_frame(B) and not s.window.periodic:
        raise FrameError("the boundary touches the window frame; enlarge the window")
    st = _structure(B.ndim)
    comp, n = ndimage.label(B, structure=st)
    origin = np.array(cls_.origin)
    regular = cls_.kind == REGULAR
    out = []
    interiors_by = []
    for j in range(1, n + 1):
        M = comp == j
        lab, nc = ndimage.label(~M, structure=st)
        frame = _frame_labels(lab)
        ring = ndimage.binary_dilation(M, structure=st) & ~M
        interiors = {}
        ext_labels = set()
        for a in range(1, nc + 1):
            A = lab == a
            edge = ring & A
            labels = set(np.unique(cls_.label[edge & regular]).tolist())
            if a in frame:
                ext_labels |= labels
                continue
            m = labels.pop() if len(labels) == 1 else -1
            interiors.setdefault(m, set()).update(
                tuple(int(x) for x in p + origin) for p in np.argwhere(A))
        if len(ext_labels) == 1:
            q = ext_labels.pop()
        else:
            q = -1
        cols = [tuple(int(x) for x in p + origin) for p in np.argwhere(M)]
        cols.sort()
        ix = _column_sites(s.window, cls_.origin, cols, model.l)
        local = s.spins[ix]
        kinds = cls_.kind[M]
        g = Contour(tuple(cols), local, q, interiors,
                    int(np.sum(kinds == FACED)), int(np.sum(kinds == FRUSTRATED)),
                    int(np.sum(kinds == DEFECTIVE)), model.l)
        out.append(g)
        interiors_by.append(g.interior)
    for g in out:
        first = g.support[0]
        g.external = not any(first in inner for h, inner in zip(out, interiors_by) if h is not g)
    return out


def contour_window(g: Contour, model: LaminatedModel, margin: int | None = None) -> Window:
    """Column-aligned window holding the contour and its interior with a margin."""
    cols = np.array(list(g.support) + list(g.interior))
    d = g.hdim
    if margin is None:
        margin = max(model.r, model.H.range) + 2
    hlo = cols[:, :d].min(axis=0) - margin
    hhi = cols[:, :d].max(axis=0) + margin
    klo = int(cols[:, d].min()) - 2
    khi = int(cols[:, d].max()) + 2
    lo = tuple(int(x) for x in hlo) + (klo * model.l,)
    hi = tuple(int(x) for x in hhi) + ((khi + 1) * model.l - 1,)
    return Window(lo, hi)


def paint_columns(spins, window: Window, cols, values, l: int):
    """Write per-column spin rows (shape (n, l)) into a window array in place."""
    if len(cols) == 0:
        return spins
    ix = _column_sites(window, None, cols, l)
    spins[ix] = values
    return spins


def standard_config(g: Contour, model: LaminatedModel, window: Window | None = None) -> Configuration:
    """s_Gamma: the contour's spins on its support, s_m on Int_m and s_q elsewhere."""
    if g.exterior_q < 0 or g.conflict:
        raise ValueError("contour has no consistent ground-state labels")
    window = window or contour_window(g, model)
    spins = tile(model.lifted(g.exterior_q), window.lo, window.shape).copy()
    for m, cols in g.interiors.items():
        cols = sorted(cols)
        full = tile(model.lifted(m), window.lo, window.shape)
        ix = _column_sites(window, None, cols, model.l)
        spins[ix] = full[ix]
    paint_columns(spins, window, list(g.support), g.local_config, model.l)
    return Configuration(window, spins, model.lifted(g.exterior_q), label=g.exterior_q)


# -- energies and bounds ------------------------------------------------------

@dataclass
class PsiDecomposition:
    energy: float
    psi: float
    psi_g: float
    psi_v: float
    psi_g_layers: dict
    defective_layers: dict


def psi_decompose(g: Contour, model: LaminatedModel) -> PsiDecomposition:
    """Split H(Gamma) into boundary energy Psi = Psi_g + Psi_v and volume terms."""
    s = standard_config(g, model)
    ref = model.ground_config(s.window, g.exterior_q)
    layers, psi_v = layer_split(s, ref, model)
    energy = float(math.fsum(layers)) + psi_v
    h = ground_field(model)
    l = model.l
    q = g.exterior_q
    volume = sum((l * h[m] - l * h[q]) * len(cols) for m, cols in g.interiors.items())
    psi = energy - volume
    tlo = s.window.lo[-1]
    psi_g_layers = {}
    for j, e in enumerate(layers):
        t = tlo + j
        k = t // l
        vol_t = sum((h[m] - h[q]) * sum(1 for c in cols if c[-1] == k) for m, cols in g.interiors.items())
        psi_g_layers[t] = float(e - vol_t)
    defective_layers = {}
    cls_ = classify_columns(s, model)
    support = set(g.support)
    for idx in zip(*np.nonzero(cls_.kind == DEFECTIVE)):
        col = cls_.column(idx)
        if col in support:
            for t in range(col[-1] * l, (col[-1] + 1) * l):
                defective_layers[t] = defective_layers.get(t, 0) + 1
    return PsiDecomposition(energy, psi, psi - psi_v, psi_v, psi_g_layers, defective_layers)


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs

    @property
    def passed(self) -> bool:
        return self.slack >= -1e-9 * max(1.0, abs(self.lhs), abs(self.rhs))


@dataclass
class BoundAudit:
    checks: list = field(default_factory=list)

    def __getitem__(self, name) -> BoundCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]


def audit_bounds(g: Contour | None, model: LaminatedModel, rho: float, u: float, v: float,
                 kappa: float | None = None) -> BoundAudit:
    """Evaluate the chain of contour-energy inequalities on one contour.

    ``layer_peierls``: Psi_g^t >= rho N_d(t) on every layer;
    ``column_peierls``: Psi_g >= rho l N_d;
    ``vertical_literal``: Psi_v >= lambda (N_b + N_c);
    ``vertical``: Psi_v >= kappa lambda (N_b + N_c);
    ``total``: beta Psi >= beta rho l N_d + beta kappa lambda (N_b + N_c);
    ``uv``: beta Psi >= u |Gamma| + v l N_c;
    ``uv_margin``: beta Psi >= (u+1) |Gamma| + v l N_c.
    ``None`` stands for the empty contour set and passes vacuously.
    """
    if g is None:
        return BoundAudit([])
    if kappa is None:
        kappa = ModelStats.of(model).kappa
    p = psi_decompose(g, model)
    b, lam, l = model.beta, model.lam, model.l
    layer_slack = [(p.psi_g_layers.get(t, 0.0), rho * n) for t, n in p.defective_layers.items()]
    worst = min(layer_slack, key=lambda x: x[0] - x[1], default=(0.0, 0.0))
    checks = [
        BoundCheck("layer_peierls", worst[0], worst[1]),
        BoundCheck("column_peierls", p.psi_g, rho * l * g.n_d),
        BoundCheck("vertical_literal", p.psi_v, lam * (g.n_b + g.n_c)),
        BoundCheck("vertical", p.psi_v, kappa * lam * (g.n_b + g.n_c)),
        BoundCheck("total", b * p.psi, b * rho * l * g.n_d + b * kappa * lam * (g.n_b + g.n_c)),
        BoundCheck("uv", b * p.psi, u * g.norm + v * l * g.n_c),
        BoundCheck("uv_margin", b * p.psi, (u + 1) * g.norm + v * l * g.n_c),
    ]
    return BoundAudit(checks)


# -- enumeration --------------------------------------------------------------

@dataclass(frozen=True)
class ColumnBox:
    """Box of columns ``lo <= (i, k) < lo + shape`` (block index last)."""

    lo: tuple
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(int(x) for x in self.lo))
        object.__setattr__(self, "shape", tuple(int(x) for x in self.shape))
        if len(self.lo) != len(self.shape) or any(n < 1 for n in self.shape):
            raise ValueError("bad column box")

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def columns(self):
        return itertools.product(*(range(a, a + n) for a, n in zip(self.lo, self.shape)))

    def __contains__(self, col) -> bool:
        return all(a <= x < a + n for x, a, n in zip(col, self.lo, self.shape))

    def in_core(self, col) -> bool:
        """Sites of the column are at distance > 1 from the complement of the box."""
        return all(a + 1 <= x <= a + n - 2 for x, a, n in zip(col, self.lo, self.shape))

    def core(self) -> list:
        return [c for c in self.columns() if self.in_core(c)]

    def diameter(self, l: int) -> int:
        spans = [n - 1 for n in self.shape[:-1]]
        spans.append(self.shape[-1] * l - 1)
        return max(spans)

    def window(self, l: int) -> Window:
        lo = self.lo[:-1] + (self.lo[-1] * l,)
        hi = tuple(a + n - 1 for a, n in zip(self.lo[:-1], self.shape[:-1])) + \
            ((self.lo[-1] + self.shape[-1]) * l - 1,)
        return Window(lo, hi)


def _neighbours(col):
    for o in itertools.product((-1, 0, 1), repeat=len(col)):
        if any(o):
            yield tuple(a + b for a, b in zip(col, o))


def connected_subsets(cells, max_size: int) -> list:
    """All connected (Chebyshev) subsets of ``cells`` with 1..max_size elements."""
    cells = set(cells)
    found = set()
    frontier = [frozenset([c]) for c in cells]
    found.update(frontier)
    for _ in range(max_size - 1):
        nxt = []
        for s in frontier:
            for c in s:
                for nb in _neighbours(c):
                    if nb in cells and nb not in s:
                        t = s | {nb}
                        if t not in found:
                            found.add(t)
                            nxt.append(t)
        frontier = nxt
    return sorted(found, key=lambda s: (len(s), sorted(s)))


def admissible_supports(box: ColumnBox, max_columns: int) -> list:
    """Connected column sets that keep distance > 1 from the complement of the box."""
    if max_columns <= 0:
        return []
    out = []
    for s in connected_subsets(box.core(), max_columns):
        if all(all(c in box for c in comp) for comp in interior_components(s)):
            out.append(s)
    return out


def _column_states(nspin: int, l: int) -> np.ndarray:
    return np.array(list(itertools.product(range(nspin), repeat=l)), dtype=np.int64)


def enumerate_contours(box: ColumnBox, q: int, max_columns: int, model: LaminatedModel,
                       cap: int = 256, total_cap: int = 1 << 20) -> list:
    """Every contour with exterior ``q`` whose support is admissible in ``box``.

    Supports come from :func:`admissible_supports`; every spin assignment on
    the support and every labelling of its interior components is tried, and
    kept when extraction of the standard configuration returns exactly it.
    """
    per_col = model.nspin ** model.l
    if per_col > cap:
        raise CapacityError(f"{per_col} states per column exceed cap {cap}; need cap >= {per_col}")
    states = _column_states(model.nspin, model.l)
    out = []
    for supp in admissible_supports(box, max_columns):
        supp = sorted(supp)
        n = len(supp)
        if per_col ** n > total_cap:
            raise CapacityError(f"{per_col ** n} configurations on a support exceed cap {total_cap}")
        comps = interior_components(supp)
        for labels in itertools.product(range(model.nground), repeat=len(comps)):
            interiors = {}
            for m, comp in zip(labels, comps):
                interiors.setdefault(m, set()).update(comp)
            proto = Contour(tuple(supp), np.zeros((n, model.l), dtype=np.int64), q, interiors, 0, 0, 0, model.l)
            window = contour_window(proto, model)
            base = standard_config(proto, model, window)
            spins = np.array(base.spins)
            ix = _column_sites(window, None, supp, model.l)
            for choice in itertools.product(range(per_col), repeat=n):
                spins[ix] = states[list(choice)]
                s = base.with_spins(spins)
                try:
                    found = extract_contours(s, model)
                except FrameError:
                    continue
                if len(found) != 1:
                    continue
                g = found[0]
                if g.support == tuple(supp) and g.exterior_q == q and g.interiors == proto.interiors:
                    out.append(g)
    return out


def group_by_support(contours) -> dict:
    out = {}
    for g in contours:
        out.setdefault(g.support, []).append(g)
    return out


# -- type-level minimisation --------------------------------------------------

VARIABLE = -1


@dataclass
class TypeMinimum:
    """Smallest Psi over all spins compatible with a column-type assignment."""

    support: tuple
    types: tuple
    interiors: dict
    n_b: int
    n_c: int
    n_d: int
    psi: float
    witness: Contour


def _type_canvas(supp, types, interiors, q, model):
    proto = Contour(tuple(supp), np.zeros((len(supp), model.l), dtype=np.int64), q, interiors, 0, 0, 0, model.l)
    window = contour_window(proto, model)
    base = standard_config(proto, model, window)
    spins = np.array(base.spins)
    rows = []
    for t in types:
        row = np.full(model.l, 0 if t == VARIABLE else t, dtype=np.int64)
        if t == VARIABLE:
            row[0] = 1 % model.nspin
        rows.append(row)
    paint_columns(spins, window, list(supp), np.array(rows), model.l)
    return proto, window, base, spins


def _minimise_psi(supp, types, window, spins, q, model):
    """Dynamic programme over layers for the minimal relative energy.

    The free variables are the spins of the variable columns; every variable
    column must change value at least once inside itself.
    """
    d = model.hdim
    l = model.l
    S = model.nspin
    var = [c for c, t in zip(supp, types) if t == VARIABLE]
    tlo, T = window.lo[d], window.shape[d]
    ref = tile(model.lifted(q), window.lo, window.shape)
    R = model.H.range
    hshape = window.shape[:d]

    def rows_for(t, assign_cols, assign):
        """Batch of rows at layer t (shape (n, *hshape)) for the given assignments."""
        base = spins[..., t - tlo]
        out = np.repeat(base[None], len(assign), axis=0)
        for j, c in enumerate(assign_cols):
            out[(slice(None),) + tuple(x - a for x, a in zip(c[:d], window.lo[:d]))] = assign[:, j]
        return out

    def layer_energy(rows, t):
        refrow = ref[..., t - tlo]
        pad = [(0, 0)] + [(R, R)] * d
        full = np.pad(rows, pad)
        reff = np.pad(refrow[None], pad)
        lo = tuple(a - R for a in window.lo[:d])
        # sites outside the window carry the ground state
        g = tile(model.ground_blocks[q], lo, tuple(n + 2 * R for n in hshape))
        inner = tuple(slice(R, R + n) for n in hshape)
        mask = np.ones(g.shape, dtype=bool)
        mask[inner] = False
        full[:, mask] = g[mask]
        reff[:, mask] = g[mask]
        ashape = tuple(n + R for n in hshape)
        e = anchor_energies(model.H, full, lo, lo, ashape).sum(axis=tuple(range(1, d + 1)))
        e0 = anchor_energies(model.H, reff, lo, lo, ashape).sum()
        return _float(model.H, e - e0)

    def active(t):
        return [c for c in var if c[-1] * l <= t < (c[-1] + 1) * l]

    # layers outside the window equal the ground state and have no energy
    INF = math.inf
    prev_cols, prev_assign, prev_flags = [], np.zeros((1, 0), dtype=np.int64), None
    cost = {(0, 0): 0.0}
    back = []
    bottom = ref[..., 0][None]  # row below the window is ground
    prev_rows = bottom
    for t in range(tlo, tlo + T):
        cols = active(t)
        assign = np.array(list(itertools.product(range(S), repeat=len(cols))), dtype=np.int64).reshape(S ** len(cols), len(cols))
        rows = rows_for(t, cols, assign)
        eh = layer_energy(rows, t)
        vert = model.lam * np.sum(prev_rows[:, None] != rows[None, :], axis=tuple(range(2, 2 + d)))
        new = {}
        bp = {}
        for (pa, pf), c0 in cost.items():
            if c0 == INF:
                continue
            for na in range(len(assign)):
                flags = 0
                ok = True
                for j, c in enumerate(cols):
                    if c in prev_cols:
                        pj = prev_cols.index(c)
                        changed = (pf >> pj) & 1 or prev_assign[pa, pj] != assign[na, j]
                        flags |= int(bool(changed)) << j
                for pj, c in enumerate(prev_cols):
                    if c not in cols and not (pf >> pj) & 1:
                        ok = False
                        break
                if not ok:
                    continue
                val = c0 + float(eh[na]) + float(vert[pa, na])
                key = (na, flags)
                if val < new.get(key, INF):
                    new[key] = val
                    bp[key] = (pa, pf)
        back.append((cols, assign, bp))
        cost = new
        prev_cols, prev_assign, prev_rows = cols, assign, rows
    # close with the ground row above the window
    top = ref[..., -1][None]
    best, best_key = INF, None
    for (pa, pf), c0 in cost.items():
        if any(not (pf >> j) & 1 for j in range(len(prev_cols))):
            continue
        val = c0 + model.lam * float(np.sum(prev_rows[pa] != top[0]))
        if val < best:
            best, best_key = val, (pa, pf)
    if best_key is None:
        return INF, None
    # rebuild the optimal spins
    out = np.array(spins)
    key = best_key
    for t in range(tlo + T - 1, tlo - 1, -1):
        cols, assign, bp = back[t - tlo]
        for j, c in enumerate(cols):
            out[tuple(x - a for x, a in zip(c[:d], window.lo[:d])) + (t - tlo,)] = assign[key[0], j]
        key = bp[key]
    return best, out


def type_level_minima(box: ColumnBox, q: int, max_columns: int, model: LaminatedModel) -> list:
    """Minimal Psi for every valid (support, column types, interior labels).

    Column kinds, and hence the counts N_b, N_c, N_d, depend only on which
    columns are variable and on the values of invariable ones; the spins of
    variable columns are then chosen by dynamic programming to minimise the
    energy. Each minimiser is rebuilt into a contour and re-extracted.
    """
    out = []
    h = ground_field(model)
    kinds = [VARIABLE] + list(range(model.nspin))
    for supp in admissible_supports(box, max_columns):
        supp = sorted(supp)
        comps = interior_components(supp)
        for labels in itertools.product(range(model.nground), repeat=len(comps)):
            interiors = {}
            for m, comp in zip(labels, comps):
                interiors.setdefault(m, set()).update(comp)
            for types in itertools.product(kinds, repeat=len(supp)):
                proto, window, base, spins = _type_canvas(supp, types, interiors, q, model)
                s = base.with_spins(spins)
                try:
                    found = extract_contours(s, model)
                except FrameError:
                    continue
                if len(found) != 1:
                    continue
                g = found[0]
                if g.support != tuple(supp) or g.exterior_q != q or g.interiors != proto.interiors:
                    continue
                energy, best = _minimise_psi(supp, types, window, spins, q, model)
                if best is None:
                    continue
                w = extract_contours(base.with_spins(best), model)
                if len(w) != 1 or w[0].support != g.support or (w[0].n_b, w[0].n_c, w[0].n_d) != (g.n_b, g.n_c, g.n_d):
                    raise AssertionError("type-level minimiser changed the column kinds")
                volume = sum((model.l * (h[m] - h[q])) * len(c) for m, c in g.interiors.items())
                out.append(TypeMinimum(tuple(supp), tuple(types), g.interiors, g.n_b, g.n_c, g.n_d,
                                       energy - volume, w[0]))
    return out


# -- collections --------------------------------------------------------------

@dataclass(frozen=True)
class CollectionBound:
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return self.lhs < self.rhs


def _adjacent(a, b) -> bool:
    return max(abs(x - y) for x, y in zip(a, b)) <= 1


def collection_weight_bound(collection, V: ColumnBox, c: float) -> CollectionBound:
    """sum (|Gamma| + V(Gamma)) c^diam(Gamma) against c^diam(V) / (c - 1) * |V|.

    The collection must consist of pairwise distant contours whose supports
    keep distance > 1 from the complement of ``V`` and whose interiors lie in
    ``V``. Both sides are returned divided by c^diam(V).
    """
    if not c > 1:
        raise ValueError("c must exceed 1")
    collection = list(collection)
    for g in collection:
        if not all(V.in_core(col) for col in g.support):
            raise ValueError("a contour support comes within distance 1 of the complement of V")
        if not all(col in V for col in g.interior):
            raise ValueError("a contour interior leaves V")
    for a, b in itertools.combinations(collection, 2):
        sb = set(b.support)
        for col in a.support:
            if any(nb in sb for nb in _neighbours(col)) or col in sb:
                raise ValueError("contours of a collection must be pairwise distant")
    if not collection:
        l = 1
    else:
        l = collection[0].l
    dV = V.diameter(l)
    lhs = math.fsum((g.norm + g.interior_volume) * c ** (g.diameter - dV) for g in collection)
    rhs = V.size / (c - 1)
    return CollectionBound(lhs, rhs)
