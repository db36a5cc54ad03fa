"""The laminated model: horizontal layers coupled by a vertical Potts interaction.

A laminated configuration lives on Z^{d+1} with the horizontal axes first and
the vertical axis ``t`` last. Every layer carries the horizontal Hamiltonian;
vertically adjacent sites pay ``lambda`` when they disagree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .groundcycle import ground_states as find_ground_states, minimal_period_word
from .lattice import Configuration, Window, tile
from .potential import Hamiltonian, HamiltonianFamily, anchor_energies, specific_energy


@dataclass(frozen=True)
class VerticalPotential:
    """lam * (1 - delta(a, b)) between vertical nearest neighbours."""

    lam: float

    def __post_init__(self):
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"vertical coupling must be finite and >= 0, got {self.lam}")

    def __call__(self, a, b):
        return np.where(np.asarray(a) == np.asarray(b), 0.0, self.lam)


def lift_ground_states(blocks) -> list:
    """Vertical-constant extensions of horizontal period blocks."""
    return [np.asarray(b, dtype=np.int64)[..., None] for b in blocks]


def _block_period(block) -> int:
    return max(np.asarray(block).shape)


@dataclass
class LaminatedModel:
    horizontal: HamiltonianFamily
    vertical: VerticalPotential
    l: int
    Rbar: float
    beta: float
    ground_blocks: list
    peierls_c: float | None = None
    H: Hamiltonian = field(init=False, repr=False)

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("aggregation size l must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        self.H = self.horizontal.combined()
        if self.H.dimension > 2:
            raise ValueError("horizontal dimension must be 1 or 2")
        self.ground_blocks = [np.asarray(b, dtype=np.int64).reshape(
            np.asarray(b).shape if np.ndim(b) else (1,) * self.H.dimension) for b in self.ground_blocks]
        if not self.ground_blocks:
            raise ValueError("no ground states")
        for b in self.ground_blocks:
            if b.ndim != self.H.dimension:
                raise ValueError("ground block dimension mismatch")
        need = max(self.H.range, max(_block_period(b) for b in self.ground_blocks))
        if not self.Rbar > need:
            raise ValueError(f"Rbar={self.Rbar} must exceed max(R, ground period) = {need}")

    @property
    def lam(self) -> float:
        return self.vertical.lam

    @property
    def hdim(self) -> int:
        return self.H.dimension

    @property
    def dim(self) -> int:
        return self.H.dimension + 1

    @property
    def nspin(self) -> int:
        return self.H.nspin

    @property
    def r(self) -> int:
        """Integer horizontal radius of the column neighbourhood."""
        return int(math.floor(self.Rbar))

    @property
    def nground(self) -> int:
        return len(self.ground_blocks)

    def lifted(self, q: int) -> np.ndarray:
        return lift_ground_states([self.ground_blocks[q]])[0]

    def ground_config(self, window: Window, q: int) -> Configuration:
        return Configuration.uniform(window, self.lifted(q), label=q)

    def ground_row(self, q: int, lo, shape) -> np.ndarray:
        """Horizontal ground state q on a box (no vertical axis)."""
        return tile(self.ground_blocks[q], lo, shape)

    def with_lambda(self, lam: float) -> "LaminatedModel":
        return LaminatedModel(self.horizontal, VerticalPotential(lam), self.l, self.Rbar,
                              self.beta, self.ground_blocks, self.peierls_c)

    def with_beta(self, beta: float) -> "LaminatedModel":
        return LaminatedModel(self.horizontal, self.vertical, self.l, self.Rbar,
                              beta, self.ground_blocks, self.peierls_c)

    def with_l(self, l: int) -> "LaminatedModel":
        return LaminatedModel(self.horizontal, self.vertical, l, self.Rbar,
                              self.beta, self.ground_blocks, self.peierls_c)

    def to_dict(self) -> dict:
        return {
            "horizontal": self.horizontal.base.to_dict(),
            "perturbations": [h.to_dict() for h in self.horizontal.perturbations],
            "mu": [float(m) for m in self.horizontal.mu],
            "lambda": self.lam,
            "l": self.l,
            "rbar": self.Rbar,
            "beta": self.beta,
            "ground_states": [b.tolist() for b in self.ground_blocks],
            "peierls_c": None if self.peierls_c is None else float(self.peierls_c),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "LaminatedModel":
        fam = HamiltonianFamily(Hamiltonian.from_dict(doc["horizontal"]),
                                [Hamiltonian.from_dict(h) for h in doc.get("perturbations", [])],
                                list(doc.get("mu", [])))
        return build_laminated(fam, doc["lambda"], doc["l"], doc["rbar"], doc["beta"],
                               ground_blocks=doc.get("ground_states"),
                               peierls_c=doc.get("peierls_c"))


def build_laminated(fam: HamiltonianFamily, lam, l: int, Rbar: float, beta: float,
                    ground_blocks=None, peierls_c=None) -> LaminatedModel:
    """Laminated model of ``fam`` with vertical coupling ``lam``.

    In one horizontal dimension the ground states and Peierls constant are
    found by the cycle pipeline unless supplied; in two they must be given.
    """
    H = fam.base
    if ground_blocks is None:
        if H.dimension != 1:
            raise ValueError("ground states must be supplied for horizontal dimension >= 2")
        N = H.period * max(1, math.ceil(max(H.range, 1) / H.period))
        report = find_ground_states(H, N)
        blocks = []
        for w in report.words:
            b = minimal_period_word(w)
            if b not in blocks:
                blocks.append(b)
        ground_blocks = [np.array(b, dtype=np.int64) for b in blocks]
        if peierls_c is None and math.isfinite(float(report.peierls_c)):
            peierls_c = float(report.peierls_c)
    return LaminatedModel(fam, VerticalPotential(float(lam)), int(l), float(Rbar), float(beta),
                          list(ground_blocks), None if peierls_c is None else float(peierls_c))


# -- energies -----------------------------------------------------------------

def _float(H: Hamiltonian, raw):
    raw = np.asarray(raw, dtype=np.float64)
    return raw / H.denominator if H.exact else raw


def layer_energies(model: LaminatedModel, arr, arr_lo, anchor_lo, anchor_shape) -> np.ndarray:
    """Horizontal energy of the terms anchored in the box, per layer.

    ``arr`` covers ``arr_lo`` with the vertical axis last; ``anchor_lo`` and
    ``anchor_shape`` are horizontal only. Leading batch axes are allowed.
    """
    d = model.hdim
    arr = np.moveaxis(np.asarray(arr), -1, -d - 1)
    e = anchor_energies(model.H, arr, arr_lo[:d], anchor_lo, anchor_shape)
    return _float(model.H, e.sum(axis=tuple(range(-d, 0))))


def layer_split(s1: Configuration, s2: Configuration, model: LaminatedModel):
    """Per-layer horizontal relative energies and the vertical relative energy."""
    if s1.window.dim != model.dim:
        raise ValueError(f"configuration dimension {s1.window.dim} != {model.dim}")
    if not s1.same_exterior(s2):
        raise ValueError("configurations do not share window and exterior")
    w = s1.window
    d = model.hdim
    R = model.H.range
    hlo, hshape = w.lo[:d], w.shape[:d]
    tlo, T = w.lo[d], w.shape[d]
    if w.periodic:
        box_lo = w.lo
        box_shape = tuple(n + R for n in hshape) + (T,)
        a_lo, a_shape = hlo, hshape
        vbox = (w.lo, hshape + (T + 1,))
    else:
        box_lo = tuple(a - R for a in hlo) + (tlo,)
        box_shape = tuple(n + 2 * R for n in hshape) + (T,)
        a_lo, a_shape = box_lo[:d], tuple(n + R for n in hshape)
        vbox = (hlo + (tlo - 1,), hshape + (T + 2,))
    layers = []
    for s in (s1, s2):
        layers.append(layer_energies(model, s.resolve(box_lo, box_shape), box_lo, a_lo, a_shape))
    counts = []
    for s in (s1, s2):
        a = s.resolve(*vbox)
        counts.append(int(np.sum(a[..., 1:] != a[..., :-1])))
    return layers[0] - layers[1], model.lam * (counts[0] - counts[1])


def energy_split(s1: Configuration, s2: Configuration, model: LaminatedModel):
    """(horizontal, vertical) parts of the laminated relative energy."""
    h, v = layer_split(s1, s2, model)
    return float(math.fsum(h)), float(v)


def relative_energy_laminated(s1: Configuration, s2: Configuration, model: LaminatedModel) -> float:
    h, v = energy_split(s1, s2, model)
    return h + v


def ground_specific_energies(model: LaminatedModel) -> np.ndarray:
    """e[k, q]: specific energy of perturbation k in horizontal ground state q."""
    H = model.H
    out = np.zeros((len(model.horizontal.perturbations), model.nground))
    for q, b in enumerate(model.ground_blocks):
        per = H.period
        reps = tuple(math.lcm(n, per) // n for n in b.shape)
        block = np.tile(b, reps)
        for k, h in enumerate(model.horizontal.perturbations):
            out[k, q] = float(specific_energy(block, h))
    return out


def ground_field(model: LaminatedModel) -> np.ndarray:
    """h_q = sum_k e_k^q mu_k for every ground state."""
    e = ground_specific_energies(model)
    mu = np.array([float(m) for m in model.horizontal.mu])
    return mu @ e if len(mu) else np.zeros(model.nground)


# -- parameters ---------------------------------------------------------------

@dataclass(frozen=True)
class ModelStats:
    nspin: int
    hdim: int
    r: int
    faced_weight: float = 0.5

    @classmethod
    def of(cls, model: LaminatedModel) -> "ModelStats":
        """Counting constants of a model; faced columns weigh 1/2 unless ground states share sites."""
        fw = 0.5
        blocks = model.ground_blocks
        for a in range(len(blocks)):
            for b in range(a + 1, len(blocks)):
                shape = tuple(math.lcm(x, y) for x, y in zip(blocks[a].shape, blocks[b].shape))
                if np.any(tile(blocks[a], (0,) * model.hdim, shape) == tile(blocks[b], (0,) * model.hdim, shape)):
                    fw = 1.0 / (2 * (2 * model.r + 1) ** model.hdim)
        return cls(model.nspin, model.hdim, model.r, fw)

    @property
    def kappa(self) -> float:
        """Guaranteed vertical energy per boundary column, in units of lambda."""
        return min(self.faced_weight, 1.0 / (2 * self.r + 1) ** self.hdim)


@dataclass(frozen=True)
class ParameterReport:
    rho: float
    u: float
    v: float
    tau: float
    l_min: int
    lambda0: float
    beta: float
    kappa: float = 1.0
    margin: float = 0.0
    bound: str = ""

    def check(self, atol: float = 1e-9) -> bool:
        b = self.beta
        return (b * self.rho * self.l_min >= self.u + self.margin - atol
                and b * self.lambda0 * self.kappa >= self.u + self.margin + self.v * self.l_min - atol)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def choose_parameters(beta: float, rho: float, tau: float = 1.0, model_stats: ModelStats | None = None,
                      u: float | None = None, v: float | None = None) -> ParameterReport:
    """Smallest column height l and a vertical coupling lambda0 that make beta*Psi a uv-functional.

    With explicit ``u`` and ``v`` and no ``model_stats`` this is the direct
    substitution l = ceil(u / (beta rho)), lambda0 = (u + v l) / beta. With
    ``model_stats`` the targets are raised by one (so the functional is
    (u+1)v) and lambda0 is divided by the guaranteed vertical energy per
    boundary column.
    """
    if not rho > 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if not beta > 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    bound = "explicit"
    if u is None or v is None:
        if model_stats is None:
            raise ValueError("need either explicit u, v or model_stats")
        logS = math.log(model_stats.nspin)
        if u is None:
            u = tau + logS + (model_stats.hdim + 1) * math.log(3)
        if v is None:
            v = max(1.0, logS)
        bound = "u = tau + log|S| + (d+1) log 3, v = max(1, log|S|)"
    kappa, margin = 1.0, 0.0
    if model_stats is not None:
        kappa, margin = model_stats.kappa, 1.0
    target = u + margin
    l = max(1, math.ceil(target / (beta * rho) - 1e-9))
    lam0 = (target + v * l) / (beta * kappa)
    rep = ParameterReport(float(rho), float(u), float(v), float(tau), int(l), float(lam0),
                          float(beta), float(kappa), float(margin), bound)
    assert rep.check()
    return rep


def perturbation_scale(h: Hamiltonian) -> float:
    """2 * sum_A |A| max|phi_A|: bounds how much one changed site moves h."""
    tot = 0.0
    for t in h.terms:
        tab = np.array([float(x) for x in np.asarray(t.table).flat])
        tot += len(t.pattern) * float(np.max(np.abs(tab)))
    return 2.0 * tot


def default_rho(model: LaminatedModel):
    """Horizontal Peierls constant shrunk by the perturbation strengths; returns (rho, shrink)."""
    if model.peierls_c is None:
        raise ValueError("model has no Peierls constant")
    shrink = sum(abs(float(m)) * perturbation_scale(h)
                 for m, h in zip(model.horizontal.mu, model.horizontal.perturbations))
    return model.peierls_c - shrink, shrink
