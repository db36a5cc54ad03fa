import math

import numpy as np
import pytest

from lamlab import exactz
from lamlab.contour import ColumnBox, extract_contours
from lamlab.exactz import (core_columns, transfer_energy, transfer_free_energy, verify_factorization,
                           xi_contour, xi_volume)
from lamlab.laminate import relative_energy_laminated
from lamlab.lattice import CapacityError, Window

from conftest import ising_laminate
from oracles import ring_free_energy, strip_free_energy


def test_empty_volume():
    m = ising_laminate()
    assert xi_volume([], 0, m).value == 1.0
    r = verify_factorization([], 0, m)
    assert r.xi == r.rhs == 1.0 and r.residual == 0


def test_small_box_without_core_is_trivial():
    m = ising_laminate()
    assert core_columns(ColumnBox((0, 0), (3, 2)).columns()) == []
    assert xi_volume(ColumnBox((0, 0), (3, 2)), 0, m).value == 1.0


def test_low_temperature_limit():
    m = ising_laminate(beta=50.0)
    assert xi_volume(ColumnBox((0, 0), (5, 3)), 1, m).value == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("box,l", [((4, 4), 1), ((5, 3), 1), ((3, 3), 2)])
def test_core_enumeration_equals_full_enumeration(box, l):
    m = ising_laminate(lam=1.0, l=l, beta=0.5)
    V = ColumnBox((0, 0), box)
    a = xi_volume(V, 0, m)
    b = xi_volume(V, 0, m, core_only=False)
    assert a.value == pytest.approx(b.value, rel=1e-12)
    assert b.terms == a.terms


def test_monotone_in_beta():
    V = ColumnBox((0, 0), (5, 4))
    vals = [xi_volume(V, 0, ising_laminate(l=1, beta=b)).value for b in (0.2, 0.5, 1.0, 2.0)]
    assert all(x >= y for x, y in zip(vals, vals[1:]))


def test_additive_over_distant_volumes():
    m = ising_laminate(l=1, beta=0.6, lam=0.8)
    A = list(ColumnBox((0, 0), (4, 3)).columns())
    B = list(ColumnBox((8, 0), (4, 3)).columns())
    both = xi_volume(A + B, 0, m).log_value
    assert both == pytest.approx(xi_volume(A, 0, m).log_value + xi_volume(B, 0, m).log_value)


def test_single_site_contour():
    lam, beta = 1.5, 0.7
    m = ising_laminate(lam=lam, l=1, beta=beta)
    s = m.ground_config(Window.from_shape((9, 9)), 0).replace({(4, 4): 1})
    (g,) = extract_contours(s, m)
    r = xi_contour(g, m)
    assert r.terms == 1
    assert r.value == pytest.approx(math.exp(-beta * (2 + 2 * lam)))


@pytest.mark.parametrize("beta,lam", [(0.4, 0.5), (0.9, 1.5)])
def test_contour_factorizes_over_a_nontrivial_interior(beta, lam):
    m = ising_laminate(lam=lam, l=1, beta=beta)
    w = Window.from_shape((15, 11))
    s = m.ground_config(w, 0).replace({(i, t): 1 for i in range(4, 11) for t in range(3, 8)})
    (g,) = extract_contours(s, m)
    assert g.volumes == {1: 15}
    lhs = xi_contour(g, m).value
    H = relative_energy_laminated(s, m.ground_config(w, 0), m)
    inner = xi_volume(sorted(g.interiors[1]), 1, m)
    assert inner.value > 1
    assert lhs == pytest.approx(math.exp(-beta * H) * inner.value, rel=1e-9)


@pytest.mark.parametrize("box,q,beta,lam", [((5, 3), 0, 0.7, 1.5), ((6, 3), 1, 0.3, 0.0),
                                            ((5, 4), 0, 1.5, 3.0)])
def test_factorization(box, q, beta, lam):
    r = verify_factorization(ColumnBox((0, 0), box), q, ising_laminate(lam=lam, l=2 if box[1] == 3 else 1,
                                                                        beta=beta))
    assert r.max_residual <= 1e-9
    assert r.contours > 0


def test_capacity():
    with pytest.raises(CapacityError):
        xi_volume(ColumnBox((0, 0), (8, 8)), 0, ising_laminate(l=1))
    with pytest.raises(CapacityError):
        transfer_free_energy(ising_laminate(), 13)


def test_transfer_at_zero_beta():
    assert transfer_free_energy(ising_laminate(), 6, beta=0.0) == pytest.approx(math.log(2))


@pytest.mark.parametrize("W", [2, 4, 6])
def test_transfer_decoupled_layers(W):
    m = ising_laminate(lam=0.0)
    assert transfer_free_energy(m, W, beta=0.6) == pytest.approx(ring_free_energy(0.6, W), rel=1e-9)


@pytest.mark.parametrize("beta,lam", [(0.4, 1.0), (0.4, 8.0), (1.0, 3.0)])
def test_transfer_against_eigvalsh(beta, lam):
    W = 5
    m = ising_laminate(lam=lam)
    ref = strip_free_energy(beta, lam, W)
    assert transfer_free_energy(m, W, beta) == pytest.approx(ref, rel=1e-8)


def test_transfer_energy_is_beta_derivative():
    m = ising_laminate(lam=3.0)
    h = 1e-5
    fd = -(transfer_free_energy(m, 6, 0.4 + h) - transfer_free_energy(m, 6, 0.4 - h)) / (2 * h)
    assert transfer_energy(m, 6, 0.4) == pytest.approx(fd, rel=1e-6)


def test_transfer_needs_one_horizontal_dimension():
    from lamlab import potential
    from lamlab.laminate import build_laminated
    from lamlab.potential import HamiltonianFamily
    fam = HamiltonianFamily(potential.disagreement(dimension=2), [], [])
    m = build_laminated(fam, 1.0, 1, 1.5, 1.0, ground_blocks=[[[0]], [[1]]], peierls_c=0.5)
    with pytest.raises(ValueError):
        exactz.transfer_free_energy(m, 2)
