import itertools
import math

import numba
import numpy as np
import pytest
from scipy import stats

from lamlab import mc
from lamlab.laminate import relative_energy_laminated
from lamlab.lattice import Configuration, Window

from conftest import ising_laminate
from oracles import gibbs_marginals, ising_laminate_energy


def test_chain_spec_validation():
    with pytest.raises(ValueError):
        mc.ChainSpec((4, 4), 0, 1.0, 10, 10)
    with pytest.raises(ValueError):
        mc.ChainSpec((4, 4), None, 1.0, 10)
    with pytest.raises(ValueError):
        mc.ChainSpec((4, 4), 0, 1.0, 10, stride=0)
    assert mc.ChainSpec((4, 4), None, 1.0, 10, periodic=True).q is None


@pytest.mark.parametrize("periodic", [False, True])
def test_local_delta_matches_relative_energy(periodic):
    m = ising_laminate(lam=1.3, l=1)
    shape = (4, 3)
    rng = np.random.default_rng(7)
    t = mc.SiteTables(m, shape, periodic)
    w = Window.from_shape(shape, periodic=periodic)
    for _ in range(5):
        spins = rng.integers(0, 2, size=shape)
        flat = t.embed(spins, 0)
        s = Configuration(w, spins, None if periodic else m.lifted(0), None if periodic else 0)
        for x in range(12):
            idx = np.unravel_index(x, shape)
            new = spins.copy()
            new[idx] = 1 - new[idx]
            ref = relative_energy_laminated(s.with_spins(new), s, m)
            assert mc.local_delta(t, flat, x, 1 - spins[idx]) == pytest.approx(ref, abs=1e-12)


def test_detailed_balance():
    m = ising_laminate(lam=0.7, l=1)
    beta = 0.9
    shape = (3, 4)
    t = mc.SiteTables(m, shape, False)
    rng = np.random.default_rng(2)
    for _ in range(50):
        spins = rng.integers(0, 2, size=shape)
        x = int(rng.integers(12))
        idx = np.unravel_index(x, shape)
        a = t.embed(spins, 0)
        flipped = spins.copy()
        flipped[idx] = 1 - flipped[idx]
        b = t.embed(flipped, 0)
        d_ab = mc.local_delta(t, a, x, flipped[idx])
        d_ba = mc.local_delta(t, b, x, spins[idx])
        assert d_ab == pytest.approx(-d_ba, abs=1e-12)
        ratio = mc.acceptance_probability(d_ab, beta) / mc.acceptance_probability(d_ba, beta)
        assert abs(ratio - math.exp(-beta * d_ab)) <= 1e-12 * max(1.0, ratio)


def test_seed_determinism():
    m = ising_laminate(lam=1.0, l=2)
    spec = mc.ChainSpec((6, 4), 0, 0.8, 60, 10, seed=11, stride=5)
    a, b = mc.run_chain(spec, m), mc.run_chain(spec, m)
    assert a.measurements == b.measurements and np.array_equal(a.final, b.final)
    c = mc.run_chain(mc.ChainSpec((6, 4), 0, 0.8, 60, 10, seed=12, stride=5), m)
    assert c.measurements != a.measurements
    assert a.metadata["rng"] == mc.RNG_NAME and a.metadata["schedule"] == mc.SCHEDULE


def test_infinite_temperature_accepts_everything():
    m = ising_laminate(lam=2.0, l=1)
    res = mc.run_chain(mc.ChainSpec((2, 2), 0, 0.0, 200, 0, seed=3), m)
    assert res.acceptance == 1.0


def test_zero_beta_random_start_chi_square():
    # at beta = 0 every proposal is accepted, so sample fresh random states instead of a chain
    m = ising_laminate(lam=2.0, l=1)
    codes = []
    for seed in range(3000):
        res = mc.run_chain(mc.ChainSpec((2, 2), 0, 0.0, 1, 0, seed=seed, init="random"), m)
        codes.append(int(res.final.ravel() @ (1 << np.arange(4))))
    counts = np.bincount(codes, minlength=16)
    assert stats.chisquare(counts).pvalue > 0.01


def test_frozen_limit():
    m = ising_laminate(lam=8.0, l=2)
    res = mc.run_chain(mc.ChainSpec((8, 8), 1, 50.0, 50, 0, seed=1, init="random"), m)
    assert np.all(res.final == 1)


@numba.njit
def _tally(flat, u, sites, args):
    counts = np.zeros(8, dtype=np.int64)
    for s in range(u.shape[0]):
        mc._sweeps(flat, u[s:s + 1], *args)
        counts[4 * flat[sites[0]] + 2 * flat[sites[1]] + flat[sites[2]]] += 1
    return counts


def test_three_site_chain_total_variation():
    m = ising_laminate(lam=1.0, l=1)
    beta = 0.8
    t = mc.SiteTables(m, (3, 1), False)
    flat = t.embed(np.zeros((3, 1), dtype=int), 0)
    args = (t.site_flat, t.inst_on, t.inst_term, t.inst_pos, t.inst_len, t.inst_sites,
            t.tables, t.offsets, t.vert, 1.0, beta, 2)
    u = np.random.default_rng(5).random((10 ** 6, 3, 2))
    emp = _tally(flat, u, t.site_flat, args) / len(u)
    e = []
    for bits in itertools.product((0, 1), repeat=3):
        a = np.zeros((5, 3), dtype=int)
        a[1:-1, 1] = bits
        e.append(ising_laminate_energy(a, 1.0))
    p = np.exp(-beta * np.array(e))
    p /= p.sum()
    assert 0.5 * np.abs(emp - p).sum() < 0.02


@pytest.mark.parametrize("shape,q,beta,lam", [((2, 2), 0, 0.7, 1.0), ((3, 2), 1, 0.5, 2.0),
                                              ((2, 3), 0, 1.0, 0.5)])
def test_marginals_match_enumeration(shape, q, beta, lam):
    m = ising_laminate(lam=lam, l=1)
    res = mc.run_chain(mc.ChainSpec(shape, q, beta, 12000, 500, seed=9, record=True), m)
    exact = gibbs_marginals(shape, q, beta, lam)
    for idx in np.ndindex(shape):
        series = res.recorded[(slice(None),) + idx].astype(float)
        assert abs(series.mean() - exact[idx]) <= 3 * mc.stderr(series) + 1e-12


def test_order_parameters():
    m = ising_laminate(l=2)
    w = Window.from_shape((16, 16))
    assert mc.order_parameters(m.ground_config(w, 1), m).tolist() == [0.0, 1.0]
    s = m.ground_config(w, 0).replace({(7, 5): 1})
    # the variable column frustrates the columns within horizontal distance r of it
    assert mc.order_parameters(s, m)[0] == pytest.approx((128 - (2 * m.r + 1)) / 128)
    checker = np.indices((16, 16)).sum(axis=0) % 2
    assert mc.order_parameters(Configuration(w, checker, m.lifted(0), 0), m).tolist() == [0.0, 0.0]


def test_energy_per_site_periodic():
    m = ising_laminate(lam=2.0, l=1)
    t = mc.SiteTables(m, (3, 3), True)
    spins = np.array([[0, 1, 0], [0, 0, 0], [1, 1, 0]])
    h = sum(spins[i, j] != spins[(i + 1) % 3, j] for i in range(3) for j in range(3))
    v = sum(spins[i, j] != spins[i, (j + 1) % 3] for i in range(3) for j in range(3))
    assert mc.energy_per_site(t, t.embed(spins, None)) == pytest.approx((h + 2.0 * v) / 9)


def test_autocorrelation_of_ar1():
    rng = np.random.default_rng(0)
    phi = 0.8
    x = np.zeros(200000)
    for i in range(1, len(x)):
        x[i] = phi * x[i - 1] + rng.normal()
    tau = mc.integrated_autocorr(x)
    assert tau == pytest.approx((1 + phi) / (2 * (1 - phi)), rel=0.1)
    assert mc.integrated_autocorr(np.ones(10)) == 0.5


def test_small_scan():
    m = ising_laminate(l=1)
    res = mc.coexistence_scan(m, 0.4, [0.0, 6.0], (8, 8), [1, 2], 200, 50, stride=10)
    assert [(r.lam, r.q_boundary, r.seed) for r in res.rows] == sorted(
        itertools.product([0.0, 6.0], [0, 1], [1, 2]))
    assert res.dependence[6.0] > res.dependence[0.0]
    assert all(len(r.measurements) == 15 for r in res.rows)
    again = mc.coexistence_scan(m, 0.4, [0.0, 6.0], (8, 8), [1, 2], 200, 50, stride=10, threads=2)
    assert [r.fractions for r in again.rows] == [r.fractions for r in res.rows]


def test_critical_lambda_oracle():
    lc = mc.anisotropic_ising_critical_lambda(0.4)
    assert math.sinh(0.4) * math.sinh(0.4 * lc) == pytest.approx(1.0)
