import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lamlab import potential
from lamlab.blockspin import coarse_grain
from lamlab.groundcycle import (EnergyGraph, boundary_count, ground_states, min_mean_cycle,
                                minimal_cycles, minimal_period_word, peierls_audit, peierls_constant)
from lamlab.lattice import CapacityError

from conftest import TEST_MODELS
from oracles import brute_ground_words, brute_min_mean


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10 ** 6))
def test_karp_matches_brute_force(n, seed):
    W = np.random.default_rng(seed).integers(-5, 6, size=(n, n))
    value, cyc = min_mean_cycle(EnergyGraph(W))
    assert value == brute_min_mean(W)
    assert cyc.irreducible and cyc.mean_energy == value


def test_float_mode_agrees_with_exact():
    W = np.random.default_rng(1).integers(-5, 6, size=(6, 6))
    exact, _ = min_mean_cycle(EnergyGraph(W))
    approx, _ = min_mean_cycle(EnergyGraph(W / 3.0))
    assert abs(approx - float(exact) / 3) < 1e-12


def test_minimal_cycles_all_reach_minimum():
    W = np.array([[1, 0, 5], [0, 1, 5], [5, 5, 0]])
    cycles = minimal_cycles(EnergyGraph(W))
    assert [c.vertices for c in cycles] == [(2,), (0, 1)]
    assert all(c.mean_energy == 0 for c in cycles)


def test_minimal_cycles_capacity():
    with pytest.raises(CapacityError):
        minimal_cycles(EnergyGraph(np.zeros((13, 13), dtype=int)))


@pytest.mark.parametrize("name", sorted(TEST_MODELS))
def test_ground_states_match_periodic_enumeration(name):
    H = TEST_MODELS[name]()
    rep = ground_states(H, 2)
    best, words = brute_ground_words(H, 4)
    assert rep.specific_energy() == best
    assert set(rep.periods()) == words


def test_ising_report():
    rep = ground_states(potential.disagreement(), 1)
    assert rep.ground_blocks == [0, 1] and rep.specific_energy() == 0
    assert rep.peierls_c == Fraction(1, 2)
    assert rep.to_dict()["peierls_c"] == "1/2"


def test_antiferromagnet_reblocks():
    rep = ground_states(potential.agreement(), 1)
    assert rep.block_size == 2
    assert sorted(rep.periods()) == [(0, 1), (1, 0)]


def test_peierls_constant_inputs():
    m = coarse_grain(potential.disagreement(), 1)
    with pytest.raises(ValueError):
        peierls_constant(m, [])
    one = coarse_grain(potential.field([0]), 1)
    assert peierls_constant(one, [0]) == math.inf


@pytest.mark.parametrize("name", sorted(TEST_MODELS))
def test_peierls_audit_is_tight(name):
    rep = ground_states(TEST_MODELS[name](), 2)
    for q in rep.ground_blocks:
        a = peierls_audit(rep.block_model, rep.ground_blocks, q, rep.peierls_c, rep.shift, length=8)
        assert a.violations == 0
    if name == "ising_field":
        # the infimum is only approached by arbitrarily long excursions into the other phase
        return
    bigger = rep.peierls_c * Fraction(11, 10)
    fails = sum(peierls_audit(rep.block_model, rep.ground_blocks, q, bigger, rep.shift, length=8).violations
                for q in rep.ground_blocks)
    assert fails > 0


def test_boundary_count_and_period_word():
    assert boundary_count([0, 1, 0], [0, 1], 0) == 3
    assert boundary_count([1, 1, 1, 1], [0, 1], 0) == 4
    assert boundary_count([], [0], 0) == 0
    assert minimal_period_word((0, 1, 0, 1)) == (0, 1)
    assert minimal_period_word((0, 0, 1)) == (0, 0, 1)
