import itertools

import numpy as np
import pytest

from lamlab import potential
from lamlab.blockspin import BlockModel, block_digits, chain_energy, coarse_grain
from lamlab.lattice import CapacityError, Configuration, Window
from lamlab.potential import window_energy

from test_potential import random_hamiltonian


def _window_of_blocks(m, blocks, boundary):
    """Window over (boundary, blocks...) with the boundary block repeated outside."""
    N = m.block_size
    words = [m.decode(b) for b in (boundary, *blocks)]
    spins = np.concatenate(words)
    return Configuration(Window.from_shape((len(spins),), lo=(-N,)), spins,
                         background=np.array(m.decode(boundary)), label=0)


def test_ising_block_size_one():
    m = coarse_grain(potential.disagreement(), 1)
    assert [m.value(x) for x in m.phi1] == [0, 0]
    assert [[m.value(x) for x in row] for row in m.phi2] == [[0, 1], [1, 0]]


def test_digits_and_codec_round_trip():
    d = block_digits(3, 2)
    assert d.shape == (9, 2) and d[5].tolist() == [1, 2]
    m = coarse_grain(potential.disagreement(nspin=3), 2)
    for w in range(9):
        assert m.encode(m.decode(w)) == w


def test_ising_block_size_two():
    m = coarse_grain(potential.disagreement(), 2)
    # word 01 has one internal disagreement; 01 followed by 00 has one more
    assert m.value(m.phi1[m.encode((0, 1))]) == 1
    assert m.value(m.phi2[m.encode((0, 1)), m.encode((0, 0))]) == 1
    assert m.value(m.phi2[m.encode((0, 1)), m.encode((1, 0))]) == 0


@pytest.mark.parametrize("exact", [True, False])
def test_chain_energy_equals_window_energy(exact):
    rng = np.random.default_rng(3)
    for _ in range(10):
        H = random_hamiltonian(rng, 2, 2, exact=exact)
        N = max(H.range, 1)
        m = coarse_grain(H, N)
        for blocks in itertools.product(range(m.block_space_size), repeat=2):
            b = int(rng.integers(m.block_space_size))
            c = _window_of_blocks(m, blocks, b)
            ref = window_energy(c, H)
            got = chain_energy(blocks, m, b)
            if exact:
                assert got == ref
            else:
                assert abs(got - ref) <= 1e-12


def test_composition_of_block_sizes():
    # blocks of 4 are pairs of blocks of 2; the boundary z = (e, e) contributes one extra anchored block
    H = random_hamiltonian(np.random.default_rng(5), 2, 2)
    m2 = coarse_grain(H, 2)
    m4 = coarse_grain(H, 4)
    for a, b, c, d, e in itertools.product(range(4), repeat=5):
        x = m4.encode(m2.decode(a) + m2.decode(b))
        y = m4.encode(m2.decode(c) + m2.decode(d))
        z = m4.encode(m2.decode(e) + m2.decode(e))
        assert chain_energy([x, y], m4, z) == chain_energy([a, b, c, d], m2, e) + m2.value(m2.phibar2[e, e])


def test_capacity_and_argument_errors():
    with pytest.raises(CapacityError):
        coarse_grain(potential.disagreement(nspin=3), 9)
    with pytest.raises(ValueError):
        coarse_grain(potential.disagreement(dimension=2), 1)
    H = random_hamiltonian(np.random.default_rng(1), 2, 3)
    if H.range > 1:
        with pytest.raises(ValueError):
            coarse_grain(H, H.range - 1)


def test_json_round_trip():
    m = coarse_grain(potential.agreement(), 2)
    back = BlockModel.from_json(m.to_json())
    assert np.array_equal(back.phibar2, m.phibar2) and back.denominator == m.denominator
