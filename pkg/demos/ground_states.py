# # Periodic ground states of 1D Hamiltonians
#
# A finite-range chain is cut into blocks of N spins. The energy of a periodic
# configuration then becomes the mean weight of a cycle in a graph on the blocks,
# so ground states are minimum-mean cycles.

from fractions import Fraction

from lamlab import potential
from lamlab.blockspin import coarse_grain
from lamlab.groundcycle import EnergyGraph, ground_states, min_mean_cycle, peierls_audit

# ## Ising chain
#
# Two ground states, all zeros and all ones. A domain wall costs 1 and makes
# two sites non-constant, so the Peierls constant is 1/2.

rep = ground_states(potential.disagreement(), 1)
print("periods:", rep.periods())
print("specific energy:", rep.specific_energy())
print("Peierls constant:", rep.peierls_c)

# ## Antiferromagnet
#
# With block size 1 the minimal cycle has length 2, so the chain is re-blocked
# with N = 2 and both phases of the alternating word come out.

rep = ground_states(potential.agreement(), 1)
print("block size:", rep.block_size, "periods:", sorted(rep.periods()))

# ## A field lifts the degeneracy

H = potential.Hamiltonian.combine([potential.disagreement(), potential.field([0, 1])], [1, Fraction(1, 10)])
rep = ground_states(H, 1)
print("periods:", rep.periods(), "c =", rep.peierls_c)

# The constant is checked by brute force on every 12-block excursion from the ground state.

audit = peierls_audit(rep.block_model, rep.ground_blocks, rep.ground_blocks[0], rep.peierls_c, rep.shift, 12)
print(f"{audit.checked} windows, {audit.violations} violations")

# ## The graph directly

m = coarse_grain(potential.disagreement(), 2)
mean, cycle = min_mean_cycle(EnergyGraph(m.phibar2))
print("min mean:", mean, "cycle:", [m.decode(b) for b in cycle.vertices])
